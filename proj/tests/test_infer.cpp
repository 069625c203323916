#include <gtest/gtest.h>

#include <atomic>
#include <nlohmann/json.hpp>
#include <thread>

#include "ctikit/error.hpp"
#include "ctikit/infer/session.hpp"
#include "ctikit/text.hpp"

using namespace ctikit;
using namespace ctikit::infer;
using nlohmann::json;

namespace {

const std::string kReport =
    "APT28 operators relied on C2 communication over HTTPS to stage follow-on payloads on compromised routers.";

json example_entities() {
    return {{"entities",
             {{{"text", "APT28"}, {"category", "threat actor"}},
              {{"text", "C2 communication"}, {"category", "infrastructure"}}}}};
}

json example_relations() {
    return {{"relations", {{{"subject", "APT28"}, {"relation", "is associated with"}, {"object", "C2 communication"}}}}};
}

modelio::BackendRegistry scripted(std::function<std::string(const modelio::CompletionRequest&)> fn) {
    modelio::BackendRegistry reg;
    reg.add("scripted", std::make_shared<modelio::FunctionBackend>(std::move(fn)));
    return reg;
}

struct Harness {
    modelio::BackendRegistry registry;
    std::shared_ptr<MockRetriever> retriever = std::make_shared<MockRetriever>();
    RetrievalCache cache{1024};
    SessionConfig config;

    explicit Harness(std::shared_ptr<modelio::Backend> backend = std::make_shared<modelio::MockBackend>()) {
        registry.add("mock", std::move(backend));
        config.registry = &registry;
        config.backend_id = "mock";
        config.topic = std::make_shared<KeywordTopicProvider>();
        config.retriever = retriever;
        config.ranker = std::make_shared<FetchOrderRanker>();
        config.cache = &cache;
        config.seed = 5;
    }
};

const std::map<Task, std::string> kQuestions{
    {Task::Attribution, "What threat actor is likely responsible?"},
    {Task::Contextualization, "Which systems are affected and what is the impact?"},
    {Task::Correlation, "What known vulnerabilities (CVEs) are commonly associated with this activity?"},
    {Task::Prioritization, "How severe is this by CVSS and EPSS?"},
    {Task::Remediation, "Which patch or mitigation should we apply?"},
};

}  // namespace

TEST(PlanTasks, AttributionQuestion) {
    KeywordTopicProvider topic;
    const auto plan = plan_tasks("what threat actor is likely responsible?", kReport, TaskGraph::standard(), topic);
    EXPECT_EQ(plan.task, Task::Attribution);
    EXPECT_EQ(plan.targets, std::vector<Target>{Target::ThreatActor});
    EXPECT_TRUE(plan.prerequisites.empty());
}

TEST(PlanTasks, CorrelationQuestion) {
    KeywordTopicProvider topic;
    const auto plan = plan_tasks("What known vulnerabilities (CVEs) are commonly associated with this activity?",
                                 kReport, TaskGraph::standard(), topic);
    EXPECT_EQ(plan.task, Task::Correlation);
    EXPECT_EQ(plan.targets, std::vector<Target>{Target::CveId});
    EXPECT_EQ(plan.prerequisites, (std::vector<Task>{Task::Attribution, Task::Contextualization}));
    EXPECT_EQ(plan.tasks().back(), Task::Correlation);
}

TEST(PlanTasks, UnresolvedIntent) {
    KeywordTopicProvider topic;
    try {
        plan_tasks("tell me a joke", kReport, TaskGraph::standard(), topic);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "TOM");
    }
    EXPECT_THROW(plan_tasks("", kReport, TaskGraph::standard(), topic), ValidationError);
}

TEST(PlanTasks, TargetsDefaultToWholeTask) {
    KeywordTopicProvider topic;
    const auto plan = plan_tasks("Prioritize this", kReport, TaskGraph::standard(), topic);
    EXPECT_EQ(plan.task, Task::Prioritization);
    EXPECT_EQ(plan.targets, TaskGraph::standard().targets.at(Task::Prioritization));
}

TEST(PlanTasks, BackendProvider) {
    const auto reg = scripted([](const modelio::CompletionRequest& r) {
        if (r.schema == "topic") return json{{"task", "Remediation"}}.dump();
        return json{{"targets", {"code_patch"}}}.dump();
    });
    BackendTopicProvider topic(reg, "scripted");
    const auto plan = plan_tasks("anything", kReport, TaskGraph::standard(), topic);
    EXPECT_EQ(plan.task, Task::Remediation);
    EXPECT_EQ(plan.targets, std::vector<Target>{Target::CodePatch});
    EXPECT_EQ(plan.prerequisites.size(), 4u);
}

TEST(Extraction, ExampleEntities) {
    const auto reg = scripted([](const modelio::CompletionRequest&) { return example_entities().dump(); });
    const auto out = extract_entities(kReport, Task::Attribution, reg, "scripted", ExtractionDemos::builtin());
    ASSERT_EQ(out.entities.size(), 2u);
    EXPECT_EQ(out.entities[0].text, "APT28");
    EXPECT_EQ(out.entities[0].category, EntityCategory::ThreatActor);
    EXPECT_EQ(out.entities[1].category, EntityCategory::Infrastructure);
    EXPECT_EQ(kReport.substr(out.entities[1].begin, out.entities[1].end - out.entities[1].begin), "C2 communication");
    EXPECT_EQ(out.retries, 0);
}

TEST(Extraction, PromptCarriesTaskDemos) {
    std::string prompt;
    const auto reg = scripted([&](const modelio::CompletionRequest& r) {
        prompt = modelio::prompt_text(r);
        return json{{"entities", json::array()}}.dump();
    });
    const auto& demos = ExtractionDemos::builtin();
    extract_entities(kReport, Task::Remediation, reg, "scripted", demos);
    ASSERT_FALSE(demos.entities.at(Task::Remediation).empty());
    EXPECT_NE(prompt.find(demos.entities.at(Task::Remediation)[0].text), std::string::npos);
    EXPECT_NE(prompt.find(kReport), std::string::npos);
}

TEST(Extraction, EmptyTextNeedsNoBackend) {
    std::atomic<int> calls{0};
    const auto reg = scripted([&](const modelio::CompletionRequest&) {
        ++calls;
        return std::string("{}");
    });
    EXPECT_TRUE(extract_entities("", Task::Attribution, reg, "scripted", ExtractionDemos::builtin()).entities.empty());
    EXPECT_EQ(calls.load(), 0);
}

TEST(Extraction, OneRepairRetry) {
    std::atomic<int> calls{0};
    const auto reg = scripted([&](const modelio::CompletionRequest&) {
        return calls++ == 0 ? std::string("{\"entities\": [{\"text\": 5}]}") : example_entities().dump();
    });
    const auto out = extract_entities(kReport, Task::Attribution, reg, "scripted", ExtractionDemos::builtin());
    EXPECT_EQ(out.retries, 1);
    EXPECT_EQ(out.entities.size(), 2u);

    const auto broken = scripted([](const modelio::CompletionRequest&) { return std::string("not json"); });
    try {
        extract_entities(kReport, Task::Attribution, broken, "scripted", ExtractionDemos::builtin());
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "NER");
    }
}

TEST(Extraction, EntityMustOccurInText) {
    const auto reg = scripted([](const modelio::CompletionRequest&) {
        return json{{"entities", {{{"text", "Sandworm"}, {"category", "threat actor"}}}}}.dump();
    });
    EXPECT_THROW(extract_entities(kReport, Task::Attribution, reg, "scripted", ExtractionDemos::builtin()), StageError);
}

TEST(Relations, ExampleTriple) {
    const auto reg = scripted([](const modelio::CompletionRequest& r) {
        return r.schema == "relations" ? example_relations().dump() : example_entities().dump();
    });
    const auto ents = extract_entities(kReport, Task::Attribution, reg, "scripted", ExtractionDemos::builtin()).entities;
    const auto rel = extract_relations(kReport, ents, reg, "scripted", ExtractionDemos::builtin());
    ASSERT_EQ(rel.relations.size(), 1u);
    EXPECT_EQ(ents[rel.relations[0].subject].text, "APT28");
    EXPECT_EQ(rel.relations[0].relation, "is associated with");
    EXPECT_EQ(ents[rel.relations[0].object].text, "C2 communication");
    EXPECT_TRUE(rel.warnings.empty());
}

TEST(Relations, NoTriplesAndUnknownEntities) {
    const std::vector<Entity> one{{"APT28", EntityCategory::ThreatActor, 0, 5}};
    const auto none = scripted([](const modelio::CompletionRequest&) { return json{{"relations", json::array()}}.dump(); });
    EXPECT_TRUE(extract_relations(kReport, one, none, "scripted", ExtractionDemos::builtin()).relations.empty());

    const auto stray = scripted([](const modelio::CompletionRequest&) {
        return json{{"relations", {{{"subject", "apt28"}, {"relation", "uses"}, {"object", "Mimikatz"}}}}}.dump();
    });
    const auto out = extract_relations(kReport, one, stray, "scripted", ExtractionDemos::builtin());
    EXPECT_TRUE(out.relations.empty());
    ASSERT_EQ(out.warnings.size(), 1u);
    EXPECT_NE(out.warnings[0].find("Mimikatz"), std::string::npos);
    EXPECT_THROW(extract_relations(kReport, {}, stray, "scripted", ExtractionDemos::builtin()), ValidationError);
}

TEST(Cache, HitIsIdenticalWithoutFetch) {
    RetrievalCache cache(8);
    MockRetriever retriever;
    FetchOrderRanker ranker;
    const auto key = CacheKey::make(Task::Attribution, Target::ThreatActor, "APT28");
    const auto first = retrieve(key, "q", cache, retriever, ranker, kReport);
    EXPECT_FALSE(first.cache_hit);
    EXPECT_EQ(retriever.calls(), 1u);
    const auto second = retrieve(key, "q", cache, retriever, ranker, kReport);
    EXPECT_TRUE(second.cache_hit);
    EXPECT_EQ(retriever.calls(), 1u);
    EXPECT_EQ(to_json(first.documents).dump(), to_json(second.documents).dump());
    retrieve(key, "q", cache, retriever, ranker, kReport, true);
    EXPECT_EQ(retriever.calls(), 2u);
}

TEST(Cache, LeastRecentIsEvicted) {
    LruCache<std::string, int> cache(2);
    cache.insert("A", 1);
    cache.insert("B", 2);
    cache.insert("C", 3);
    EXPECT_FALSE(cache.get("A").has_value());
    EXPECT_EQ(cache.get("B"), 2);
    EXPECT_EQ(cache.get("C"), 3);
    EXPECT_EQ(cache.stats().evictions, 1u);

    LruCache<std::string, int> touched(2);
    touched.insert("A", 1);
    touched.insert("B", 2);
    touched.get("A");
    touched.insert("C", 3);
    EXPECT_TRUE(touched.contains("A"));
    EXPECT_FALSE(touched.contains("B"));
}

TEST(Cache, CaseVariantsShareEntry) {
    RetrievalCache cache(8);
    MockRetriever retriever;
    FetchOrderRanker ranker;
    retrieve(CacheKey::make(Task::Attribution, Target::ThreatActor, "APT28"), "q", cache, retriever, ranker, "");
    retrieve(CacheKey::make(Task::Attribution, Target::ThreatActor, "  apt28 "), "q", cache, retriever, ranker, "");
    retrieve(CacheKey::make(Task::Attribution, Target::ThreatActor, "Apt28"), "q", cache, retriever, ranker, "");
    EXPECT_EQ(cache.size(), 1u);
    EXPECT_EQ(retriever.calls(), 1u);
    EXPECT_EQ(CacheKey::make(Task::Correlation, Target::CveId, "Fancy \t Bear").entity, "fancy bear");
}

TEST(Cache, ValuesAreMonotoneUnderConcurrency) {
    LruCache<int, int> cache(64);
    std::vector<std::jthread> threads;
    std::vector<std::vector<std::pair<int, int>>> seen(8);
    for (int w = 0; w < 8; ++w)
        threads.emplace_back([&, w] {
            for (int i = 0; i < 2000; ++i) {
                const int key = i % 16;
                seen[w].emplace_back(key, cache.insert(key, w * 100000 + i));
                if (auto v = cache.get(key)) seen[w].emplace_back(key, *v);
            }
        });
    threads.clear();
    // Capacity exceeds the key count, so nothing is evicted and every
    // observation of a key must agree.
    std::map<int, int> first;
    for (const auto& obs : seen)
        for (auto [k, v] : obs) {
            auto [it, fresh] = first.emplace(k, v);
            EXPECT_EQ(it->second, v);
        }
}

TEST(Cache, TtlExpiry) {
    LruCache<std::string, int> cache(4, std::chrono::milliseconds(1));
    cache.insert("A", 1);
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    EXPECT_FALSE(cache.get("A").has_value());
}

TEST(Cache, RetrieverFailureLeavesCacheUntouched) {
    struct Failing final : Retriever {
        std::vector<Document> fetch(const CacheKey&, std::string_view) override { throw TransportError("down"); }
    } failing;
    RetrievalCache cache(8);
    FetchOrderRanker ranker;
    try {
        retrieve(CacheKey::make(Task::Attribution, Target::Ttps, "x"), "q", cache, failing, ranker, "");
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "RAG");
    }
    EXPECT_EQ(cache.size(), 0u);
}

TEST(Cache, FileRoundTrip) {
    RetrievalCache cache(8);
    MockRetriever retriever;
    FetchOrderRanker ranker;
    for (const char* e : {"a", "b", "c"})
        retrieve(CacheKey::make(Task::Remediation, Target::ToolUse, e), "q", cache, retriever, ranker, "");
    const auto text = write_cache(cache, json::object());
    RetrievalCache back(8);
    read_cache(text, back);
    EXPECT_EQ(back.entries(), cache.entries());
}

TEST(Ranker, BackendOrderWithFallback) {
    const auto reg = scripted([](const modelio::CompletionRequest&) { return json{{"order", {"d3", "zz", "d1", "d3"}}}.dump(); });
    BackendRanker ranker(reg, "scripted");
    std::vector<Document> docs{{"d1", "s", "one"}, {"d2", "s", "two"}, {"d3", "s", "three"}};
    const auto ranked = ranker.rank(docs, "ctx");
    EXPECT_EQ(ranked[0].id, "d3");
    EXPECT_EQ(ranked[1].id, "d1");
    EXPECT_EQ(ranked[2].id, "d2");
    const auto junk = scripted([](const modelio::CompletionRequest&) { return std::string("nonsense"); });
    BackendRanker fallback(junk, "scripted");
    EXPECT_EQ(fallback.rank(docs, "ctx"), docs);
}

TEST(Session, AttributionHasSixStages) {
    Harness h;
    const auto tr = run_session(kReport, kQuestions.at(Task::Attribution), h.config);
    ASSERT_FALSE(tr.error) << *tr.error;
    EXPECT_EQ(tr.stages.size(), 6u);
    EXPECT_EQ(tr.modules(Task::Attribution),
              (std::set<Module>{Module::TOM, Module::NER, Module::REL, Module::RAG, Module::REA, Module::SUM}));
    EXPECT_FALSE(tr.response.summary.empty());
    const auto rendered = tr.response.render();
    for (const char* s : {"## Topic", "## Entities", "## Relations", "## Evidence", "## Reasoning", "## Summary"})
        EXPECT_NE(rendered.find(s), std::string::npos);
}

TEST(Session, ContextualizationSkipsRetrieval) {
    Harness h;
    const auto tr = run_session(kReport, kQuestions.at(Task::Contextualization), h.config);
    ASSERT_FALSE(tr.error);
    EXPECT_EQ(tr.find(Task::Contextualization, Module::RAG), nullptr);
    EXPECT_NE(tr.find(Task::Contextualization, Module::NER), nullptr);
}

TEST(Session, ModuleSetsMatchMatrixForEveryTask) {
    const auto& g = TaskGraph::standard();
    for (const auto& [task, question] : kQuestions) {
        Harness h;
        const auto tr = run_session(kReport, question, h.config);
        ASSERT_FALSE(tr.error) << *tr.error;
        ASSERT_TRUE(tr.plan);
        EXPECT_EQ(tr.plan->task, task);
        for (Task t : tr.plan->tasks()) EXPECT_EQ(tr.modules(t), g.modules.at(t)) << task_name(t);
        std::set<Task> executed;
        for (const auto& s : tr.stages) executed.insert(s.task);
        EXPECT_EQ(executed.size(), tr.plan->tasks().size());
    }
}

TEST(Session, ReasoningWaitsForPrerequisites) {
    Rng seed_rng(77);
    std::mutex mu;
    auto delayed = std::make_shared<modelio::DelayedBackend>(std::make_shared<modelio::MockBackend>(), [&] {
        std::lock_guard lock(mu);
        return std::chrono::microseconds(seed_rng.index(400));
    });
    for (int run = 0; run < 20; ++run) {
        Harness h(delayed);
        const auto tr = run_session(kReport, kQuestions.at(Task::Correlation), h.config);
        ASSERT_FALSE(tr.error);
        std::chrono::nanoseconds prior_done{0}, rea3_start{-1};
        for (const auto& t : tr.timings) {
            if ((t.module == Module::REA || t.module == Module::SUM) && t.task != Task::Correlation)
                prior_done = std::max(prior_done, t.end);
            if (t.module == Module::REA && t.task == Task::Correlation) rea3_start = t.start;
        }
        EXPECT_GE(rea3_start, prior_done);
    }
}

TEST(Session, PriorSummariesFeedLaterReasoning) {
    std::mutex mu;
    std::vector<std::string> prompts;
    auto recorder = std::make_shared<modelio::FunctionBackend>([&](const modelio::CompletionRequest& r) {
        std::lock_guard lock(mu);
        prompts.push_back(modelio::prompt_text(r));
        if (r.mode == modelio::OutputMode::Structured) return json{{r.schema, json::array()}}.dump();
        return "reply-" + std::to_string(prompts.size());
    });
    Harness h(recorder);
    const auto tr = run_session(kReport, kQuestions.at(Task::Correlation), h.config);
    ASSERT_FALSE(tr.error);
    const auto* sum1 = tr.find(Task::Attribution, Module::SUM);
    const auto* rea3 = tr.find(Task::Correlation, Module::REA);
    ASSERT_TRUE(sum1 && rea3);
    bool found = false;
    for (const auto& p : prompts)
        if (p.find("Current task: Correlation") != std::string::npos) found = p.find(sum1->text) != std::string::npos;
    EXPECT_TRUE(found);
}

TEST(Session, StageFailureIsReported) {
    auto failing = std::make_shared<modelio::FunctionBackend>([](const modelio::CompletionRequest& r) -> std::string {
        if (r.mode == modelio::OutputMode::Text) throw BackendError("reasoning backend offline");
        return json{{r.schema, json::array()}}.dump();
    });
    Harness h(failing);
    const auto tr = run_session(kReport, kQuestions.at(Task::Attribution), h.config);
    ASSERT_TRUE(tr.error);
    EXPECT_EQ(tr.error_stage, "REA");
    EXPECT_NE(tr.find(Task::Attribution, Module::NER), nullptr);
    EXPECT_EQ(tr.find(Task::Attribution, Module::SUM), nullptr);
}

TEST(Session, TranscriptBytesAreReproducible) {
    Harness a, b;
    const auto x = run_session(kReport, kQuestions.at(Task::Remediation), a.config);
    const auto y = run_session(kReport, kQuestions.at(Task::Remediation), b.config);
    EXPECT_EQ(to_json(x).dump(), to_json(y).dump());
    EXPECT_EQ(timings_json(x).size(), x.timings.size());
}

TEST(Session, TurnsAccumulate) {
    Harness h;
    Session s(kReport, h.config);
    s.ask(kQuestions.at(Task::Attribution));
    const auto& second = s.ask(kQuestions.at(Task::Prioritization));
    ASSERT_EQ(s.turns().size(), 2u);
    EXPECT_NE(second.e0.find(s.turns()[0].response.summary), std::string::npos);
    EXPECT_EQ(second.e0.rfind(kReport, 0), 0u);
}
