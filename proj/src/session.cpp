#include "ctikit/infer/session.hpp"

#include <algorithm>
#include <future>
#include <mutex>
#include <nlohmann/json.hpp>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::infer {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

const ReasoningTemplates& ReasoningTemplates::standard() {
    static const ReasoningTemplates t{
        "You are assisting a threat analyst.\n\nInitial evidence:\n{e0}\n\nAnalyst request: {question}\n\n"
        "Current task: {focus}\n\nTopic: {topic}\n\nEntities:\n{entities}\n\nRelations:\n{relations}\n\n"
        "Retrieved evidence:\n{evidence}\n\nFindings from earlier tasks:\n{prior}\n\n"
        "Work through the evidence step by step and state your conclusion for the current task.",
        "Condense the analysis below into a short answer an analyst can act on.\n\nAnalysis:\n{analysis}\n\nAnswer:",
        {
            {Task::Attribution, "identify the threat actor, its techniques and any campaign"},
            {Task::Contextualization, "describe affected systems, attack infrastructure and impact"},
            {Task::Correlation, "link the activity to known CVE and CWE identifiers"},
            {Task::Prioritization,
             "rate severity; justify each CVSS base metric category (use NA when unknown) and the exploitation "
             "likelihood"},
            {Task::Remediation, "recommend tools, patches, mitigation steps and advisories"},
        }};
    return t;
}

ReasoningTemplates ReasoningTemplates::from_json(const json& j) {
    ReasoningTemplates t = standard();
    if (!j.is_object()) throw ConfigError("reasoning templates must be a JSON object");
    if (j.contains("reasoning")) t.reasoning = j["reasoning"].get<std::string>();
    if (j.contains("summary")) t.summary = j["summary"].get<std::string>();
    if (j.contains("focus")) {
        for (const auto& [name, v] : j["focus"].items()) {
            const auto task = task_from_name(name);
            if (!task) throw ConfigError("unknown task '" + name + "' in reasoning templates");
            t.focus[*task] = v.get<std::string>();
        }
    }
    if (t.summary.find("{analysis}") == std::string::npos)
        throw TemplateError("summary template needs an {analysis} placeholder");
    return t;
}

const std::string& SessionConfig::backend_for(Module m) const {
    auto it = stage_backends.find(m);
    return it == stage_backends.end() ? backend_id : it->second;
}

std::string FinalResponse::render() const {
    auto section = [](std::string_view title, const std::string& body) {
        return "## " + std::string(title) + "\n" + (body.empty() ? "(none)" : body) + "\n";
    };
    return section("Topic", topic) + "\n" + section("Entities", entities) + "\n" + section("Relations", relations) +
           "\n" + section("Evidence", evidence) + "\n" + section("Reasoning", reasoning) + "\n" +
           section("Summary", summary);
}

const StageRecord* SessionTranscript::find(Task task, Module module) const {
    for (const auto& s : stages)
        if (s.task == task && s.module == module) return &s;
    return nullptr;
}

std::set<Module> SessionTranscript::modules(Task task) const {
    std::set<Module> out;
    for (const auto& s : stages)
        if (s.task == task) out.insert(s.module);
    return out;
}

namespace {

struct Context {
    Context(const SessionConfig& c, std::string e, std::string q) : cfg(c), e0(std::move(e)), question(std::move(q)) {}

    const SessionConfig& cfg;
    std::string e0;
    std::string question;
    Clock::time_point origin = Clock::now();
    std::mutex mu;
    std::vector<StageTiming> timings;

    modelio::SamplingParams params(Task t, Module m) const {
        modelio::SamplingParams p = cfg.params;
        p.seed = derive_seed(cfg.seed, std::string(task_name(t)) + "/" + std::string(module_name(m)));
        return p;
    }

    template <typename Fn>
    StageRecord timed(Task t, Module m, Fn&& fn) {
        const auto start = Clock::now() - origin;
        StageRecord r;
        r.task = t;
        r.module = m;
        try {
            fn(r);
        } catch (const StageError&) {
            throw;
        } catch (const BackendError& e) {
            throw StageError(std::string(module_name(m)), e.what());
        }
        const auto end = Clock::now() - origin;
        std::lock_guard lock(mu);
        timings.push_back({t, m, std::chrono::duration_cast<std::chrono::nanoseconds>(start),
                           std::chrono::duration_cast<std::chrono::nanoseconds>(end)});
        return r;
    }
};

std::string render_entities(const std::vector<Entity>& es) {
    std::vector<std::string> lines;
    for (const auto& e : es) lines.push_back("- " + e.text + " (" + std::string(category_name(e.category)) + ")");
    return text::join(lines, "\n");
}

std::string render_relations(const std::vector<Entity>& es, const std::vector<RelationTriple>& rs) {
    std::vector<std::string> lines;
    for (const auto& r : rs) lines.push_back("- " + es[r.subject].text + " | " + r.relation + " | " + es[r.object].text);
    return text::join(lines, "\n");
}

std::string render_evidence(const std::vector<Document>& ds) {
    std::vector<std::string> lines;
    for (const auto& d : ds) lines.push_back("- [" + d.id + "] " + d.text + (d.source.empty() ? "" : " (source: " + d.source + ")"));
    return text::join(lines, "\n");
}

std::string render_targets(const std::vector<Target>& ts) {
    std::vector<std::string> names;
    for (Target t : ts) names.emplace_back(target_name(t));
    return text::join(names, ", ");
}

std::string fill(std::string tmpl, const std::map<std::string, std::string>& slots) {
    // Single pass so slot values containing braces are not re-expanded.
    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find('{', pos);
        if (open == std::string::npos) break;
        const auto close = tmpl.find('}', open);
        if (close == std::string::npos) break;
        auto it = slots.find(tmpl.substr(open + 1, close - open - 1));
        out.append(tmpl, pos, open - pos);
        if (it != slots.end()) {
            out += it->second;
        } else {
            out.append(tmpl, open, close - open + 1);
        }
        pos = close + 1;
    }
    out.append(tmpl, pos);
    return out;
}

}  // namespace

SessionTranscript run_session(std::string_view e0, std::string_view question, const SessionConfig& cfg) {
    if (!cfg.registry) throw ConfigError("session has no backend registry");
    if (!cfg.topic) throw ConfigError("session has no topic provider");

    SessionTranscript tr;
    tr.e0 = std::string(e0);
    tr.question = std::string(question);
    Context ctx{cfg, tr.e0, tr.question};

    try {
        tr.plan = plan_tasks(question, e0, cfg.graph, *cfg.topic, cfg.topic_threshold);
    } catch (const StageError& e) {
        tr.error = e.what();
        tr.error_stage = e.stage();
        return tr;
    }
    const TaskPlan& plan = *tr.plan;
    const std::vector<Task> tasks = plan.tasks();

    auto on = [&](Task t, Module m) { return plan.modules.at(t).contains(m); };
    if (std::any_of(tasks.begin(), tasks.end(), [&](Task t) { return on(t, Module::RAG); }) &&
        (!cfg.retriever || !cfg.ranker || !cfg.cache))
        throw ConfigError("retrieval stages need a retriever, a ranker and a cache");

    struct Perception {
        std::shared_future<StageRecord> tom, ner, rel, rag;
    };
    std::map<Task, Perception> futures;

    for (Task t : tasks) {
        Perception& p = futures[t];
        if (on(t, Module::TOM)) {
            p.tom = std::async(std::launch::async, [&ctx, &plan, t] {
                return ctx.timed(t, Module::TOM, [&](StageRecord& r) {
                    r.targets = t == plan.task ? plan.targets : ctx.cfg.topic->resolve_targets(ctx.question, t);
                    if (r.targets.empty()) r.targets = ctx.cfg.graph.targets.at(t);
                });
            }).share();
        }
        if (on(t, Module::NER)) {
            p.ner = std::async(std::launch::async, [&ctx, t] {
                return ctx.timed(t, Module::NER, [&](StageRecord& r) {
                    auto res = extract_entities(ctx.e0, t, *ctx.cfg.registry, ctx.cfg.backend_for(Module::NER),
                                                ctx.cfg.demos, ctx.params(t, Module::NER));
                    r.entities = std::move(res.entities);
                    r.retries = res.retries;
                });
            }).share();
        }
        if (on(t, Module::REL)) {
            p.rel = std::async(std::launch::async, [&ctx, t, ner = p.ner] {
                const std::vector<Entity> entities = ner.valid() ? ner.get().entities : std::vector<Entity>{};
                return ctx.timed(t, Module::REL, [&](StageRecord& r) {
                    if (entities.empty()) return;
                    auto res = extract_relations(ctx.e0, entities, *ctx.cfg.registry, ctx.cfg.backend_for(Module::REL),
                                                 ctx.cfg.demos, ctx.params(t, Module::REL));
                    r.relations = std::move(res.relations);
                    r.warnings = std::move(res.warnings);
                    r.retries = res.retries;
                });
            }).share();
        }
        if (on(t, Module::RAG)) {
            p.rag = std::async(std::launch::async, [&ctx, t, tom = p.tom, ner = p.ner] {
                std::vector<Target> targets = tom.valid() ? tom.get().targets : ctx.cfg.graph.targets.at(t);
                const std::vector<Entity> entities = ner.valid() ? ner.get().entities : std::vector<Entity>{};
                return ctx.timed(t, Module::RAG, [&](StageRecord& r) {
                    std::vector<std::string> names;
                    for (const auto& e : entities) {
                        const std::string c = text::canonical_label(e.text);
                        if (std::find(names.begin(), names.end(), c) == names.end()) names.push_back(c);
                        if (names.size() >= ctx.cfg.entities_per_target) break;
                    }
                    if (names.empty()) names.emplace_back();
                    std::set<std::string> seen;
                    for (Target target : targets) {
                        for (const auto& name : names) {
                            const CacheKey key = CacheKey::make(t, target, name);
                            const std::string query =
                                std::string(target_name(target)) + (name.empty() ? "" : " " + name);
                            auto res = retrieve(key, query, *ctx.cfg.cache, *ctx.cfg.retriever, *ctx.cfg.ranker,
                                                ctx.e0, ctx.cfg.bypass_cache);
                            r.cache_keys.push_back(key.str());
                            for (auto& d : res.documents)
                                if (seen.insert(d.id).second) r.evidence.push_back(std::move(d));
                        }
                    }
                });
            }).share();
        }
    }

    // Collect every perception result before deciding on failure so no
    // stage thread outlives the context.
    std::optional<StageError> failure;
    for (Task t : tasks) {
        Perception& p = futures[t];
        for (auto* f : {&p.tom, &p.ner, &p.rel, &p.rag}) {
            if (!f->valid()) continue;
            try {
                tr.stages.push_back(f->get());
            } catch (const StageError& e) {
                if (!failure) failure = e;
            } catch (const Error& e) {
                if (!failure) failure = StageError("perception", e.what());
            }
        }
    }

    auto record = [&](Task t, Module m) -> const StageRecord* {
        for (const auto& s : tr.stages)
            if (s.task == t && s.module == m) return &s;
        return nullptr;
    };

    if (!failure) {
        std::vector<std::string> prior;
        for (Task t : tasks) {
            try {
                const StageRecord* tom = record(t, Module::TOM);
                const StageRecord* ner = record(t, Module::NER);
                const StageRecord* rel = record(t, Module::REL);
                const StageRecord* rag = record(t, Module::RAG);
                const std::vector<Entity> none;
                const auto& ents = ner ? ner->entities : none;
                const std::map<std::string, std::string> slots{
                    {"e0", ctx.e0},
                    {"question", ctx.question},
                    {"focus", std::string(task_name(t)) + ": " + cfg.templates.focus.at(t)},
                    {"topic", std::string(task_name(t)) + " / " +
                                  render_targets(tom ? tom->targets : cfg.graph.targets.at(t))},
                    {"entities", ner ? render_entities(ents) : "(not used for this task)"},
                    {"relations", rel ? render_relations(ents, rel->relations) : "(not used for this task)"},
                    {"evidence", rag ? render_evidence(rag->evidence) : "(not used for this task)"},
                    {"prior", prior.empty() ? "(none)" : text::join(prior, "\n\n")},
                };
                StageRecord rea;
                if (on(t, Module::REA)) {
                    rea = ctx.timed(t, Module::REA, [&](StageRecord& r) {
                        const std::string prompt = fill(cfg.templates.reasoning, slots);
                        r.text = modelio::generate(*cfg.registry, cfg.backend_for(Module::REA), prompt,
                                                   ctx.params(t, Module::REA))
                                     .text;
                    });
                    tr.stages.push_back(rea);
                }
                if (on(t, Module::SUM)) {
                    auto sum = ctx.timed(t, Module::SUM, [&](StageRecord& r) {
                        const std::string prompt = fill(cfg.templates.summary, {{"analysis", rea.text}});
                        r.text = modelio::generate(*cfg.registry, cfg.backend_for(Module::SUM), prompt,
                                                   ctx.params(t, Module::SUM))
                                     .text;
                    });
                    tr.stages.push_back(sum);
                    prior.push_back(std::string(task_name(t)) + " analysis:\n" + rea.text + "\n" +
                                    std::string(task_name(t)) + " summary:\n" + sum.text);
                } else if (on(t, Module::REA)) {
                    prior.push_back(std::string(task_name(t)) + " analysis:\n" + rea.text);
                }
            } catch (const StageError& e) {
                failure = e;
                break;
            }
        }
    }

    std::stable_sort(tr.stages.begin(), tr.stages.end(), [](const StageRecord& a, const StageRecord& b) {
        return std::pair(a.task, a.module) < std::pair(b.task, b.module);
    });
    tr.timings = std::move(ctx.timings);

    if (failure) {
        tr.error = failure->what();
        tr.error_stage = failure->stage();
        return tr;
    }

    // Response sections gather every executed task; reasoning and summary
    // come from the requested task.
    std::vector<std::string> ents, rels, evid;
    for (Task t : tasks) {
        const StageRecord* ner = record(t, Module::NER);
        const StageRecord* rel = record(t, Module::REL);
        const StageRecord* rag = record(t, Module::RAG);
        if (ner && !ner->entities.empty()) ents.push_back(render_entities(ner->entities));
        if (ner && rel && !rel->relations.empty()) rels.push_back(render_relations(ner->entities, rel->relations));
        if (rag && !rag->evidence.empty()) evid.push_back(render_evidence(rag->evidence));
    }
    tr.response.topic = std::string(task_name(plan.task)) + ": " + render_targets(plan.targets);
    tr.response.entities = text::join(ents, "\n");
    tr.response.relations = text::join(rels, "\n");
    tr.response.evidence = text::join(evid, "\n");
    if (const auto* r = record(plan.task, Module::REA)) tr.response.reasoning = r->text;
    if (const auto* s = record(plan.task, Module::SUM)) tr.response.summary = s->text;
    return tr;
}

json to_json(const SessionTranscript& t) {
    json j = {{"e0", t.e0}, {"question", t.question}};
    if (t.plan) {
        json mods = json::object();
        for (const auto& [task, ms] : t.plan->modules) {
            json a = json::array();
            for (Module m : ms) a.push_back(std::string(module_name(m)));
            mods[std::string(task_name(task))] = a;
        }
        json targets = json::array(), prereqs = json::array();
        for (Target x : t.plan->targets) targets.push_back(std::string(target_name(x)));
        for (Task x : t.plan->prerequisites) prereqs.push_back(std::string(task_name(x)));
        j["plan"] = {{"task", std::string(task_name(t.plan->task))},
                     {"targets", targets},
                     {"prerequisites", prereqs},
                     {"modules", mods}};
    }
    json stages = json::array();
    for (const auto& s : t.stages) {
        json r = {{"task", std::string(task_name(s.task))}, {"module", std::string(module_name(s.module))}};
        switch (s.module) {
            case Module::TOM: {
                json a = json::array();
                for (Target x : s.targets) a.push_back(std::string(target_name(x)));
                r["targets"] = a;
                break;
            }
            case Module::NER: {
                json a = json::array();
                for (const auto& e : s.entities) a.push_back(to_json(e));
                r["entities"] = a;
                break;
            }
            case Module::REL: {
                json a = json::array();
                for (const auto& x : s.relations)
                    a.push_back({{"subject", x.subject}, {"relation", x.relation}, {"object", x.object}});
                r["relations"] = a;
                break;
            }
            case Module::RAG:
                r["evidence"] = to_json(s.evidence);
                r["cache_keys"] = s.cache_keys;
                break;
            case Module::REA:
            case Module::SUM: r["text"] = s.text; break;
        }
        if (!s.warnings.empty()) r["warnings"] = s.warnings;
        if (s.retries) r["retries"] = s.retries;
        stages.push_back(r);
    }
    j["stages"] = stages;
    j["response"] = {{"topic", t.response.topic},         {"entities", t.response.entities},
                     {"relations", t.response.relations}, {"evidence", t.response.evidence},
                     {"reasoning", t.response.reasoning}, {"summary", t.response.summary}};
    if (t.error) j["error"] = {{"stage", t.error_stage.value_or("")}, {"message", *t.error}};
    return j;
}

json timings_json(const SessionTranscript& t) {
    json a = json::array();
    for (const auto& x : t.timings)
        a.push_back({{"task", std::string(task_name(x.task))},
                     {"module", std::string(module_name(x.module))},
                     {"start_ns", x.start.count()},
                     {"end_ns", x.end.count()}});
    return a;
}

const SessionTranscript& Session::ask(std::string_view question) {
    std::string e0 = e0_;
    for (const auto& turn : turns_)
        if (!turn.error && !turn.response.summary.empty())
            e0 += "\n\nEarlier finding (" + turn.question + "): " + turn.response.summary;
    turns_.push_back(run_session(e0, question, config_));
    return turns_.back();
}

}  // namespace ctikit::infer
