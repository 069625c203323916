#include <gtest/gtest.h>

#include <algorithm>
#include <memory>
#include <nlohmann/json.hpp>

#include "ctikit/corpusgen.hpp"
#include "ctikit/error.hpp"
#include "support/fixtures.hpp"

using namespace ctikit;
using namespace ctikit::corpusgen;
using nlohmann::json;

namespace {

modelio::BackendRegistry mocks(int n) {
    modelio::BackendRegistry reg;
    for (int i = 0; i < n; ++i) reg.add("mock-" + std::string(1, char('a' + i)), std::make_shared<modelio::MockBackend>());
    return reg;
}

ingest::ThreatStore store_of(int n) {
    std::vector<ingest::ThreatRecord> records;
    for (int i = 0; i < n; ++i) records.push_back(fixtures::parse(fixtures::full_raw(i)));
    return ingest::merge_store(records);
}

}  // namespace

TEST(Prompt, DemoPrecedesMetadata) {
    const PromptTemplate t{TemplateKind::Generation, "G|{demo}|{meta}"};
    EXPECT_EQ(build_generation_prompt(t, "S", "M"), "G|S|M");
}

TEST(Prompt, KindAndPlaceholderChecks) {
    const PromptTemplate rev{TemplateKind::Revision, "R {draft}"};
    EXPECT_THROW(build_generation_prompt(rev, "S", "M"), TemplateError);
    EXPECT_THROW(build_revision_prompt({TemplateKind::Generation, "{demo}{meta}"}, "d"), TemplateError);
    EXPECT_THROW(build_generation_prompt({TemplateKind::Generation, "{meta} {demo}"}, "S", "M"), TemplateError);
    EXPECT_THROW(build_generation_prompt({TemplateKind::Generation, "{demo} only"}, "S", "M"), TemplateError);
    EXPECT_THROW(PromptTemplate({TemplateKind::Revision, "no slot"}).validate(), TemplateError);
    EXPECT_NO_THROW(PromptTemplate::default_generation().validate());
    EXPECT_NO_THROW(PromptTemplate::default_revision().validate());
}

TEST(Prompt, DemoTextIsNotExpanded) {
    const PromptTemplate t{TemplateKind::Generation, "{demo}/{meta}"};
    EXPECT_EQ(build_generation_prompt(t, "{meta}", "M"), "{meta}/M");
}

TEST(Prompt, MetadataOmitsEmptyFields) {
    const auto r = fixtures::parse({{"cve_id", "CVE-2024-40594"}, {"published", "2024-07"}, {"impact", "data exposure"}});
    EXPECT_EQ(render_metadata(r), "- CVE ID: CVE-2024-40594\n- Impact: data exposure");
    const PromptTemplate t{TemplateKind::Generation, "<{demo}>\n{meta}\n."};
    EXPECT_EQ(build_generation_prompt(t, "D", r), "<D>\n- CVE ID: CVE-2024-40594\n- Impact: data exposure\n.");
}

TEST(GenerateReport, RevisionPromptEmbedsDraft) {
    const auto reg = mocks(3);
    const auto demos = DemoLibrary::builtin();
    const auto record = fixtures::parse(fixtures::full_raw(1));
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        GenerationTrace trace;
        generate_report(record, demos, reg, rng, {}, &trace);
        ASSERT_FALSE(trace.draft.empty());
        EXPECT_NE(trace.revision_prompt.find(trace.draft), std::string::npos);
    }
}

TEST(GenerateReport, GeneratorAndReviserDiffer) {
    const auto reg = mocks(2);
    const auto demos = DemoLibrary::builtin();
    const auto record = fixtures::parse(fixtures::full_raw(2));
    std::set<std::string> generators;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed);
        const auto doc = generate_report(record, demos, reg, rng, {});
        ASSERT_NE(doc.provenance.generator, doc.provenance.reviser);
        generators.insert(doc.provenance.generator);
    }
    EXPECT_EQ(generators.size(), 2u);
}

TEST(GenerateReport, SingleBackendMayReviseOwnDraft) {
    const auto reg = mocks(1);
    Rng rng(4);
    const auto doc = generate_report(fixtures::parse(fixtures::full_raw(0)), DemoLibrary::builtin(), reg, rng, {});
    EXPECT_EQ(doc.provenance.generator, doc.provenance.reviser);
    EXPECT_GT(doc.token_count, 0u);
}

TEST(GenerateReport, FixedSeedIsByteIdentical) {
    const auto reg = mocks(2);
    const auto record = fixtures::parse(fixtures::full_raw(5));
    Rng a(9), b(9);
    const auto x = generate_report(record, DemoLibrary::builtin(), reg, a, {});
    const auto y = generate_report(record, DemoLibrary::builtin(), reg, b, {});
    EXPECT_EQ(to_json(x).dump(), to_json(y).dump());
}

TEST(GenerateReport, EmptyRegistry) {
    Rng rng(1);
    EXPECT_THROW(generate_report(fixtures::parse(fixtures::full_raw(0)), DemoLibrary::builtin(), {}, rng, {}),
                 ConfigError);
}

TEST(BuildCorpus, ThreeRecordsStableIds) {
    const auto store = store_of(3);
    const auto reg = mocks(2);
    const auto a = build_corpus(store, {42, 1}, reg, DemoLibrary::builtin());
    const auto b = build_corpus(store, {42, 3}, reg, DemoLibrary::builtin());
    ASSERT_EQ(a.documents.size(), 3u);
    EXPECT_TRUE(a.skipped.empty());
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a.documents[i], b.documents[i]);
        EXPECT_EQ(a.documents[i].doc_id, document_id(42, a.documents[i].cve_id));
    }
    EXPECT_EQ(write_corpus(a.documents, json{{"seed", 42}}), write_corpus(b.documents, json{{"seed", 42}}));
}

TEST(BuildCorpus, DocumentDependsOnlyOnRecordAndSeed) {
    const auto full = store_of(6);
    const auto reg = mocks(3);
    const auto all = build_corpus(full, {7, 2}, reg, DemoLibrary::builtin());
    std::map<std::string, ingest::ThreatRecord> subset;
    for (const auto& [id, r] : full)
        if (subset.size() < 2 || id.back() % 2) subset.emplace(id, r);
    const auto part = build_corpus(ingest::ThreatStore(subset), {7, 1}, reg, DemoLibrary::builtin());
    for (const auto& d : part.documents) {
        auto it = std::find_if(all.documents.begin(), all.documents.end(),
                               [&](const CorpusDocument& x) { return x.cve_id == d.cve_id; });
        ASSERT_NE(it, all.documents.end());
        EXPECT_EQ(*it, d);
    }
}

TEST(BuildCorpus, FailingGeneratorIsSkipped) {
    modelio::BackendRegistry reg;
    reg.add("broken", std::make_shared<modelio::FunctionBackend>([](const modelio::CompletionRequest&) -> std::string {
                throw BackendError("upstream unavailable");
            }));
    const auto out = build_corpus(store_of(1), {1, 1}, reg, DemoLibrary::builtin());
    EXPECT_TRUE(out.documents.empty());
    ASSERT_EQ(out.skipped.size(), 1u);
    EXPECT_EQ(out.skipped[0].stage, "generation");
}

TEST(BuildCorpus, MasterSeedChangesDraws) {
    const auto store = store_of(1);
    const auto reg = mocks(3);
    int differing = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto a = build_corpus(store, {s, 1}, reg, DemoLibrary::builtin()).documents.at(0).provenance;
        const auto b = build_corpus(store, {s + 1000, 1}, reg, DemoLibrary::builtin()).documents.at(0).provenance;
        if (a.demo_id != b.demo_id || a.generator != b.generator || a.reviser != b.reviser ||
            a.generation_params != b.generation_params)
            ++differing;
    }
    EXPECT_EQ(differing, 100);
}

TEST(Corpus, WriteReadRoundTrip) {
    const auto docs = build_corpus(store_of(4), {3, 1}, mocks(2), DemoLibrary::builtin()).documents;
    const auto text = write_corpus(docs, json{{"seed", 3}});
    EXPECT_EQ(read_corpus(text), docs);
}

TEST(Demos, FromJsonl) {
    const auto lib = DemoLibrary::from_jsonl("{\"id\":\"a\",\"text\":\"one\"}\n{\"id\":\"b\",\"text\":\"two\"}\n");
    ASSERT_EQ(lib.demos.size(), 2u);
    EXPECT_EQ(lib.demos[1].text, "two");
    EXPECT_THROW(DemoLibrary::from_jsonl("{\"id\":1}\n"), ValidationError);
}
