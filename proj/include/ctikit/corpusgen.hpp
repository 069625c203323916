#pragma once

#include <cstdint>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/date.hpp"
#include "ctikit/ingest.hpp"
#include "ctikit/modelio.hpp"
#include "ctikit/rng.hpp"

namespace ctikit::corpusgen {

enum class TemplateKind { Generation, Revision };

inline constexpr std::string_view kDemoSlot = "{demo}";
inline constexpr std::string_view kMetaSlot = "{meta}";
inline constexpr std::string_view kDraftSlot = "{draft}";

struct PromptTemplate {
    TemplateKind kind = TemplateKind::Generation;
    std::string body;

    /// Generation bodies need {demo} before {meta}; revision bodies need {draft}.
    void validate() const;

    static PromptTemplate default_generation();
    static PromptTemplate default_revision();
};

struct TemplatePair {
    PromptTemplate generation = PromptTemplate::default_generation();
    PromptTemplate revision = PromptTemplate::default_revision();
};

struct Demo {
    std::string id;
    std::string text;
};

struct DemoLibrary {
    std::vector<Demo> demos;

    static DemoLibrary builtin();
    static DemoLibrary from_jsonl(std::string_view contents);
};

/// Metadata block for a record: one "- Label: value" line per populated
/// field, in a fixed order; absent fields are omitted.
std::string render_metadata(const ingest::ThreatRecord& record);

std::string build_generation_prompt(const PromptTemplate& tmpl, std::string_view demo, std::string_view metadata);
std::string build_generation_prompt(const PromptTemplate& tmpl, std::string_view demo,
                                    const ingest::ThreatRecord& record);
std::string build_revision_prompt(const PromptTemplate& tmpl, std::string_view draft);

/// Whitespace-delimited token count.
std::size_t count_tokens(std::string_view text);

struct Provenance {
    std::string demo_id;
    std::string generator;  // backend used for the draft
    std::string reviser;    // backend used for the revision
    modelio::SamplingParams generation_params;
    modelio::SamplingParams revision_params;
    std::uint64_t master_seed = 0;
    std::uint64_t record_seed = 0;

    bool operator==(const Provenance&) const = default;
};

struct CorpusDocument {
    std::string doc_id;
    std::string cve_id;
    std::string text;
    std::size_t token_count = 0;
    YearMonth published;
    Provenance provenance;

    bool operator==(const CorpusDocument&) const = default;
};

/// Intermediate prompts and draft of one report, for inspection.
struct GenerationTrace {
    std::string generation_prompt;
    std::string draft;
    std::string revision_prompt;
};

/// Draws, in order: demo, generator, reviser (distinct from the generator
/// when at least two backends are registered), generation params, revision
/// params. Then generates a draft and revises it. Backend failures surface
/// as StageError tagged "generation" or "revision".
CorpusDocument generate_report(const ingest::ThreatRecord& record, const DemoLibrary& demos,
                               const modelio::BackendRegistry& registry, Rng& rng, const TemplatePair& templates,
                               GenerationTrace* trace = nullptr);

struct CorpusJobConfig {
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;
};

struct SkippedRecord {
    std::string cve_id;
    std::string stage;
    std::string message;
};

struct CorpusBuild {
    std::vector<CorpusDocument> documents;  // store order
    std::vector<SkippedRecord> skipped;
};

/// Stable document id for a record under a master seed.
std::string document_id(std::uint64_t master_seed, std::string_view cve_id);

/// One report per store record; per-record seeds derive from the master seed
/// and the cve_id. Failed records are skipped and listed.
CorpusBuild build_corpus(const ingest::ThreatStore& store, const CorpusJobConfig& config,
                         const modelio::BackendRegistry& registry, const DemoLibrary& demos,
                         const TemplatePair& templates = {});

nlohmann::json to_json(const CorpusDocument& doc);
CorpusDocument document_from_json(const nlohmann::json& j);

/// Corpus file: a header line then one document per line.
std::string write_corpus(const std::vector<CorpusDocument>& docs, const nlohmann::json& header);
std::vector<CorpusDocument> read_corpus(std::string_view contents);

}  // namespace ctikit::corpusgen
