#pragma once

#include <nlohmann/json_fwd.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/corpusgen.hpp"
#include "ctikit/date.hpp"

namespace ctikit::curriculum {

struct CorpusEntry {
    std::string doc_id;
    YearMonth published;
    std::size_t token_count = 0;
};

/// Documents sorted by (published, token_count), stable within ties.
struct OrderedCorpus {
    std::vector<CorpusEntry> docs;
    std::size_t size() const { return docs.size(); }
    bool empty() const { return docs.empty(); }
};

OrderedCorpus order_corpus(std::vector<CorpusEntry> docs);
OrderedCorpus order_corpus(std::span<const corpusgen::CorpusDocument> docs);

/// Three-stage pacing: linear start up to `t1`, plateau up to `t2`, then
/// the full corpus plus a recency suffix scaled by `beta`.
struct PacingSchedule {
    int total = 1;  // T
    int t1 = 1;
    int t2 = 1;
    double beta = 1.0;

    void validate() const;  // 1 <= t1 <= t2 <= total, beta >= 0

    /// Presets "1B", "8B", "70B".
    static PacingSchedule preset(std::string_view name);
};

enum class Stage { Linear, Plateau, Reinforced };
std::string_view stage_name(Stage s);

struct EpochManifest {
    int epoch = 1;
    Stage stage = Stage::Linear;
    std::vector<std::string> entries;
};

/// Start index of the reinforcement suffix at epoch t (> t2), clamped to [0, |D|].
std::size_t suffix_start(std::size_t corpus_size, int t, const PacingSchedule& sched);

/// Manifest for epoch t (1-based).
EpochManifest pace(const OrderedCorpus& corpus, int t, const PacingSchedule& sched);

/// Manifests for t = 1..T.
std::vector<EpochManifest> emit_schedule(const OrderedCorpus& corpus, const PacingSchedule& sched);

/// Manifest file: a JSON header line {epoch, stage, size, ...} then one doc_id per line.
std::string write_manifest(const EpochManifest& m, const nlohmann::json& extra_header);
EpochManifest read_manifest(std::string_view contents);

}  // namespace ctikit::curriculum
