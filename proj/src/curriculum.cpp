#include "ctikit/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::curriculum {

using nlohmann::json;

OrderedCorpus order_corpus(std::vector<CorpusEntry> docs) {
    std::stable_sort(docs.begin(), docs.end(), [](const CorpusEntry& a, const CorpusEntry& b) {
        return std::tie(a.published, a.token_count) < std::tie(b.published, b.token_count);
    });
    return {std::move(docs)};
}

OrderedCorpus order_corpus(std::span<const corpusgen::CorpusDocument> docs) {
    std::vector<CorpusEntry> entries;
    entries.reserve(docs.size());
    for (const auto& d : docs) entries.push_back({d.doc_id, d.published, d.token_count});
    return order_corpus(std::move(entries));
}

void PacingSchedule::validate() const {
    if (!(1 <= t1 && t1 <= t2 && t2 <= total))
        throw ValidationError("pacing schedule needs 1 <= T1 <= T2 <= T");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ValidationError("pacing beta must be finite and >= 0");
}

PacingSchedule PacingSchedule::preset(std::string_view name) {
    if (name == "1B") return {4, 3, 3, 1.0};
    if (name == "8B") return {10, 5, 5, 1.0};
    if (name == "70B") return {20, 10, 10, 1.0};
    throw ConfigError("unknown pacing preset '" + std::string(name) + "'");
}

std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::Linear: return "linear";
        case Stage::Plateau: return "plateau";
        case Stage::Reinforced: return "reinforced";
    }
    return "";
}

std::size_t suffix_start(std::size_t n, int t, const PacingSchedule& sched) {
    // Integer numerator first keeps exact cases exact; the small slack absorbs
    // representation error when beta is not a dyadic fraction.
    const double x = sched.beta * static_cast<double>(n * static_cast<std::size_t>(t - sched.t2)) /
                     static_cast<double>(sched.total - sched.t2);
    const double cut = std::floor(x + 1e-9);
    if (cut <= 0.0) return 0;
    if (cut >= static_cast<double>(n)) return n;
    return static_cast<std::size_t>(cut);
}

EpochManifest pace(const OrderedCorpus& corpus, int t, const PacingSchedule& sched) {
    sched.validate();
    if (corpus.empty()) throw ValidationError("cannot pace an empty corpus");
    if (t < 1 || t > sched.total)
        throw ValidationError("epoch " + std::to_string(t) + " outside [1, " + std::to_string(sched.total) + "]");

    const std::size_t n = corpus.size();
    EpochManifest m;
    m.epoch = t;
    auto append = [&](std::size_t from, std::size_t to) {
        for (std::size_t i = from; i < to; ++i) m.entries.push_back(corpus.docs[i].doc_id);
    };
    if (t <= sched.t1) {
        m.stage = Stage::Linear;
        append(0, n * static_cast<std::size_t>(t) / static_cast<std::size_t>(sched.t1));
    } else if (t <= sched.t2) {
        m.stage = Stage::Plateau;
        append(0, n);
    } else {
        m.stage = Stage::Reinforced;
        append(0, n);
        append(suffix_start(n, t, sched), n);
    }
    return m;
}

std::vector<EpochManifest> emit_schedule(const OrderedCorpus& corpus, const PacingSchedule& sched) {
    std::vector<EpochManifest> out;
    out.reserve(static_cast<std::size_t>(sched.total));
    for (int t = 1; t <= sched.total; ++t) out.push_back(pace(corpus, t, sched));
    return out;
}

std::string write_manifest(const EpochManifest& m, const json& extra_header) {
    json header = extra_header.is_object() ? extra_header : json::object();
    header["epoch"] = m.epoch;
    header["stage"] = std::string(stage_name(m.stage));
    header["size"] = m.entries.size();
    std::string out = header.dump() + "\n";
    for (const auto& id : m.entries) out += id + "\n";
    return out;
}

EpochManifest read_manifest(std::string_view contents) {
    const auto nl = contents.find('\n');
    const std::string_view head = contents.substr(0, nl);
    json header;
    try {
        header = json::parse(head.begin(), head.end());
    } catch (const json::parse_error& e) {
        throw ParseError("malformed manifest header: " + std::string(e.what()), e.byte);
    }
    EpochManifest m;
    m.epoch = header.at("epoch").get<int>();
    const auto stage = header.at("stage").get<std::string>();
    if (stage == "linear") m.stage = Stage::Linear;
    else if (stage == "plateau") m.stage = Stage::Plateau;
    else if (stage == "reinforced") m.stage = Stage::Reinforced;
    else throw ValidationError("unknown manifest stage '" + stage + "'");
    if (nl != std::string_view::npos) {
        for (auto& id : text::split_whitespace(contents.substr(nl + 1))) m.entries.push_back(std::move(id));
    }
    if (m.entries.size() != header.at("size").get<std::size_t>())
        throw ValidationError("manifest size does not match its header");
    return m;
}

}  // namespace ctikit::curriculum
