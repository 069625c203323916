#include "ctikit/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::eval {

using nlohmann::json;

namespace {

std::set<std::string> canonical(const std::set<std::string>& s) {
    std::set<std::string> out;
    for (const auto& x : s) out.insert(text::canonical_label(x));
    return out;
}

std::string ident(std::string_view s) { return text::to_upper(text::trim(s)); }

}  // namespace

SetScores set_metrics(const std::set<std::string>& predicted, const std::set<std::string>& reference) {
    const auto p = canonical(predicted);
    const auto r = canonical(reference);
    if (p.empty() && r.empty()) return {1.0, 1.0, 1.0, 1.0};
    if (p.empty() || r.empty()) return {};
    std::size_t inter = 0;
    for (const auto& x : p) inter += r.contains(x);
    const double tp = static_cast<double>(inter);
    SetScores s;
    s.precision = tp / static_cast<double>(p.size());
    s.recall = tp / static_cast<double>(r.size());
    s.f1 = 2.0 * tp / static_cast<double>(p.size() + r.size());
    s.iou = tp / static_cast<double>(p.size() + r.size() - inter);
    return s;
}

int hit_at_k(const std::vector<std::string>& ranked, const std::set<std::string>& truth, std::size_t k) {
    if (k < 1) throw ValidationError("k must be at least 1");
    std::set<std::string> seen, t;
    for (const auto& x : ranked)
        if (!seen.insert(ident(x)).second) throw ValidationError("ranked list repeats '" + x + "'");
    for (const auto& x : truth) t.insert(ident(x));
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t i = 0; i < n; ++i)
        if (t.contains(ident(ranked[i]))) return 1;
    return 0;
}

double hit_ratio(const std::vector<RankedPrediction>& rows, std::size_t k) {
    if (rows.empty()) throw ValidationError("no rows");
    std::size_t hits = 0;
    for (const auto& r : rows) hits += static_cast<std::size_t>(hit_at_k(r.ranked, r.truth, k));
    return 100.0 * static_cast<double>(hits) / static_cast<double>(rows.size());
}

std::map<ingest::CvssField, double> classify_accuracy(const std::vector<ingest::CvssAssessment>& preds,
                                                      const std::vector<ingest::CvssAssessment>& refs) {
    if (preds.size() != refs.size())
        throw ValidationError("prediction and reference counts differ (" + std::to_string(preds.size()) + " vs " +
                              std::to_string(refs.size()) + ")");
    if (preds.empty()) throw ValidationError("no rows");
    std::map<ingest::CvssField, double> out;
    for (auto f : ingest::kCvssFields) {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i].index(f) == refs[i].index(f);
        out[f] = static_cast<double>(ok) / static_cast<double>(preds.size());
    }
    return out;
}

const ingest::EpssPoint& nearest_point(const ingest::EpssSeries& truth, const Date& q) {
    if (truth.points.empty()) throw ValidationError("truth series is empty");
    const ingest::EpssPoint* best = nullptr;
    long best_gap = 0;
    for (const auto& p : truth.points) {
        const long gap = std::labs(p.date.days() - q.days());
        if (!best || gap < best_gap || (gap == best_gap && p.date < best->date)) {
            best = &p;
            best_gap = gap;
        }
    }
    return *best;
}

std::vector<double> epss_squared_errors(const ingest::EpssSeries& pred, const ingest::EpssSeries& truth,
                                        const std::vector<Date>& query_dates) {
    if (truth.points.empty()) throw ValidationError("truth series is empty");
    std::vector<double> out;
    for (const auto& q : query_dates) {
        auto it = std::find_if(pred.points.begin(), pred.points.end(), [&](const auto& p) { return p.date == q; });
        if (it == pred.points.end()) throw ValidationError("prediction has no value for " + q.str());
        const double d = it->score - nearest_point(truth, q).score;
        out.push_back(d * d);
    }
    return out;
}

double epss_rmse(const ingest::EpssSeries& pred, const ingest::EpssSeries& truth, const std::vector<Date>& query_dates) {
    if (query_dates.empty()) throw ValidationError("no query dates");
    const auto sq = epss_squared_errors(pred, truth, query_dates);
    double sum = 0.0;
    for (double x : sq) sum += x;
    return std::sqrt(sum / static_cast<double>(sq.size()));
}

double DenseEmbedder::cosine(std::string_view a, std::string_view b) const {
    const Eigen::VectorXd u = embed(a);
    const Eigen::VectorXd v = embed(b);
    const double nu = u.norm(), nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return a == b ? 1.0 : 0.0;
    return u.dot(v) / (nu * nv);
}

Eigen::VectorXd HashedEmbedder::embed(std::string_view token) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dims_);
    const std::string padded = "<" + std::string(token) + ">";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        // FNV-1a keeps the bucket assignment identical across platforms.
        std::uint64_t h = 1469598103934665603ULL;
        for (char c : padded.substr(i, 3)) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dims_))) += 1.0;
    }
    return v;
}

double text_similarity(std::string_view candidate, std::string_view reference, const TokenEmbedder& embedder) {
    const auto c = text::split_whitespace(text::to_lower(candidate));
    const auto r = text::split_whitespace(text::to_lower(reference));
    if (c.empty() || r.empty()) throw ValidationError("text_similarity needs non-empty candidate and reference");
    Eigen::MatrixXd sim(c.size(), r.size());
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = 0; j < r.size(); ++j)
            sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = embedder.cosine(c[i], r[j]);
    const double p = sim.rowwise().maxCoeff().mean();
    const double rc = sim.colwise().maxCoeff().mean();
    if (p + rc <= 0.0) return 0.0;
    return std::clamp(100.0 * 2.0 * p * rc / (p + rc), 0.0, 100.0);
}

bool descriptive_match(std::string_view predicted, std::string_view reference, const TokenEmbedder& embedder,
                       double threshold) {
    if (text::canonical_label(predicted) == text::canonical_label(reference)) return true;
    if (text::trim(predicted).empty() || text::trim(reference).empty()) return false;
    return text_similarity(predicted, reference, embedder) >= threshold;
}

json to_json(const MetricReport& r) {
    return {{"metric", r.metric}, {"value", r.value}, {"samples", r.samples}, {"config_digest", r.config_digest}};
}

std::string render_table(const std::vector<MetricReport>& reports) {
    std::size_t w = 6;
    for (const auto& r : reports) w = std::max(w, r.metric.size());
    auto pad = [](std::string s, std::size_t n) {
        s.resize(std::max(s.size(), n), ' ');
        return s;
    };
    std::string out = pad("metric", w) + "  " + pad("value", 12) + "  samples\n";
    out += std::string(w, '-') + "  " + std::string(12, '-') + "  -------\n";
    for (const auto& r : reports) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", r.value);
        out += pad(r.metric, w) + "  " + pad(buf, 12) + "  " + std::to_string(r.samples) + "\n";
    }
    return out;
}

}  // namespace ctikit::eval
