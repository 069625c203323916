#pragma once

#include <Eigen/Dense>
#include <map>
#include <nlohmann/json_fwd.hpp>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/date.hpp"
#include "ctikit/ingest.hpp"

namespace ctikit::eval {

struct SetScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double iou = 0.0;
};

/// Overlap of canonicalized label sets. Both empty scores 1 everywhere;
/// exactly one empty scores 0 everywhere.
SetScores set_metrics(const std::set<std::string>& predicted, const std::set<std::string>& reference);

/// 1 when any of the first k identifiers is in `truth`. Identifiers compare
/// trimmed and upper-cased. Throws ValidationError for k < 1 or duplicates.
int hit_at_k(const std::vector<std::string>& ranked, const std::set<std::string>& truth, std::size_t k);

struct RankedPrediction {
    std::vector<std::string> ranked;
    std::set<std::string> truth;
};

/// Mean hit_at_k scaled to 0..100.
double hit_ratio(const std::vector<RankedPrediction>& rows, std::size_t k);

/// Per-field exact-category accuracy in [0, 1]; NA is a category of its own.
std::map<ingest::CvssField, double> classify_accuracy(const std::vector<ingest::CvssAssessment>& preds,
                                                      const std::vector<ingest::CvssAssessment>& refs);

/// Truth point closest to `q`; the earlier point wins ties.
const ingest::EpssPoint& nearest_point(const ingest::EpssSeries& truth, const Date& q);

/// Squared errors between the prediction at each query date and the nearest
/// truth point. The prediction must contain every query date.
std::vector<double> epss_squared_errors(const ingest::EpssSeries& pred, const ingest::EpssSeries& truth,
                                        const std::vector<Date>& query_dates);
double epss_rmse(const ingest::EpssSeries& pred, const ingest::EpssSeries& truth, const std::vector<Date>& query_dates);

/// Cosine similarity between tokens.
class TokenEmbedder {
public:
    virtual ~TokenEmbedder() = default;
    virtual double cosine(std::string_view a, std::string_view b) const = 0;
};

/// One dimension per distinct token: cosine is 1 for equal tokens, else 0.
class OneHotEmbedder final : public TokenEmbedder {
public:
    double cosine(std::string_view a, std::string_view b) const override { return a == b ? 1.0 : 0.0; }
};

class DenseEmbedder : public TokenEmbedder {
public:
    virtual Eigen::VectorXd embed(std::string_view token) const = 0;
    double cosine(std::string_view a, std::string_view b) const override;
};

/// Character trigrams of the padded token hashed into `dims` buckets.
class HashedEmbedder final : public DenseEmbedder {
public:
    explicit HashedEmbedder(int dims = 256) : dims_(dims) {}
    Eigen::VectorXd embed(std::string_view token) const override;

private:
    int dims_;
};

/// Greedy token matching: precision and recall average each token's best
/// cosine against the other side; the F1 is scaled to 0..100. Tokens are
/// whitespace-split and case-folded. Throws ValidationError for empty input.
double text_similarity(std::string_view candidate, std::string_view reference, const TokenEmbedder& embedder);

/// Exact canonical match, else text_similarity >= threshold.
bool descriptive_match(std::string_view predicted, std::string_view reference, const TokenEmbedder& embedder,
                       double threshold = 80.0);

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::size_t samples = 0;
    std::string config_digest;
};

nlohmann::json to_json(const MetricReport& r);
std::string render_table(const std::vector<MetricReport>& reports);

}  // namespace ctikit::eval
