#pragma once

#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/date.hpp"
#include "ctikit/eval/metrics.hpp"
#include "ctikit/ingest.hpp"

namespace ctikit::eval {

/// Sends a prompt through an inference session and returns its text answer.
using SessionRunner = std::function<std::string(std::string_view prompt)>;

enum class CorrelationStrategy { Direct, ViaCve, ViaCwe };
std::string_view strategy_name(CorrelationStrategy s);
CorrelationStrategy strategy_from_name(std::string_view s);

struct CorrelationRow {
    std::string id;
    std::string report;
    std::set<std::string> truth;  // CVE ids
};

struct CorrelationOutcome {
    MetricReport report;                // hit ratio, 0..100
    std::vector<std::string> failures;  // "<row id>: <message>", counted as misses
    std::vector<std::string> prompts;   // every prompt sent, in row order
};

/// Identifiers matching CVE-YYYY-NNNN(+) or CWE-N(+) in order of first appearance, upper-cased.
std::vector<std::string> extract_cve_ids(std::string_view text);
std::vector<std::string> extract_cwe_ids(std::string_view text);

/// Direct asks once for related CVEs. The via strategies first ask for the
/// CVEs or CWEs the report points to and pass them into the expansion prompt.
CorrelationOutcome run_correlation_experiment(CorrelationStrategy strategy, const std::vector<CorrelationRow>& rows,
                                              const SessionRunner& runner, std::size_t k = 10);

struct EpssRow {
    std::string cve_id;
    std::string report;
    Date t0;
    ingest::EpssSeries truth;
};

struct EpssOutcome {
    double interpolation_rmse = 0.0;  // T0-3 .. T0-1 months
    double prediction_rmse = 0.0;     // T0+1 .. T0+3 months
    std::size_t rows_used = 0;
    std::vector<std::string> skipped;   // fewer than 6 months of truth
    std::vector<std::string> failures;  // runner errors or unusable replies
    std::vector<std::string> prompts;
};

/// Query dates for a row: three monthly steps back from T0, then three forward.
std::vector<Date> epss_backward_dates(const Date& t0);
std::vector<Date> epss_forward_dates(const Date& t0);

/// Parses "YYYY-MM-DD: value" pairs (":" or "=" separated, optional "%").
ingest::EpssSeries parse_epss_reply(std::string_view text);

/// Truth points in [T0-3 months, T0] go into the prompt as history. Errors
/// are pooled over all used rows, separately for each window.
EpssOutcome run_epss_experiment(const std::vector<EpssRow>& rows, const SessionRunner& runner);

}  // namespace ctikit::eval
