#include "ctikit/eval/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "ctikit/digest.hpp"
#include "ctikit/error.hpp"
#include "ctikit/text.hpp"

namespace ctikit::eval {

namespace {

std::vector<std::string> extract(std::string_view text, const std::regex& re) {
    std::vector<std::string> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        std::string id = text::to_upper(it->str());
        if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(std::move(id));
    }
    return out;
}

}  // namespace

std::string_view strategy_name(CorrelationStrategy s) {
    switch (s) {
        case CorrelationStrategy::Direct: return "direct";
        case CorrelationStrategy::ViaCve: return "via_cve";
        case CorrelationStrategy::ViaCwe: return "via_cwe";
    }
    return "";
}

CorrelationStrategy strategy_from_name(std::string_view s) {
    for (auto x : {CorrelationStrategy::Direct, CorrelationStrategy::ViaCve, CorrelationStrategy::ViaCwe})
        if (text::iequals(s, strategy_name(x))) return x;
    throw ConfigError("unknown correlation strategy '" + std::string(s) + "'");
}

std::vector<std::string> extract_cve_ids(std::string_view text) {
    static const std::regex re("CVE-[0-9]{4}-[0-9]{4,}", std::regex::icase);
    return extract(text, re);
}

std::vector<std::string> extract_cwe_ids(std::string_view text) {
    static const std::regex re("CWE-[0-9]+", std::regex::icase);
    return extract(text, re);
}

CorrelationOutcome run_correlation_experiment(CorrelationStrategy strategy, const std::vector<CorrelationRow>& rows,
                                              const SessionRunner& runner, std::size_t k) {
    if (rows.empty()) throw ValidationError("no rows");
    CorrelationOutcome out;
    std::vector<RankedPrediction> ranked;
    for (const auto& row : rows) {
        RankedPrediction rp{{}, row.truth};
        try {
            std::string hint;
            if (strategy == CorrelationStrategy::ViaCve) {
                const std::string p = "Threat report:\n" + row.report +
                                      "\n\nWhich CVE identifiers does this report point to? List them.";
                out.prompts.push_back(p);
                const auto ids = extract_cve_ids(runner(p));
                hint = "\n\nCVE identifiers linked to the report: " + (ids.empty() ? "none" : text::join(ids, ", "));
            } else if (strategy == CorrelationStrategy::ViaCwe) {
                const std::string p = "Threat report:\n" + row.report +
                                      "\n\nWhich CWE weakness classes does this report involve? List their ids.";
                out.prompts.push_back(p);
                const auto ids = extract_cwe_ids(runner(p));
                hint = "\n\nWeakness classes involved: " + (ids.empty() ? "none" : text::join(ids, ", "));
            }
            const std::string p = "Threat report:\n" + row.report + hint +
                                  "\n\nList other known CVE identifiers related to this threat, most relevant first.";
            out.prompts.push_back(p);
            rp.ranked = extract_cve_ids(runner(p));
        } catch (const std::exception& e) {
            out.failures.push_back(row.id + ": " + e.what());
            rp.ranked.clear();
        }
        ranked.push_back(std::move(rp));
    }
    out.report = {"hit@" + std::to_string(k) + "/" + std::string(strategy_name(strategy)), hit_ratio(ranked, k),
                  rows.size(), ""};
    return out;
}

std::vector<Date> epss_backward_dates(const Date& t0) { return {t0.add_months(-3), t0.add_months(-2), t0.add_months(-1)}; }

std::vector<Date> epss_forward_dates(const Date& t0) { return {t0.add_months(1), t0.add_months(2), t0.add_months(3)}; }

ingest::EpssSeries parse_epss_reply(std::string_view text) {
    static const std::regex re(R"(([0-9]{4}-[0-9]{2}-[0-9]{2})\s*[:=]\s*([0-9]+(?:\.[0-9]+)?)\s*%?)");
    ingest::EpssSeries s;
    const std::string str(text);
    for (auto it = std::sregex_iterator(str.begin(), str.end(), re); it != std::sregex_iterator(); ++it) {
        const Date d = Date::parse((*it)[1].str());
        const double v = std::stod((*it)[2].str());
        auto pos = std::find_if(s.points.begin(), s.points.end(), [&](const auto& p) { return p.date == d; });
        if (pos == s.points.end()) s.points.push_back({d, v});
    }
    std::sort(s.points.begin(), s.points.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
    return s;
}

EpssOutcome run_epss_experiment(const std::vector<EpssRow>& rows, const SessionRunner& runner) {
    if (rows.empty()) throw ValidationError("no rows");
    EpssOutcome out;
    std::vector<double> back_sq, fwd_sq;
    for (const auto& row : rows) {
        const auto& pts = row.truth.points;
        if (pts.empty() || pts.front().date.add_months(6) > pts.back().date) {
            out.skipped.push_back(row.cve_id);
            continue;
        }
        const auto back = epss_backward_dates(row.t0);
        const auto fwd = epss_forward_dates(row.t0);
        std::vector<std::string> history;
        for (const auto& p : pts)
            if (p.date >= row.t0.add_months(-3) && p.date <= row.t0)
                history.push_back(p.date.str() + ": " + format_double(p.score) + "%");
        std::vector<std::string> asked;
        for (const auto& d : back) asked.push_back(d.str());
        for (const auto& d : fwd) asked.push_back(d.str());
        const std::string prompt =
            "Threat report for " + row.cve_id + ":\n" + row.report + "\n\nKnown EPSS scores up to " + row.t0.str() +
            ":\n" + (history.empty() ? "(none)" : text::join(history, "\n")) +
            "\n\nEstimate the EPSS score (percent) on each date below. Answer one 'YYYY-MM-DD: value' line per date.\n" +
            text::join(asked, "\n");
        out.prompts.push_back(prompt);
        try {
            const auto pred = parse_epss_reply(runner(prompt));
            auto b = epss_squared_errors(pred, row.truth, back);
            auto f = epss_squared_errors(pred, row.truth, fwd);
            back_sq.insert(back_sq.end(), b.begin(), b.end());
            fwd_sq.insert(fwd_sq.end(), f.begin(), f.end());
            ++out.rows_used;
        } catch (const std::exception& e) {
            out.failures.push_back(row.cve_id + ": " + e.what());
        }
    }
    auto rmse = [](const std::vector<double>& sq) {
        if (sq.empty()) return std::nan("");
        double s = 0.0;
        for (double x : sq) s += x;
        return std::sqrt(s / static_cast<double>(sq.size()));
    };
    out.interpolation_rmse = rmse(back_sq);
    out.prediction_rmse = rmse(fwd_sq);
    return out;
}

}  // namespace ctikit::eval
