#include "ctikit/objective.hpp"

#include <algorithm>
#include <set>

#include "ctikit/text.hpp"

namespace ctikit::objective {

void ObjectiveConfig::validate(const ToyModel& theta) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    theta.validate();
    theta0.validate();
    if (theta0.logits.rows() != theta.logits.rows() || theta0.logits.cols() != theta.logits.cols())
        throw ValidationError("theta0 shape differs from theta");
}

double clm_loss(const ToyModel& theta, const std::vector<TokenSequence>& corpus, const ObjectiveConfig& cfg) {
    cfg.validate(theta);
    if (corpus.empty()) throw ValidationError("corpus is empty");
    double nll = 0.0;
    for (const auto& seq : corpus) {
        if (seq.empty()) throw ValidationError("token sequences must be non-empty");
        nll += sequence_nll(theta, theta.start_row(), seq);
    }
    nll /= static_cast<double>(corpus.size());
    if (cfg.lambda == 0.0) return nll;
    return nll + cfg.lambda * (theta.logits - cfg.theta0.logits).squaredNorm();
}

ToyModel::Matrix clm_grad(const ToyModel& theta, const std::vector<TokenSequence>& corpus, const ObjectiveConfig& cfg) {
    cfg.validate(theta);
    if (corpus.empty()) throw ValidationError("corpus is empty");
    ToyModel::Matrix grad = ToyModel::Matrix::Zero(theta.logits.rows(), theta.logits.cols());
    const double w = 1.0 / static_cast<double>(corpus.size());
    for (const auto& seq : corpus) {
        if (seq.empty()) throw ValidationError("token sequences must be non-empty");
        accumulate_nll_grad(theta, theta.start_row(), seq, grad, w);
    }
    if (cfg.lambda != 0.0) grad += 2.0 * cfg.lambda * (theta.logits - cfg.theta0.logits);
    return grad;
}

Vocabulary Vocabulary::fit(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const auto& t : texts)
        for (auto& w : text::split_whitespace(t)) words.insert(std::move(w));
    Vocabulary v;
    int next = 1;
    for (const auto& w : words) v.ids_.emplace(w, next++);
    return v;
}

TokenSequence Vocabulary::encode(std::string_view s) const {
    TokenSequence out;
    for (const auto& w : text::split_whitespace(s)) {
        auto it = ids_.find(w);
        out.push_back(it == ids_.end() ? kUnknown : it->second);
    }
    return out;
}

double cascade_loss(const ToyModel& theta, const std::vector<cascade::StepContext>& contexts,
                    const Tokenizer& tokenizer) {
    theta.validate();
    double total = 0.0;
    for (const auto& ctx : contexts) {
        const TokenSequence answer = tokenizer(ctx.answer);
        if (answer.empty()) throw ValidationError("step " + std::to_string(ctx.index) + " has an empty answer");
        const TokenSequence context = tokenizer(ctx.context);
        const Eigen::Index prev = context.empty() ? theta.start_row() : context.back();
        if (prev < 0 || prev > theta.start_row()) throw ValidationError("context token outside vocabulary");
        total += sequence_nll(theta, prev, answer);
    }
    return total;
}

GradientCheck check_gradient(const ToyModel& theta, const std::vector<TokenSequence>& corpus,
                             const ObjectiveConfig& cfg, double eps) {
    const ToyModel::Matrix analytic = clm_grad(theta, corpus, cfg);
    GradientCheck out;
    ToyModel probe = theta;
    for (Eigen::Index r = 0; r < theta.logits.rows(); ++r) {
        for (Eigen::Index c = 0; c < theta.logits.cols(); ++c) {
            const double orig = probe.logits(r, c);
            probe.logits(r, c) = orig + eps;
            const double up = clm_loss(probe, corpus, cfg);
            probe.logits(r, c) = orig - eps;
            const double down = clm_loss(probe, corpus, cfg);
            probe.logits(r, c) = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic(r, c);
            const double err = std::abs(a - numeric);
            out.max_abs_error = std::max(out.max_abs_error, err);
            out.max_rel_error =
                std::max(out.max_rel_error, err / std::max({1.0, std::abs(a), std::abs(numeric)}));
        }
    }
    return out;
}

}  // namespace ctikit::objective
