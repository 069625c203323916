#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctikit/cascade.hpp"
#include "ctikit/error.hpp"
#include "ctikit/rng.hpp"

namespace ctikit::objective {

using TokenSequence = std::vector<int>;

/// Bigram softmax model over a vocabulary of size V. Rows 0..V-1 hold the
/// next-token scores after each token; row V scores the first token.
template <typename Scalar>
struct BigramModel {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    Matrix logits;

    static BigramModel zeros(Eigen::Index vocab) { return {Matrix::Zero(vocab + 1, vocab)}; }

    /// Entries uniform on [-scale, scale).
    static BigramModel random(Eigen::Index vocab, Rng& rng, double scale = 1.0) {
        BigramModel m = zeros(vocab);
        for (Eigen::Index r = 0; r < m.logits.rows(); ++r)
            for (Eigen::Index c = 0; c < m.logits.cols(); ++c) m.logits(r, c) = Scalar(rng.uniform(-scale, scale));
        return m;
    }

    Eigen::Index vocab_size() const { return logits.cols(); }
    Eigen::Index start_row() const { return logits.cols(); }

    void validate() const {
        if (logits.cols() < 1 || logits.rows() != logits.cols() + 1)
            throw ValidationError("bigram logits must be (V+1) x V with V >= 1");
        if (!logits.allFinite()) throw ValidationError("bigram logits must be finite");
    }
};

using ToyModel = BigramModel<double>;

struct ObjectiveConfig {
    double lambda = 0.0;
    ToyModel theta0;

    void validate(const ToyModel& theta) const;
};

/// Log-softmax of one row, shifted by the row maximum.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> log_softmax(const Eigen::MatrixBase<Derived>& row) {
    using Scalar = typename Derived::Scalar;
    const Scalar m = row.maxCoeff();
    const auto shifted = (row.array() - m).matrix().eval();
    const Scalar lse = std::log(shifted.array().exp().sum());
    return (shifted.array() - lse).matrix();
}

/// NLL of `tokens` where the first token is scored from row `prev`.
template <typename Scalar>
Scalar sequence_nll(const BigramModel<Scalar>& theta, Eigen::Index prev, const TokenSequence& tokens) {
    Scalar total(0);
    for (int x : tokens) {
        if (x < 0 || x >= theta.vocab_size())
            throw ValidationError("token " + std::to_string(x) + " outside vocabulary of size " +
                                  std::to_string(theta.vocab_size()));
        total -= log_softmax(theta.logits.row(prev))(x);
        prev = x;
    }
    return total;
}

/// Adds d(NLL)/d(logits) of `tokens` (scored from row `prev`) into `grad`.
template <typename Scalar>
void accumulate_nll_grad(const BigramModel<Scalar>& theta, Eigen::Index prev, const TokenSequence& tokens,
                         typename BigramModel<Scalar>::Matrix& grad, Scalar weight = Scalar(1)) {
    for (int x : tokens) {
        if (x < 0 || x >= theta.vocab_size())
            throw ValidationError("token " + std::to_string(x) + " outside vocabulary of size " +
                                  std::to_string(theta.vocab_size()));
        auto p = log_softmax(theta.logits.row(prev)).array().exp().matrix().eval();
        p(x) -= Scalar(1);
        grad.row(prev) += weight * p;
        prev = x;
    }
}

/// Mean per-sequence NLL plus lambda * ||theta - theta0||_F^2.
double clm_loss(const ToyModel& theta, const std::vector<TokenSequence>& corpus, const ObjectiveConfig& cfg);
ToyModel::Matrix clm_grad(const ToyModel& theta, const std::vector<TokenSequence>& corpus, const ObjectiveConfig& cfg);

/// Whitespace tokenizer over a fitted vocabulary; id 0 is reserved for
/// out-of-vocabulary tokens and known tokens get ids 1.. in byte order.
class Vocabulary {
public:
    static constexpr int kUnknown = 0;

    static Vocabulary fit(const std::vector<std::string>& texts);
    TokenSequence encode(std::string_view text) const;
    TokenSequence operator()(std::string_view text) const { return encode(text); }
    int size() const { return static_cast<int>(ids_.size()) + 1; }

private:
    std::map<std::string, int, std::less<>> ids_;
};

using Tokenizer = std::function<TokenSequence(std::string_view)>;

/// Sum over steps of the answer-token NLL given the tokenized context. The
/// first answer token is scored from the last context token (the start row
/// when the context is empty). No regularizer.
double cascade_loss(const ToyModel& theta, const std::vector<cascade::StepContext>& contexts,
                    const Tokenizer& tokenizer);

struct GradientCheck {
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;  // |a - n| / max(1, |a|, |n|)
};

/// Compares clm_grad against central finite differences with step `eps`.
GradientCheck check_gradient(const ToyModel& theta, const std::vector<TokenSequence>& corpus,
                             const ObjectiveConfig& cfg, double eps = 1e-5);

}  // namespace ctikit::objective
