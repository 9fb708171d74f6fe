#ifndef PRANK_LOSSES_HPP
#define PRANK_LOSSES_HPP

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "prank/autodiff.hpp"
#include "prank/core_types.hpp"
#include "prank/encoders.hpp"
#include "prank/errors.hpp"
#include "prank/linalg.hpp"

namespace prank {

// log of the Monte-Carlo normalizer (1/N) sum_j exp(alpha <q, g_j>). With
// weights it becomes sum_j w_j exp(.) / sum_j w_j, which is the exact
// normalizer when the samples enumerate a discrete support with weights h.
inline double log_mc_normalizer(const Embedding& scene, std::span<const Embedding> samples, double alpha,
                                std::span<const double> weights = {}) {
    if (samples.empty()) throw ArgumentError("need at least one sample");
    if (!weights.empty() && weights.size() != samples.size()) throw ShapeError("weights do not match samples");
    RowVector logits(static_cast<Eigen::Index>(samples.size()));
    double log_total = 0.0;
    if (weights.empty()) {
        log_total = std::log(static_cast<double>(samples.size()));
    } else {
        double total = 0.0;
        for (double w : weights) total += w;
        log_total = std::log(total);
    }
    for (std::size_t j = 0; j < samples.size(); ++j)
        logits(static_cast<Eigen::Index>(j)) =
            alpha * scene.dot(samples[j]) + (weights.empty() ? 0.0 : std::log(weights[j]));
    return ad::Tape::logsumexp(logits) - log_total;
}

inline double mc_normalizer(const Embedding& scene, std::span<const Embedding> samples, double alpha,
                            std::span<const double> weights = {}) {
    return std::exp(log_mc_normalizer(scene, samples, alpha, weights));
}

// One batch of the sampled-softmax objective. Every row b of `scenes` is
// scored against all candidate rows; gt_index[b] locates its ground truth
// among the candidates. `ground_truth` rows feed the noise kernel.
struct LossBatch {
    Matrix scenes;                        // B x F
    Matrix candidates;                    // C x 2M
    std::vector<Eigen::Index> gt_index;   // B
    Matrix ground_truth;                  // B x 2M
    RowVector candidate_log_weight;       // empty or 1 x C (log h for enumerated supports)

    void validate() const {
        const auto b = scenes.rows();
        if (b == 0 || candidates.rows() == 0) throw ArgumentError("empty loss batch");
        if (static_cast<Eigen::Index>(gt_index.size()) != b || ground_truth.rows() != b)
            throw ShapeError("loss batch rows disagree");
        if (ground_truth.cols() != candidates.cols()) throw ShapeError("ground truth and candidates differ in length");
        if (candidate_log_weight.size() != 0 && candidate_log_weight.size() != candidates.rows())
            throw ShapeError("candidate weights do not match candidates");
    }
};

struct LossOptions {
    bool noise = false;              // latent noise model instead of the plain softmax
    bool kernel_normalizer = false;  // include the exp(-beta r) normalizing constant
};

// log of the integral of exp(-beta |x|) over R^dim.
inline double log_laplace_kernel_constant(std::size_t dim, double beta) {
    const double n = static_cast<double>(dim);
    return std::log(2.0) + 0.5 * n * std::log(std::numbers::pi) - std::lgamma(0.5 * n) + std::lgamma(n) -
           n * std::log(beta);
}

inline Matrix pairwise_distances(const Matrix& a, const Matrix& b) {
    Matrix d(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
    return d;
}

namespace detail {

inline Matrix broadcast_rows(const RowVector& row, Eigen::Index rows) {
    Matrix m(rows, row.size());
    m.rowwise() = row;
    return m;
}

}  // namespace detail

// Per-example log-likelihood (B x 1) of mode k given precomputed trunk output,
// candidate embeddings and, for the noise model, the distance matrix.
inline ad::Var mode_log_likelihood(const BoundParams& p, ad::Var trunk, ad::Var candidate_emb, std::size_t k,
                                   const LossBatch& batch, const Matrix* distances, const LossOptions& opt) {
    auto& t = p.tape();
    const ad::Var scene_emb = scene_head(p, trunk, k);
    ad::Var logits = t.scale(t.matmul_nt(scene_emb, candidate_emb), p.alpha(k));
    if (batch.candidate_log_weight.size() != 0)
        logits = t.add_const(logits, detail::broadcast_rows(batch.candidate_log_weight, batch.scenes.rows()));
    const ad::Var log_z = t.logsumexp_rows(logits);
    if (!opt.noise) return t.sub(t.gather_cols(logits, batch.gt_index), log_z);

    const ad::Var neg_beta_d = t.scale(t.constant(-*distances), p.beta());
    ad::Var ll = t.sub(t.logsumexp_rows(t.add(logits, neg_beta_d)), log_z);
    if (opt.kernel_normalizer) {
        // -log C(beta) = const + dim * beta_raw
        const auto dim = static_cast<std::size_t>(batch.candidates.cols());
        const double c0 = log_laplace_kernel_constant(dim, 1.0);
        const ad::Var ones = t.constant(Matrix::Ones(batch.scenes.rows(), 1));
        const ad::Var beta_raw = p[p.params().beta_raw_index()];
        ll = t.add(ll, t.add_const(t.scale_const(t.matmul(ones, beta_raw), static_cast<double>(dim)),
                                   Matrix::Constant(batch.scenes.rows(), 1, -c0)));
    }
    return ll;
}

// Scalar loss: mean negative log-likelihood of the (mixture) model. With
// m = 1 the mixture reduces exactly to the single-mode likelihood.
inline ad::Var loss_graph(const BoundParams& p, const LossBatch& batch, const LossOptions& opt) {
    batch.validate();
    auto& t = p.tape();
    const ad::Var trunk = scene_trunk(p, t.constant(batch.scenes));
    const ad::Var cand = trajectory_tower(p, t.constant(batch.candidates));
    Matrix distances;
    if (opt.noise) distances = pairwise_distances(batch.ground_truth, batch.candidates);
    const std::size_t m = p.params().spec().m;
    std::vector<ad::Var> per_mode;
    per_mode.reserve(m);
    for (std::size_t k = 0; k < m; ++k)
        per_mode.push_back(mode_log_likelihood(p, trunk, cand, k, batch, &distances, opt));
    ad::Var ll = per_mode[0];
    if (m > 1) {
        const ad::Var log_pi = t.log_softmax_rows(mixture_logits(p, trunk));
        ll = t.logsumexp_rows(t.add(t.hcat(per_mode), log_pi));
    }
    return t.scale_const(t.mean(ll), -1.0);
}

struct LossValue {
    double loss = 0.0;
    std::vector<double> gradient;
};

inline double evaluate_loss(const ModelParams& params, const LossBatch& batch, const LossOptions& opt) {
    ad::Tape tape;
    BoundParams p(tape, params);
    return tape.scalar(loss_graph(p, batch, opt));
}

inline LossValue loss_and_gradient(const ModelParams& params, const LossBatch& batch, const LossOptions& opt) {
    ad::Tape tape;
    BoundParams p(tape, params);
    const ad::Var loss = loss_graph(p, batch, opt);
    LossValue out;
    out.loss = tape.scalar(loss);
    out.gradient = backprop(p, loss);
    return out;
}

namespace detail {

inline const ModelParams& single_mode(const ModelParams& params) {
    if (params.spec().m != 1)
        throw ArgumentError("single-mode loss called on a model with " + std::to_string(params.spec().m) + " modes");
    return params;
}

}  // namespace detail

inline double nll_base(const ModelParams& params, const LossBatch& batch) {
    return evaluate_loss(detail::single_mode(params), batch, {false, false});
}

inline double nll_noise(const ModelParams& params, const LossBatch& batch, bool kernel_normalizer = false) {
    return evaluate_loss(detail::single_mode(params), batch, {true, kernel_normalizer});
}

inline double nll_mixture(const ModelParams& params, const LossBatch& batch, bool noise = false) {
    return evaluate_loss(params, batch, {noise, false});
}

}  // namespace prank

#endif  // PRANK_LOSSES_HPP
