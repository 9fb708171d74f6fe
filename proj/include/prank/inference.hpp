#ifndef PRANK_INFERENCE_HPP
#define PRANK_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "prank/bank.hpp"
#include "prank/core_types.hpp"
#include "prank/encoders.hpp"
#include "prank/errors.hpp"
#include "prank/linalg.hpp"
#include "prank/mips_index.hpp"
#include "prank/random.hpp"

namespace prank {

enum class Strategy { top1, mode_h, mean, meanshift, sample, mixture };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::top1: return "top1";
        case Strategy::mode_h: return "mode_h";
        case Strategy::mean: return "mean";
        case Strategy::meanshift: return "meanshift";
        case Strategy::sample: return "sample";
        case Strategy::mixture: return "mixture";
    }
    return "?";
}

inline Strategy strategy_from_string(std::string_view s) {
    for (auto v : {Strategy::top1, Strategy::mode_h, Strategy::mean, Strategy::meanshift, Strategy::sample,
                   Strategy::mixture})
        if (to_string(v) == s) return v;
    throw ArgumentError("unknown strategy '" + std::string(s) + "'");
}

struct Prediction {
    Trajectory trajectory;
    double weight = 1.0;
    std::size_t mode_index = 0;
};

struct Candidate {
    std::size_t entry = 0;  // bank position
    double score = 0.0;     // <f_k(q), g(t)>
    double weight = 0.0;    // unnormalized posterior weight
};

struct InferenceConfig {
    std::size_t top_k = 150;
    // Multiply candidate weights by h(t) in mean, mean-shift and sampling so
    // the unique-entry bank stands in for samples drawn from h.
    bool h_weighted = true;
    std::size_t n_samples = 16;
    bool with_noise = false;
    Strategy mixture_strategy = Strategy::mean;
};

// Search results for an already-encoded scene, weighted by
// exp(alpha * (score - max score)), optionally times h(t).
inline std::vector<Candidate> candidates_for(const Embedding& scene_emb, double alpha, const MipsIndex& index,
                                             const TrajectoryBank& bank, std::size_t top_k, bool h_corrected) {
    const auto hits = index.search(scene_emb, top_k);
    std::vector<Candidate> out;
    out.reserve(hits.size());
    const double top = hits.front().score;
    for (const auto& h : hits) {
        const auto entry = static_cast<std::size_t>(h.id);
        if (entry >= bank.size()) throw ArgumentError("index refers to an entry outside the bank");
        double w = std::exp(alpha * (h.score - top));
        if (h_corrected) w *= bank.h_density(entry);
        out.push_back({entry, h.score, w});
    }
    return out;
}

inline std::vector<Candidate> candidate_scores(const ModelParams& params, const SceneFeatures& scene,
                                               const MipsIndex& index, const TrajectoryBank& bank, std::size_t top_k,
                                               std::size_t mode, bool h_corrected = false) {
    return candidates_for(encode_scene(params, scene, mode), params.alpha(mode), index, bank, top_k, h_corrected);
}

inline std::vector<double> normalized_weights(const std::vector<Candidate>& c) {
    double total = 0.0;
    for (const auto& x : c) total += x.weight;
    std::vector<double> w(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) w[i] = c[i].weight / total;
    return w;
}

// ---- per-mode strategies on a fixed candidate list -------------------------

inline Trajectory weighted_mean(const std::vector<Candidate>& cands, const TrajectoryBank& bank) {
    const auto w = normalized_weights(cands);
    std::vector<double> acc(2 * bank.M(), 0.0);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const auto f = bank.entry(cands[i].entry).trajectory.flat();
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w[i] * f[j];
    }
    return Trajectory(std::move(acc));
}

inline Trajectory highest_weight(const std::vector<Candidate>& cands, const TrajectoryBank& bank) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
        if (cands[i].weight > cands[best].weight) best = i;
    return bank.entry(cands[best].entry).trajectory;
}

struct MeanShiftResult {
    Trajectory trajectory;
    std::vector<double> objective_trace;  // F at the start and after every accepted move
    std::size_t iterations = 0;
};

struct MeanShiftOptions {
    double tolerance = 1e-4;   // meters, flattened norm of a move
    std::size_t max_iters = 50;
    double distance_floor = 1e-9;
    std::size_t max_halvings = 30;
};

// Climbs F(t) = sum_i w_i exp(-beta |t - t_i|) from the first point with the
// shadow-kernel fixed point t <- sum c_i t_i / sum c_i, where
// c_i = w_i beta exp(-beta r_i) / max(r_i, floor). When the iterate sits on a
// point, that point's cusp is handled with the Vardi-Zhang modification: stop
// if the pull of the others is weaker than the cusp slope w_j beta, otherwise
// step off the point along the others' fixed point.
inline MeanShiftResult mean_shift(const Matrix& points, std::span<const double> weights, double beta,
                                  const MeanShiftOptions& opt = {}) {
    if (points.rows() == 0) throw ArgumentError("mean shift needs at least one point");
    const Eigen::Index n = points.rows();
    auto objective = [&](const RowVector& t) {
        double f = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) f += weights[i] * std::exp(-beta * (t - points.row(i)).norm());
        return f;
    };

    MeanShiftResult res;
    RowVector t = points.row(0);
    double f_t = objective(t);
    res.objective_trace.push_back(f_t);
    for (std::size_t it = 0; it < opt.max_iters; ++it) {
        Eigen::Index on_point = -1;
        RowVector num = RowVector::Zero(points.cols());
        double den = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = (t - points.row(i)).norm();
            if (r < opt.distance_floor && on_point < 0) {
                on_point = i;
                continue;
            }
            const double c = weights[i] * beta * std::exp(-beta * r) / std::max(r, opt.distance_floor);
            num += c * points.row(i);
            den += c;
        }
        RowVector proposal;
        if (on_point >= 0) {
            if (den <= 0.0) break;
            const RowVector pull = num - den * t;  // sum over the others of c_i (t_i - t)
            const double cusp = weights[on_point] * beta;
            if (pull.norm() <= cusp) break;        // t is a local maximum
            const double gamma = cusp / pull.norm();
            proposal = (1.0 - gamma) * (num / den) + gamma * t;
        } else {
            if (den <= 0.0) break;
            proposal = num / den;
        }

        double f_new = objective(proposal);
        std::size_t halvings = 0;
        while (f_new < f_t && halvings < opt.max_halvings) {
            proposal = t + 0.5 * (proposal - t);
            f_new = objective(proposal);
            ++halvings;
        }
        if (f_new < f_t) break;
        const double move = (proposal - t).norm();
        t = proposal;
        f_t = f_new;
        res.objective_trace.push_back(f_t);
        res.iterations = it + 1;
        if (move < opt.tolerance) break;
    }
    res.trajectory = Trajectory(std::vector<double>(t.data(), t.data() + t.size()));
    return res;
}

inline MeanShiftResult mean_shift_candidates(const std::vector<Candidate>& cands, const TrajectoryBank& bank,
                                             double beta, const MeanShiftOptions& opt = {}) {
    std::vector<Trajectory> trajs;
    trajs.reserve(cands.size());
    for (const auto& c : cands) trajs.push_back(bank.entry(c.entry).trajectory);
    return mean_shift(stack_trajectories(trajs), normalized_weights(cands), beta, opt);
}

// Draws a noise vector with density proportional to exp(-beta |x|) in `dim`
// dimensions: radius ~ Gamma(dim, rate beta), direction uniform on the sphere.
inline std::vector<double> sample_laplace_noise(std::size_t dim, double beta, Rng& rng) {
    std::gamma_distribution<double> radius(static_cast<double>(dim), 1.0 / beta);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> dir(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : dir) {
            x = normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    const double r = radius(rng);
    for (auto& x : dir) x *= r / norm;
    return dir;
}

inline std::vector<Trajectory> sample_candidates(const std::vector<Candidate>& cands, const TrajectoryBank& bank,
                                                 std::size_t n_samples, double beta, bool with_noise, Rng& rng) {
    const auto w = normalized_weights(cands);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::vector<Trajectory> out;
    out.reserve(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Trajectory& base = bank.entry(cands[pick(rng)].entry).trajectory;
        if (!with_noise) {
            out.push_back(base);
            continue;
        }
        const auto noise = sample_laplace_noise(base.flat_size(), beta, rng);
        std::vector<double> flat(base.flat().begin(), base.flat().end());
        for (std::size_t j = 0; j < flat.size(); ++j) flat[j] += noise[j];
        out.push_back(Trajectory(std::move(flat)));
    }
    return out;
}

// ---- public strategies -------------------------------------------------------

inline Prediction predict_mode_top1(const ModelParams& params, const SceneFeatures& scene, const MipsIndex& index,
                                    const TrajectoryBank& bank, bool h_corrected = false, std::size_t top_k = 150,
                                    std::size_t mode = 0) {
    const auto cands = candidate_scores(params, scene, index, bank, h_corrected ? top_k : 1, mode, h_corrected);
    return {highest_weight(cands, bank), 1.0, mode};
}

inline Prediction predict_mean(const ModelParams& params, const SceneFeatures& scene, const MipsIndex& index,
                               const TrajectoryBank& bank, std::size_t top_k, bool h_weighted = true,
                               std::size_t mode = 0) {
    const auto cands = candidate_scores(params, scene, index, bank, top_k, mode, h_weighted);
    return {weighted_mean(cands, bank), 1.0, mode};
}

inline Prediction predict_mean_shift(const ModelParams& params, const SceneFeatures& scene, const MipsIndex& index,
                                     const TrajectoryBank& bank, std::size_t top_k, bool h_weighted = true,
                                     std::size_t mode = 0) {
    const auto cands = candidate_scores(params, scene, index, bank, top_k, mode, h_weighted);
    return {mean_shift_candidates(cands, bank, params.beta()).trajectory, 1.0, mode};
}

inline std::vector<Trajectory> sample_posterior(const ModelParams& params, const SceneFeatures& scene,
                                                const MipsIndex& index, const TrajectoryBank& bank, std::size_t top_k,
                                                std::size_t n_samples, Rng& rng, bool with_noise,
                                                bool h_weighted = true, std::size_t mode = 0) {
    const auto cands = candidate_scores(params, scene, index, bank, top_k, mode, h_weighted);
    return sample_candidates(cands, bank, n_samples, params.beta(), with_noise, rng);
}

// Runs `strategy` once per mode with (alpha_k, f_k); prediction k carries pi_k(q).
inline std::vector<Prediction> predict_mixture(const ModelParams& params, const SceneFeatures& scene,
                                               const MipsIndex& index, const TrajectoryBank& bank,
                                               const InferenceConfig& cfg) {
    const auto pi = mixture_weights(params, scene);
    std::vector<Prediction> out;
    for (std::size_t k = 0; k < params.spec().m; ++k) {
        Prediction p;
        switch (cfg.mixture_strategy) {
            case Strategy::top1: p = predict_mode_top1(params, scene, index, bank, false, cfg.top_k, k); break;
            case Strategy::mode_h: p = predict_mode_top1(params, scene, index, bank, true, cfg.top_k, k); break;
            case Strategy::mean: p = predict_mean(params, scene, index, bank, cfg.top_k, cfg.h_weighted, k); break;
            case Strategy::meanshift:
                p = predict_mean_shift(params, scene, index, bank, cfg.top_k, cfg.h_weighted, k);
                break;
            default: throw ArgumentError("mixture strategy must be top1, mode_h, mean or meanshift");
        }
        p.weight = pi[k];
        p.mode_index = k;
        out.push_back(std::move(p));
    }
    return out;
}

// Prediction set for one scene under any strategy; weights sum to 1.
inline std::vector<Prediction> predict(const ModelParams& params, const SceneFeatures& scene, const MipsIndex& index,
                                       const TrajectoryBank& bank, Strategy strategy, const InferenceConfig& cfg,
                                       Rng& rng) {
    switch (strategy) {
        case Strategy::top1: return {predict_mode_top1(params, scene, index, bank, false, cfg.top_k)};
        case Strategy::mode_h: return {predict_mode_top1(params, scene, index, bank, true, cfg.top_k)};
        case Strategy::mean: return {predict_mean(params, scene, index, bank, cfg.top_k, cfg.h_weighted)};
        case Strategy::meanshift: return {predict_mean_shift(params, scene, index, bank, cfg.top_k, cfg.h_weighted)};
        case Strategy::sample: {
            if (cfg.n_samples == 0) throw ArgumentError("n_samples must be >= 1");
            const auto draws = sample_posterior(params, scene, index, bank, cfg.top_k, cfg.n_samples, rng,
                                                cfg.with_noise, cfg.h_weighted);
            std::vector<Prediction> out;
            for (const auto& d : draws) out.push_back({d, 1.0 / static_cast<double>(draws.size()), 0});
            return out;
        }
        case Strategy::mixture: return predict_mixture(params, scene, index, bank, cfg);
    }
    return {};
}

}  // namespace prank

#endif  // PRANK_INFERENCE_HPP
