#ifndef PRANK_KMEANS_HPP
#define PRANK_KMEANS_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "prank/errors.hpp"
#include "prank/linalg.hpp"
#include "prank/random.hpp"

namespace prank {

struct KMeansResult {
    Matrix centers;                       // K x D
    std::vector<std::uint32_t> assignments;
    std::vector<double> objective_trace;  // full-batch only: one value per update
    double objective = 0.0;               // sum of squared distances to assigned centers
};

namespace detail {

inline double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

// Nearest center; on ties the lowest index wins unless `prefer` is among the tied.
inline std::uint32_t nearest_center(const Matrix& data, Eigen::Index i, const Matrix& centers,
                                    std::int64_t prefer, double* best_out = nullptr) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const double d = squared_distance(data, i, centers, c);
        if (d < best) {
            best = d;
            arg = static_cast<std::uint32_t>(c);
        }
    }
    if (prefer >= 0 && squared_distance(data, i, centers, prefer) == best)
        arg = static_cast<std::uint32_t>(prefer);
    if (best_out) *best_out = best;
    return arg;
}

inline void validate_kmeans_args(const Matrix& data, std::size_t k) {
    if (k == 0) throw ArgumentError("K must be at least 1");
    if (k > static_cast<std::size_t>(data.rows()))
        throw ArgumentError("K = " + std::to_string(k) + " exceeds the number of points " +
                            std::to_string(data.rows()));
}

// Moves the point farthest from its center into each empty cluster.
inline void repair_empty_clusters(const Matrix& data, Matrix& centers,
                                  std::vector<std::uint32_t>& assign) {
    const auto k = static_cast<std::size_t>(centers.rows());
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : assign) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] != 0) continue;
        double worst = -1.0;
        std::size_t victim = 0;
        for (std::size_t i = 0; i < assign.size(); ++i) {
            if (sizes[assign[i]] < 2) continue;
            const double d = squared_distance(data, static_cast<Eigen::Index>(i), centers, assign[i]);
            if (d > worst) {
                worst = d;
                victim = i;
            }
        }
        if (worst < 0.0) throw ArgumentError("cannot fill empty cluster: too few points");
        --sizes[assign[victim]];
        assign[victim] = static_cast<std::uint32_t>(c);
        ++sizes[c];
        centers.row(static_cast<Eigen::Index>(c)) = data.row(static_cast<Eigen::Index>(victim));
    }
}

inline double objective(const Matrix& data, const Matrix& centers,
                        const std::vector<std::uint32_t>& assign) {
    double total = 0.0;
    for (std::size_t i = 0; i < assign.size(); ++i)
        total += squared_distance(data, static_cast<Eigen::Index>(i), centers, assign[i]);
    return total;
}

}  // namespace detail

// k-means++ seeding. Throws if the data has fewer than K distinct points.
inline Matrix kmeans_plus_plus(const Matrix& data, std::size_t k, Rng& rng) {
    detail::validate_kmeans_args(data, k);
    const Eigen::Index n = data.rows();
    Matrix centers(static_cast<Eigen::Index>(k), data.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = data.row(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = detail::squared_distance(data, i, centers, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        if (!(total > 0.0))
            throw ArgumentError("K = " + std::to_string(k) + " exceeds the number of distinct points");
        const double target = unit(rng) * total;
        double acc = 0.0;
        Eigen::Index pick = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
            acc += d2[i];
            if (d2[i] > 0.0) pick = i;
            if (acc > target && d2[i] > 0.0) break;
        }
        const auto row = static_cast<Eigen::Index>(c);
        centers.row(row) = data.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], detail::squared_distance(data, i, centers, row));
    }
    return centers;
}

// Lloyd iterations from a k-means++ start.
inline KMeansResult kmeans_full(const Matrix& data, std::size_t k, std::size_t max_iters,
                                std::uint64_t seed) {
    detail::validate_kmeans_args(data, k);
    Rng rng(seed);
    KMeansResult r;
    r.centers = kmeans_plus_plus(data, k, rng);
    const auto n = static_cast<std::size_t>(data.rows());
    r.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        r.assignments[i] = detail::nearest_center(data, static_cast<Eigen::Index>(i), r.centers, -1);
    detail::repair_empty_clusters(data, r.centers, r.assignments);

    auto update = [&] {
        Matrix sums = Matrix::Zero(r.centers.rows(), r.centers.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(r.assignments[i]) += data.row(static_cast<Eigen::Index>(i));
            ++counts[r.assignments[i]];
        }
        for (std::size_t c = 0; c < k; ++c)
            r.centers.row(static_cast<Eigen::Index>(c)) =
                sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
        r.objective_trace.push_back(detail::objective(data, r.centers, r.assignments));
    };

    bool converged = false;
    for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
        update();
        auto next = r.assignments;
        for (std::size_t i = 0; i < n; ++i)
            next[i] = detail::nearest_center(data, static_cast<Eigen::Index>(i), r.centers,
                                             r.assignments[i]);
        detail::repair_empty_clusters(data, r.centers, next);
        if (next == r.assignments) {
            converged = true;
            break;
        }
        r.assignments = std::move(next);
    }
    if (!converged) update();
    r.objective = r.objective_trace.back();
    return r;
}

// Mini-batch k-means with per-center learning rate 1 / (points seen).
// Batches walk a seeded permutation of the data; batch_size >= n uses all
// points every batch.
inline KMeansResult kmeans_minibatch(const Matrix& data, std::size_t k, std::size_t batch_size,
                                     std::size_t n_batches, std::uint64_t seed) {
    detail::validate_kmeans_args(data, k);
    if (batch_size == 0) throw ArgumentError("batch_size must be at least 1");
    Rng rng(seed);
    KMeansResult r;
    r.centers = kmeans_plus_plus(data, k, rng);
    const auto n = static_cast<std::size_t>(data.rows());
    const std::size_t bs = std::min(batch_size, n);

    Rng order_rng = make_stream(seed, 0, 0x6d62);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = n;  // forces a shuffle before the first batch
    std::vector<std::size_t> counts(k, 0);
    std::vector<std::size_t> batch(bs);
    std::vector<std::uint32_t> cached(bs);

    for (std::size_t b = 0; b < n_batches; ++b) {
        for (std::size_t j = 0; j < bs; ++j) {
            if (cursor == n) {
                std::shuffle(order.begin(), order.end(), order_rng);
                cursor = 0;
            }
            batch[j] = order[cursor++];
        }
        for (std::size_t j = 0; j < bs; ++j)
            cached[j] = detail::nearest_center(data, static_cast<Eigen::Index>(batch[j]), r.centers, -1);
        for (std::size_t j = 0; j < bs; ++j) {
            const auto c = static_cast<Eigen::Index>(cached[j]);
            const double eta = 1.0 / static_cast<double>(++counts[cached[j]]);
            r.centers.row(c) += eta * (data.row(static_cast<Eigen::Index>(batch[j])) - r.centers.row(c));
        }
    }

    r.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        r.assignments[i] = detail::nearest_center(data, static_cast<Eigen::Index>(i), r.centers, -1);
    detail::repair_empty_clusters(data, r.centers, r.assignments);
    r.objective = detail::objective(data, r.centers, r.assignments);
    return r;
}

}  // namespace prank

#endif  // PRANK_KMEANS_HPP
