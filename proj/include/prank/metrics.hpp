#ifndef PRANK_METRICS_HPP
#define PRANK_METRICS_HPP

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prank/core_types.hpp"
#include "prank/dataset.hpp"
#include "prank/errors.hpp"
#include "prank/inference.hpp"

namespace prank {

inline constexpr double kHitThreshold = 0.5;  // meters
inline constexpr double kLlSigma = 1.0;

namespace detail {

inline void check_lengths(const Trajectory& a, const Trajectory& b) {
    if (a.size() != b.size()) throw LengthError("prediction and ground truth differ in length");
}

inline double point_error(const Trajectory& a, const Trajectory& b, std::size_t i) {
    const Point p = a.point(i), q = b.point(i);
    return std::hypot(p.x - q.x, p.y - q.y);
}

}  // namespace detail

// Mean per-timestamp displacement.
inline double ade(const Trajectory& pred, const Trajectory& gt) {
    detail::check_lengths(pred, gt);
    double s = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) s += detail::point_error(pred, gt, i);
    return s / static_cast<double>(gt.size());
}

// Displacement at the last timestamp.
inline double fde(const Trajectory& pred, const Trajectory& gt) {
    detail::check_lengths(pred, gt);
    return detail::point_error(pred, gt, gt.size() - 1);
}

inline double max_displacement(const Trajectory& pred, const Trajectory& gt) {
    detail::check_lengths(pred, gt);
    double m = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) m = std::max(m, detail::point_error(pred, gt, i));
    return m;
}

// Strictly below the threshold at every timestamp.
inline bool hit(const Trajectory& pred, const Trajectory& gt, double threshold = kHitThreshold) {
    return max_displacement(pred, gt) < threshold;
}

// log sum_i w_i N(gt | pred_i, sigma^2 I) over the flattened 2M coordinates.
inline double ll(const std::vector<Prediction>& preds, const Trajectory& gt, double sigma = kLlSigma) {
    if (preds.empty()) throw ArgumentError("LL needs at least one prediction");
    double total = 0.0;
    for (const auto& p : preds) {
        if (!(p.weight >= 0.0)) throw ArgumentError("prediction weights must be non-negative");
        total += p.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("prediction weights must sum to 1");
    const double dim = static_cast<double>(gt.flat_size());
    const double log_norm = -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma * sigma);
    std::vector<double> terms;
    for (const auto& p : preds) {
        if (p.weight == 0.0) continue;
        const double d = trajectory_distance(p.trajectory, gt);
        terms.push_back(std::log(p.weight) + log_norm - 0.5 * d * d / (sigma * sigma));
    }
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
}

struct EvalReport {
    double ade = 0.0;
    double fde = 0.0;
    double hit_rate = 0.0;
    double ll = 0.0;
    double ll_per_timestamp = 0.0;
    std::size_t n_examples = 0;
};

struct ExampleMetrics {
    std::string id;
    double ade = 0.0;
    double fde = 0.0;
    bool hit = false;
    double ll = 0.0;
};

inline nlohmann::json to_json(const EvalReport& r) {
    return {{"ade", r.ade}, {"fde", r.fde}, {"hit_rate", r.hit_rate}, {"ll", r.ll},
            {"ll_per_timestamp", r.ll_per_timestamp}, {"n_examples", r.n_examples}};
}

inline nlohmann::json to_json(const ExampleMetrics& m) {
    return {{"id", m.id}, {"ade", m.ade}, {"fde", m.fde}, {"hit", m.hit}, {"ll", m.ll}};
}

// Point metrics use the highest-weight prediction (lowest mode_index on ties);
// LL uses the whole weighted set.
inline ExampleMetrics evaluate_example(const std::string& id, const std::vector<Prediction>& preds,
                                       const Trajectory& gt) {
    if (preds.empty()) throw ArgumentError("no predictions for " + id);
    const Prediction* best = &preds[0];
    for (const auto& p : preds)
        if (p.weight > best->weight || (p.weight == best->weight && p.mode_index < best->mode_index)) best = &p;
    return {id, ade(best->trajectory, gt), fde(best->trajectory, gt), hit(best->trajectory, gt), ll(preds, gt)};
}

inline EvalReport summarize(const std::vector<ExampleMetrics>& per_example, std::size_t m) {
    EvalReport r;
    r.n_examples = per_example.size();
    if (per_example.empty()) return r;
    for (const auto& e : per_example) {
        r.ade += e.ade;
        r.fde += e.fde;
        r.hit_rate += e.hit ? 1.0 : 0.0;
        r.ll += e.ll;
    }
    const double n = static_cast<double>(per_example.size());
    r.ade /= n;
    r.fde /= n;
    r.hit_rate /= n;
    r.ll /= n;
    r.ll_per_timestamp = r.ll / static_cast<double>(m);
    return r;
}

// ---- prediction files ---------------------------------------------------------

struct PredictionRecord {
    std::string id;
    Prediction prediction;
};

inline nlohmann::json to_json(const PredictionRecord& r) {
    return {{"id", r.id},
            {"mode_index", r.prediction.mode_index},
            {"weight", r.prediction.weight},
            {"trajectory", detail::trajectory_to_json(r.prediction.trajectory)}};
}

inline void save_predictions(const std::string& path, const std::vector<PredictionRecord>& records) {
    auto out = detail::open_output(path);
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw ArgumentError("write failed: " + path);
}

inline std::vector<PredictionRecord> load_predictions(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<PredictionRecord> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        const auto j = detail::parse_line(text, line);
        PredictionRecord r;
        r.id = detail::required<std::string>(j, "id", line);
        r.prediction.mode_index = detail::required<std::size_t>(j, "mode_index", line);
        r.prediction.weight = detail::required<double>(j, "weight", line);
        if (!j.contains("trajectory")) throw ParseError("missing field 'trajectory'", line);
        const auto& t = j["trajectory"];
        r.prediction.trajectory = detail::trajectory_from_json(t, t.is_array() ? t.size() : 0, line);
        out.push_back(std::move(r));
    }
    return out;
}

// Groups predictions by id and scores them against the dataset ground truth.
inline std::vector<ExampleMetrics> evaluate_examples(const std::vector<PredictionRecord>& records,
                                                     const Dataset& data) {
    std::map<std::string, std::vector<Prediction>> by_id;
    for (const auto& r : records) by_id[r.id].push_back(r.prediction);
    std::vector<ExampleMetrics> out;
    for (const auto& ex : data.examples) {
        const auto it = by_id.find(ex.id);
        if (it == by_id.end()) continue;
        out.push_back(evaluate_example(ex.id, it->second, ex.ground_truth));
        by_id.erase(it);
    }
    if (!by_id.empty()) throw ArgumentError("prediction for unknown example id " + by_id.begin()->first);
    return out;
}

inline EvalReport evaluate(const std::vector<PredictionRecord>& records, const Dataset& data) {
    return summarize(evaluate_examples(records, data), data.header.M);
}

}  // namespace prank

#endif  // PRANK_METRICS_HPP
