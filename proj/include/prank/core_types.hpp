#ifndef PRANK_CORE_TYPES_HPP
#define PRANK_CORE_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prank/errors.hpp"

namespace prank {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // radians, counter-clockwise from the world x axis
};

// M future positions (meters) in the agent frame: the agent sits at the
// origin at prediction time and faces the +x axis. Stored flattened as
// x0, y0, x1, y1, ... which is also the layout every encoder and distance
// computation consumes.
class Trajectory {
public:
    Trajectory() = default;

    explicit Trajectory(std::vector<double> flat) : coords_(std::move(flat)) {
        if (coords_.empty() || coords_.size() % 2 != 0)
            throw LengthError("trajectory needs a positive even number of coordinates, got " +
                              std::to_string(coords_.size()));
        for (double v : coords_)
            if (!std::isfinite(v)) throw ArgumentError("trajectory coordinate is not finite");
    }

    static Trajectory from_points(std::span<const Point> points) {
        std::vector<double> flat;
        flat.reserve(points.size() * 2);
        for (const auto& p : points) {
            flat.push_back(p.x);
            flat.push_back(p.y);
        }
        return Trajectory(std::move(flat));
    }

    static Trajectory zeros(std::size_t m) { return Trajectory(std::vector<double>(2 * m, 0.0)); }

    std::size_t size() const { return coords_.size() / 2; }
    std::size_t flat_size() const { return coords_.size(); }
    Point point(std::size_t i) const { return {coords_[2 * i], coords_[2 * i + 1]}; }
    std::span<const double> flat() const { return coords_; }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;

private:
    std::vector<double> coords_;
};

// Fixed-length scene descriptor fed to the scene encoder.
class SceneFeatures {
public:
    SceneFeatures() = default;
    explicit SceneFeatures(std::vector<double> values) : values_(std::move(values)) {
        for (double v : values_)
            if (!std::isfinite(v)) throw ArgumentError("scene feature is not finite");
    }
    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const SceneFeatures&, const SceneFeatures&) = default;

private:
    std::vector<double> values_;
};

struct Example {
    std::string id;
    SceneFeatures scene;
    Trajectory ground_truth;

    friend bool operator==(const Example&, const Example&) = default;
};

// Point on the unit sphere of the shared latent space.
class Embedding {
public:
    static constexpr double kNormTolerance = 1e-6;

    Embedding() = default;
    explicit Embedding(std::vector<double> values) : values_(std::move(values)) {
        double sq = 0.0;
        for (double v : values_) sq += v * v;
        if (values_.empty() || std::abs(std::sqrt(sq) - 1.0) > kNormTolerance)
            throw ArgumentError("embedding is not unit-norm");
    }
    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    double dot(const Embedding& other) const {
        if (other.size() != size()) throw ShapeError("embedding dimensions differ");
        double s = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * other.values_[i];
        return s;
    }

private:
    std::vector<double> values_;
};

// Dataset-level constants carried in file headers.
struct DatasetHeader {
    std::size_t M = 25;     // future steps
    double dt = 0.2;        // seconds between steps
    std::size_t H = 10;     // history steps summarized in the scene features
    std::size_t F = 44;     // scene feature length
    int version = 1;

    friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

inline Trajectory to_agent_frame(std::span<const Point> world_points, const Pose& anchor,
                                 std::size_t expected_m) {
    if (world_points.size() != expected_m)
        throw LengthError("expected " + std::to_string(expected_m) + " points, got " +
                          std::to_string(world_points.size()));
    if (!std::isfinite(anchor.heading) || !std::isfinite(anchor.x) || !std::isfinite(anchor.y))
        throw ArgumentError("anchor pose is not finite");
    const double c = std::cos(anchor.heading);
    const double s = std::sin(anchor.heading);
    std::vector<double> flat;
    flat.reserve(2 * world_points.size());
    for (const auto& p : world_points) {
        const double dx = p.x - anchor.x;
        const double dy = p.y - anchor.y;
        flat.push_back(c * dx + s * dy);
        flat.push_back(-s * dx + c * dy);
    }
    return Trajectory(std::move(flat));
}

// Inverse of to_agent_frame.
inline std::vector<Point> to_world_frame(const Trajectory& t, const Pose& anchor) {
    const double c = std::cos(anchor.heading);
    const double s = std::sin(anchor.heading);
    std::vector<Point> out;
    out.reserve(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const Point p = t.point(i);
        out.push_back({anchor.x + c * p.x - s * p.y, anchor.y + s * p.x + c * p.y});
    }
    return out;
}

// Euclidean norm over the flattened 2M coordinates.
inline double trajectory_distance(const Trajectory& a, const Trajectory& b) {
    if (a.size() != b.size())
        throw LengthError("trajectory lengths differ: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    const auto fa = a.flat();
    const auto fb = b.flat();
    double sq = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        const double d = fa[i] - fb[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

}  // namespace prank

#endif  // PRANK_CORE_TYPES_HPP
