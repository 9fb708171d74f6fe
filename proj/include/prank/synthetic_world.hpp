#ifndef PRANK_SYNTHETIC_WORLD_HPP
#define PRANK_SYNTHETIC_WORLD_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "prank/core_types.hpp"
#include "prank/dataset.hpp"
#include "prank/errors.hpp"
#include "prank/random.hpp"

namespace prank {

// `fork_signaled` follows fork geometry but its scene reveals the branch.
enum class ScenarioKind { straight, turn_left, turn_right, stop, fork, fork_signaled };

inline std::string_view to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::straight: return "straight";
        case ScenarioKind::turn_left: return "turn_left";
        case ScenarioKind::turn_right: return "turn_right";
        case ScenarioKind::stop: return "stop";
        case ScenarioKind::fork: return "fork";
        case ScenarioKind::fork_signaled: return "fork_signaled";
    }
    return "?";
}

inline ScenarioKind scenario_kind_from_string(std::string_view s) {
    for (auto k : {ScenarioKind::straight, ScenarioKind::turn_left, ScenarioKind::turn_right,
                   ScenarioKind::stop, ScenarioKind::fork, ScenarioKind::fork_signaled})
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown scenario kind '" + std::string(s) + "'");
}

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::straight;
    double speed = 10.0;      // m/s at prediction time
    double noise_std = 0.0;   // meters, added to every ground-truth coordinate
    double weight = 1.0;
};

struct WorldConfig {
    std::size_t M = 25;
    double dt = 0.2;
    std::size_t H = 10;

    std::size_t feature_dim() const { return 4 * H + 5; }
    double horizon() const { return static_cast<double>(M) * dt; }
    DatasetHeader header() const { return {M, dt, H, feature_dim(), kDatasetVersion}; }
};

// Template geometry. Turns sweep 90 degrees over the horizon; a fork runs
// straight for the first fifth of the horizon, then bends +-30 degrees on a
// constant-curvature arc.
inline constexpr double kTurnSweep = std::numbers::pi / 2.0;
inline constexpr double kForkSweep = std::numbers::pi / 6.0;
inline constexpr double kForkLeadInFraction = 0.2;

// Layout of the context block that follows the 4*H history values.
struct SceneLayout {
    std::size_t H;
    std::size_t speed() const { return 4 * H; }
    std::size_t curvature() const { return 4 * H + 1; }
    std::size_t time_to_branch() const { return 4 * H + 2; }
    std::size_t decel_flag() const { return 4 * H + 3; }
    std::size_t signal() const { return 4 * H + 4; }  // +1 left, -1 right, 0 none
};

struct KinematicState {
    Point position;
    Point velocity;
};

// Closed-form kinematics of one scenario at time t (seconds, t = 0 is the
// prediction time, negative t is history). `branch` selects the fork side
// (+1 left, -1 right) and is ignored by the other kinds.
inline KinematicState template_state(ScenarioKind kind, double speed, int branch, double t,
                                     const WorldConfig& world) {
    const double horizon = world.horizon();
    auto arc = [](double v, double omega, double tau) -> KinematicState {
        return {{std::sin(omega * tau) * v / omega, (1.0 - std::cos(omega * tau)) * v / omega},
                {v * std::cos(omega * tau), v * std::sin(omega * tau)}};
    };
    switch (kind) {
        case ScenarioKind::straight: return {{speed * t, 0.0}, {speed, 0.0}};
        case ScenarioKind::turn_left: return arc(speed, kTurnSweep / horizon, t);
        case ScenarioKind::turn_right: return arc(speed, -kTurnSweep / horizon, t);
        case ScenarioKind::stop: {
            // Linear deceleration reaching zero speed at the end of the horizon.
            const double decel = speed / horizon;
            const double tc = std::min(t, horizon);
            return {{speed * tc - 0.5 * decel * tc * tc, 0.0}, {std::max(speed - decel * t, 0.0), 0.0}};
        }
        case ScenarioKind::fork:
        case ScenarioKind::fork_signaled: {
            const double lead = kForkLeadInFraction * horizon;
            if (t <= lead) return {{speed * t, 0.0}, {speed, 0.0}};
            const double omega = branch * kForkSweep / (horizon - lead);
            auto s = arc(speed, omega, t - lead);
            s.position.x += speed * lead;
            return s;
        }
    }
    return {};
}

// Noise-free future trajectory of a scenario: points at t = dt, 2dt, ..., M dt.
inline Trajectory template_trajectory(ScenarioKind kind, double speed, int branch,
                                      const WorldConfig& world) {
    std::vector<double> flat;
    flat.reserve(2 * world.M);
    for (std::size_t k = 1; k <= world.M; ++k) {
        const auto s = template_state(kind, speed, branch, static_cast<double>(k) * world.dt, world);
        flat.push_back(s.position.x);
        flat.push_back(s.position.y);
    }
    return Trajectory(std::move(flat));
}

// Signed Menger curvature through three points (positive = turning left).
inline double signed_curvature(Point a, Point b, Point c) {
    const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    const double ab = std::hypot(b.x - a.x, b.y - a.y);
    const double bc = std::hypot(c.x - b.x, c.y - b.y);
    const double ca = std::hypot(a.x - c.x, a.y - c.y);
    const double denom = ab * bc * ca;
    return denom < 1e-12 ? 0.0 : 2.0 * cross / denom;
}

inline bool is_fork(ScenarioKind kind) { return kind == ScenarioKind::fork || kind == ScenarioKind::fork_signaled; }

inline double turn_signal(ScenarioKind kind, int branch) {
    switch (kind) {
        case ScenarioKind::turn_left: return 1.0;
        case ScenarioKind::turn_right: return -1.0;
        case ScenarioKind::fork_signaled: return branch > 0 ? 1.0 : -1.0;
        default: return 0.0;
    }
}

// History (x, y, vx, vy) at t = -(H-1)dt ... 0 followed by the context block.
// `branch` only matters for the signaled fork.
inline SceneFeatures template_scene(ScenarioKind kind, double speed, const WorldConfig& world, int branch = 1) {
    std::vector<double> values;
    values.reserve(world.feature_dim());
    std::vector<Point> history;
    for (std::size_t j = 0; j < world.H; ++j) {
        const double t = -static_cast<double>(world.H - 1 - j) * world.dt;
        // The fork is indistinguishable from straight driving before the branch.
        const auto s = template_state(kind, speed, 1, t, world);
        values.insert(values.end(), {s.position.x, s.position.y, s.velocity.x, s.velocity.y});
        history.push_back(s.position);
    }
    const auto now = template_state(kind, speed, 1, 0.0, world);
    values.push_back(std::hypot(now.velocity.x, now.velocity.y));
    values.push_back(history.size() >= 3 ? signed_curvature(history[history.size() - 3],
                                                            history[history.size() - 2],
                                                            history.back())
                                         : 0.0);
    values.push_back(is_fork(kind) ? kForkLeadInFraction * world.horizon() : -1.0);
    values.push_back(kind == ScenarioKind::stop ? 1.0 : 0.0);
    values.push_back(turn_signal(kind, branch));
    return SceneFeatures(std::move(values));
}

inline void validate_mix(const std::vector<ScenarioSpec>& mix) {
    if (mix.empty()) throw ArgumentError("scenario mix is empty");
    double total = 0.0;
    for (const auto& s : mix) {
        if (!(s.speed >= 0.0) || !(s.noise_std >= 0.0) || !(s.weight >= 0.0))
            throw ArgumentError("scenario speed, noise_std and weight must be non-negative");
        total += s.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("scenario weights must sum to 1");
}

// Parses "kind[:speed[:noise_std[:weight]]],..." and normalizes the weights.
inline std::vector<ScenarioSpec> parse_mix(const std::string& text) {
    std::vector<ScenarioSpec> mix;
    std::stringstream entries(text);
    std::string entry;
    while (std::getline(entries, entry, ',')) {
        if (entry.empty()) continue;
        std::vector<std::string> parts;
        std::stringstream fields(entry);
        std::string f;
        while (std::getline(fields, f, ':')) parts.push_back(f);
        if (parts.empty() || parts.size() > 4) throw ArgumentError("bad mix entry '" + entry + "'");
        ScenarioSpec s;
        s.kind = scenario_kind_from_string(parts[0]);
        try {
            if (parts.size() > 1) s.speed = std::stod(parts[1]);
            if (parts.size() > 2) s.noise_std = std::stod(parts[2]);
            if (parts.size() > 3) s.weight = std::stod(parts[3]);
        } catch (const std::logic_error&) {
            throw ArgumentError("bad number in mix entry '" + entry + "'");
        }
        mix.push_back(s);
    }
    if (mix.empty()) throw ArgumentError("scenario mix is empty");
    double total = 0.0;
    for (const auto& s : mix) total += s.weight;
    if (!(total > 0.0)) throw ArgumentError("scenario weights sum to zero");
    for (auto& s : mix) s.weight /= total;
    return mix;
}

// Scenario kind encoded in generated example ids ("<index>-<kind>").
inline std::optional<ScenarioKind> kind_from_id(std::string_view id) {
    const auto dash = id.find('-');
    if (dash == std::string_view::npos) return std::nullopt;
    try {
        return scenario_kind_from_string(id.substr(dash + 1));
    } catch (const ArgumentError&) {
        return std::nullopt;
    }
}

inline Example generate_one(const std::vector<ScenarioSpec>& mix, std::uint64_t seed,
                            std::uint64_t index, const WorldConfig& world) {
    Rng rng = make_stream(seed, index);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double u = unit(rng);
    std::size_t pick = mix.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        acc += mix[i].weight;
        if (u < acc) {
            pick = i;
            break;
        }
    }
    // Skip zero-weight tail entries that rounding could otherwise select.
    while (pick > 0 && mix[pick].weight == 0.0) --pick;
    const auto& spec = mix[pick];
    const int branch = unit(rng) < 0.5 ? 1 : -1;

    const auto clean = template_trajectory(spec.kind, spec.speed, branch, world);
    std::vector<double> flat(clean.flat().begin(), clean.flat().end());
    // Noise is always drawn so the stream layout does not depend on noise_std.
    for (auto& v : flat) v += spec.noise_std * normal(rng);

    std::string id = std::to_string(index);
    id = std::string(id.size() < 6 ? 6 - id.size() : 0, '0') + id + "-" + std::string(to_string(spec.kind));
    return {std::move(id), template_scene(spec.kind, spec.speed, world, branch), Trajectory(std::move(flat))};
}

inline std::vector<Example> generate(const std::vector<ScenarioSpec>& mix, std::size_t n,
                                     std::uint64_t seed, const WorldConfig& world = {}) {
    if (n == 0) throw ArgumentError("n must be at least 1");
    validate_mix(mix);
    if (world.M < 2) throw ArgumentError("M must be at least 2");
    if (!(world.dt > 0.0)) throw ArgumentError("dt must be positive");
    if (world.H < 1) throw ArgumentError("H must be at least 1");
    std::vector<Example> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(mix, seed, i, world));
    return out;
}

inline Dataset generate_dataset(const std::vector<ScenarioSpec>& mix, std::size_t n,
                                std::uint64_t seed, const WorldConfig& world = {}) {
    return {world.header(), generate(mix, n, seed, world)};
}

}  // namespace prank

#endif  // PRANK_SYNTHETIC_WORLD_HPP
