#ifndef PRANK_OPTIM_HPP
#define PRANK_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "prank/errors.hpp"

namespace prank {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

// One bias-corrected Adam update in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
    if (params.size() != grads.size()) throw ShapeError("parameter and gradient sizes differ");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
    ++state.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

// Multiplies the learning rate by `factor` once `patience` consecutive
// validation evaluations fail to improve on the best value seen.
class PlateauSchedule {
public:
    PlateauSchedule(double lr, std::size_t patience, double factor = 0.5)
        : lr_(lr), patience_(patience), factor_(factor) {
        if (patience_ == 0) throw ArgumentError("plateau patience must be >= 1");
    }

    // Returns true when this observation triggered a reduction.
    bool observe(double val_loss) {
        if (val_loss < best_) {
            best_ = val_loss;
            bad_ = 0;
            return false;
        }
        if (++bad_ >= patience_) {
            lr_ *= factor_;
            bad_ = 0;
            return true;
        }
        return false;
    }

    double lr() const { return lr_; }
    double best() const { return best_; }

private:
    double lr_;
    std::size_t patience_;
    double factor_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t bad_ = 0;
};

}  // namespace prank

#endif  // PRANK_OPTIM_HPP
