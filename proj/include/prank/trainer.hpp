#ifndef PRANK_TRAINER_HPP
#define PRANK_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prank/bank.hpp"
#include "prank/dataset.hpp"
#include "prank/encoders.hpp"
#include "prank/errors.hpp"
#include "prank/losses.hpp"
#include "prank/optim.hpp"
#include "prank/random.hpp"

namespace prank {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t n_mc_samples = 256;
    double learning_rate = 5e-4;
    std::size_t plateau_patience = 5;
    std::size_t pseudo_epoch_batches = 200;
    double lr_halving_factor = 0.5;
    std::size_t max_steps = 2000;
    std::uint64_t seed = 0;
    bool use_noise_model = false;
    bool kernel_normalizer = false;
    std::size_t m = 1;
    double val_fraction = 0.1;
    double min_lr = 1e-7;
    // Mixture weights stay uniform (zero logit weights, frozen) for this many
    // steps so every head receives gradient before the gate can pick a winner.
    std::size_t mixture_warmup_steps = 0;

    // Encoder shape.
    std::size_t d = 32;
    std::vector<std::size_t> f_hidden{128, 128, 64};
    std::vector<std::size_t> g_hidden{128, 128, 64};
    bool g_skip = true;
    double input_scale = 0.1;

    void validate() const {
        if (batch_size == 0 || pseudo_epoch_batches == 0 || max_steps == 0 || m == 0 || plateau_patience == 0)
            throw ArgumentError("training counts must be >= 1");
        if (n_mc_samples < 2) throw ArgumentError("need at least 2 Monte-Carlo samples");
        if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
        if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ArgumentError("val_fraction must be in (0, 1)");
        if (!(lr_halving_factor > 0.0 && lr_halving_factor < 1.0))
            throw ArgumentError("lr_halving_factor must be in (0, 1)");
    }

    ModelSpec model_spec(const DatasetHeader& h) const {
        ModelSpec s;
        s.f = {h.F, f_hidden, d, false, input_scale};
        s.g = {2 * h.M, g_hidden, d, g_skip, input_scale};
        s.m = m;
        return s;
    }
};

struct LogRecord {
    std::size_t step = 0;
    double train_nll = 0.0;
    double val_nll = 0.0;
    double lr = 0.0;
};

inline nlohmann::json to_json(const LogRecord& r) {
    return {{"step", r.step}, {"train_nll", r.train_nll}, {"val_nll", r.val_nll}, {"lr", r.lr}};
}

struct TrainResult {
    ModelParams params;          // best validation checkpoint
    std::vector<LogRecord> log;
    std::size_t steps = 0;
    bool aborted = false;        // non-finite loss; params hold the last good state
    std::string message;
};

// Deterministic train/validation split by seeded shuffle.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

inline Split split_dataset(std::size_t n, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = make_stream(seed, 0, 0x73706c74);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    Split s;
    s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    return s;
}

// Assembles a batch: the shared MC samples followed by the batch's own ground
// truths, so every example's numerator term is among the candidates.
inline LossBatch make_batch(const Matrix& scenes, const Matrix& gts, std::span<const std::size_t> rows,
                            const Matrix& bank_flat, std::span<const std::size_t> sample_rows) {
    LossBatch b;
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto s = static_cast<Eigen::Index>(sample_rows.size());
    b.scenes.resize(n, scenes.cols());
    b.ground_truth.resize(n, gts.cols());
    b.candidates.resize(s + n, gts.cols());
    for (Eigen::Index j = 0; j < s; ++j) b.candidates.row(j) = bank_flat.row(static_cast<Eigen::Index>(sample_rows[j]));
    b.gt_index.resize(rows.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        b.scenes.row(i) = scenes.row(r);
        b.ground_truth.row(i) = gts.row(r);
        b.candidates.row(s + i) = gts.row(r);
        b.gt_index[i] = s + i;
    }
    return b;
}

class Trainer {
public:
    Trainer(const TrainConfig& cfg, const Dataset& data, const TrajectoryBank& bank)
        : cfg_(cfg), data_(data), bank_(bank) {
        cfg_.validate();
        if (data.examples.size() < 2) throw ArgumentError("need at least 2 examples to split off validation");
        if (bank.M() != data.header.M) throw LengthError("bank and dataset disagree on M");
        std::vector<SceneFeatures> scenes;
        std::vector<Trajectory> gts;
        for (const auto& ex : data.examples) {
            scenes.push_back(ex.scene);
            gts.push_back(ex.ground_truth);
        }
        scenes_ = stack_scenes(scenes);
        gts_ = stack_trajectories(gts);
        bank_flat_ = stack_trajectories(bank.trajectories());
        split_ = split_dataset(data.examples.size(), cfg_.val_fraction, cfg_.seed);
        opts_ = {cfg_.use_noise_model, cfg_.kernel_normalizer};

        // Validation uses one fixed sample set so evaluations are comparable.
        Rng rng = make_stream(cfg_.seed, 0, 0x76616c);
        val_samples_.resize(cfg_.n_mc_samples);
        for (auto& s : val_samples_) s = bank_.sample_h_index(rng);
    }

    const Split& split() const { return split_; }

    double validation_loss(const ModelParams& params) const {
        double total = 0.0;
        std::size_t count = 0;
        for (std::size_t start = 0; start < split_.val.size(); start += cfg_.batch_size) {
            const std::size_t end = std::min(split_.val.size(), start + cfg_.batch_size);
            const std::span<const std::size_t> rows(split_.val.data() + start, end - start);
            const auto batch = make_batch(scenes_, gts_, rows, bank_flat_, val_samples_);
            total += evaluate_loss(params, batch, opts_) * static_cast<double>(rows.size());
            count += rows.size();
        }
        return total / static_cast<double>(count);
    }

    // Batch for optimizer step `step`; depends only on (seed, step).
    LossBatch step_batch(std::size_t step) const {
        Rng rng = make_stream(cfg_.seed, step, 0x73746570);
        std::uniform_int_distribution<std::size_t> pick(0, split_.train.size() - 1);
        std::vector<std::size_t> rows(cfg_.batch_size);
        for (auto& r : rows) r = split_.train[pick(rng)];
        std::vector<std::size_t> samples(cfg_.n_mc_samples);
        for (auto& s : samples) s = bank_.sample_h_index(rng);
        return make_batch(scenes_, gts_, rows, bank_flat_, samples);
    }

    TrainResult run(std::optional<ModelParams> init = std::nullopt) const {
        TrainResult result;
        ModelParams params = init ? std::move(*init) : ModelParams::initialize(cfg_.model_spec(data_.header), cfg_.seed);
        const auto& mix = params.mixture_head();
        const auto& mix_w = params.layout()[mix.weight];
        const auto& mix_b = params.layout()[mix.bias];
        const bool warmup = cfg_.mixture_warmup_steps > 0 && cfg_.m > 1;
        if (warmup && !init) {
            params.tensor(mix.weight).setZero();
            params.tensor(mix.bias).setZero();
        }
        AdamState adam;
        PlateauSchedule schedule(cfg_.learning_rate, cfg_.plateau_patience, cfg_.lr_halving_factor);
        ModelParams best = params;
        double best_val = std::numeric_limits<double>::infinity();
        double train_sum = 0.0;
        std::size_t train_count = 0;

        auto evaluate = [&](std::size_t step) {
            const double val = validation_loss(params);
            if (!std::isfinite(val)) return false;
            result.log.push_back({step, train_count ? train_sum / static_cast<double>(train_count) : 0.0, val,
                                  schedule.lr()});
            if (val < best_val) {
                best_val = val;
                best = params;
            }
            schedule.observe(val);
            train_sum = 0.0;
            train_count = 0;
            return true;
        };

        std::size_t step = 0;
        while (step < cfg_.max_steps && schedule.lr() >= cfg_.min_lr) {
            const auto batch = step_batch(step);
            const auto lv = loss_and_gradient(params, batch, opts_);
            bool finite = std::isfinite(lv.loss);
            for (double g : lv.gradient) finite = finite && std::isfinite(g);
            if (!finite) {
                std::ostringstream msg;
                msg << "non-finite loss at step " << step << " (loss " << lv.loss << ", alpha " << params.alpha(0)
                    << ", beta " << params.beta() << ")";
                result.aborted = true;
                result.message = msg.str();
                break;
            }
            train_sum += lv.loss;
            ++train_count;
            auto grad = lv.gradient;
            if (warmup && step < cfg_.mixture_warmup_steps) {
                std::fill_n(grad.begin() + static_cast<std::ptrdiff_t>(mix_w.offset), mix_w.size(), 0.0);
                std::fill_n(grad.begin() + static_cast<std::ptrdiff_t>(mix_b.offset), mix_b.size(), 0.0);
            }
            adam_step(params.values(), grad, adam, schedule.lr());
            ++step;
            if (step % cfg_.pseudo_epoch_batches == 0 && !evaluate(step)) {
                result.aborted = true;
                result.message = "non-finite validation loss at step " + std::to_string(step);
                break;
            }
        }
        if (!result.aborted && step % cfg_.pseudo_epoch_batches != 0) evaluate(step);
        result.steps = step;
        result.params = std::isfinite(best_val) ? std::move(best) : std::move(params);
        return result;
    }

private:
    TrainConfig cfg_;
    const Dataset& data_;
    const TrajectoryBank& bank_;
    Matrix scenes_;
    Matrix gts_;
    Matrix bank_flat_;
    Split split_;
    LossOptions opts_;
    std::vector<std::size_t> val_samples_;
};

inline TrainResult train(const TrainConfig& cfg, const Dataset& data, const TrajectoryBank& bank) {
    return Trainer(cfg, data, bank).run();
}

inline void save_log(const std::string& path, const std::vector<LogRecord>& log) {
    auto out = detail::open_output(path);
    for (const auto& r : log) out << to_json(r).dump() << '\n';
}

inline std::vector<LogRecord> load_log(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<LogRecord> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        const auto j = detail::parse_line(text, line);
        out.push_back({detail::required<std::size_t>(j, "step", line), detail::required<double>(j, "train_nll", line),
                       detail::required<double>(j, "val_nll", line), detail::required<double>(j, "lr", line)});
    }
    return out;
}

}  // namespace prank

#endif  // PRANK_TRAINER_HPP
