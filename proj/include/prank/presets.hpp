#ifndef PRANK_PRESETS_HPP
#define PRANK_PRESETS_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prank/bank.hpp"
#include "prank/inference.hpp"
#include "prank/metrics.hpp"
#include "prank/mips_index.hpp"
#include "prank/synthetic_world.hpp"
#include "prank/trainer.hpp"

namespace prank {

struct EvalSpec {
    std::string name;
    Strategy strategy = Strategy::mean;
    std::size_t top_k = 150;
};

// One trained model and the readouts scored on it.
struct ArmSpec {
    std::string name;
    ClusterOptions cluster;
    TrainConfig train;
    std::vector<EvalSpec> evals;
};

struct Preset {
    std::string name;
    std::string mix;
    std::string test_mix;  // empty: same as mix
    std::size_t n_train = 10000;
    std::size_t n_test = 500;
    WorldConfig world;
    IndexVariant index{IndexKind::exact};
    std::vector<ArmSpec> arms;
};

namespace detail {

inline TrainConfig preset_train_config() {
    TrainConfig t;
    t.batch_size = 32;
    t.n_mc_samples = 128;
    t.learning_rate = 1e-3;
    t.pseudo_epoch_batches = 200;
    t.plateau_patience = 5;
    t.max_steps = 8000;
    t.d = 16;
    t.f_hidden = {64, 64};
    t.g_hidden = {64, 64};
    return t;
}

}  // namespace detail

inline std::vector<std::string> preset_names() { return {"fork-bimodal", "imbalanced", "noisy"}; }

inline Preset make_preset(const std::string& name) {
    Preset p;
    p.name = name;
    const auto base = detail::preset_train_config();
    if (name == "fork-bimodal") {
        // Half the forks carry a turn signal. Those scenes make the trajectory
        // tower keep the two branches apart; scoring uses unsignaled forks only.
        p.mix = "fork:10:0.2,fork:12:0.2,fork:14:0.2,fork_signaled:10:0.2,fork_signaled:12:0.2,fork_signaled:14:0.2";
        p.test_mix = "fork:10:0.2,fork:12:0.2,fork:14:0.2";
        ArmSpec uni{"m1", {1, ClusterMethod::none}, base, {{"mixture", Strategy::mixture, 150}}};
        ArmSpec bi = uni;
        bi.name = "m2";
        bi.train.m = 2;
        bi.train.mixture_warmup_steps = 3000;
        p.arms = {uni, bi};
    } else if (name == "imbalanced") {
        // 95% straight driving; the 5% turns come in closely spaced speeds so
        // telling them apart needs turn trajectories among the negatives.
        // The test set over-represents turns to keep the turn subset large.
        std::string train_mix, test_mix;
        for (int v = 6; v <= 14; v += 2) {
            train_mix += "straight:" + std::to_string(v) + ":0.1:" + std::to_string(0.95 / 5) + ",";
            test_mix += "straight:" + std::to_string(v) + ":0.1:1,";
        }
        for (const char* kind : {"turn_left", "turn_right"})
            for (int v = 6; v <= 11; ++v) {
                train_mix += std::string(kind) + ":" + std::to_string(v) + ":0.1:" + std::to_string(0.05 / 12) + ",";
                test_mix += std::string(kind) + ":" + std::to_string(v) + ":0.1:1,";
            }
        p.mix = train_mix;
        p.test_mix = test_mix;
        ArmSpec clustered{"kmeans64", {64, ClusterMethod::minibatch_kmeans}, base, {{"mean", Strategy::mean, 150}}};
        ArmSpec flat = clustered;
        flat.name = "none";
        flat.cluster = {1, ClusterMethod::none};
        p.arms = {clustered, flat};
    } else if (name == "noisy") {
        p.mix = "straight:8:0.5,straight:12:0.5,turn_left:10:0.5,turn_right:10:0.5,stop:8:0.5";
        ArmSpec arm{"kmeans64",
                    {64, ClusterMethod::minibatch_kmeans},
                    base,
                    {{"top1", Strategy::top1, 1}, {"mean150", Strategy::mean, 150}, {"mean500", Strategy::mean, 500}}};
        p.arms = {arm};
    } else {
        throw ArgumentError("unknown preset '" + name + "'");
    }
    return p;
}

// Speed recorded in the scene context block.
inline double scene_speed(const SceneFeatures& scene, const WorldConfig& world) { return scene[4 * world.H]; }

struct BranchFit {
    double first = 0.0;   // ADE of the highest-weight mode to its matched branch
    double second = 0.0;  // ADE of the runner-up mode to the other branch
};

// Matches the two highest-weight predictions to the two analytic fork branches.
inline BranchFit fork_branch_fit(const std::vector<Prediction>& preds, const SceneFeatures& scene,
                                 const WorldConfig& world) {
    if (preds.size() < 2) throw ArgumentError("branch fit needs at least two predictions");
    std::vector<const Prediction*> order;
    for (const auto& p : preds) order.push_back(&p);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->weight > b->weight; });
    const double v = scene_speed(scene, world);
    const auto left = template_trajectory(ScenarioKind::fork, v, 1, world);
    const auto right = template_trajectory(ScenarioKind::fork, v, -1, world);
    const auto& a = order[0]->trajectory;
    const auto& b = order[1]->trajectory;
    const double straight = ade(a, left) + ade(b, right);
    const double crossed = ade(a, right) + ade(b, left);
    if (straight <= crossed) return {ade(a, left), ade(b, right)};
    return {ade(a, right), ade(b, left)};
}

struct PipelineOptions {
    std::uint64_t seed = 0;
    std::string workdir;              // empty: keep everything in memory
    std::size_t n_train = 0;          // 0: preset value
    std::size_t max_steps = 0;        // 0: preset value
    bool verbose = false;
};

namespace detail {

inline nlohmann::json report_json(const std::vector<ExampleMetrics>& per_example, const Dataset& test,
                                  std::size_t m) {
    auto j = to_json(summarize(per_example, m));
    std::map<std::string, std::vector<ExampleMetrics>> by_kind;
    for (std::size_t i = 0; i < per_example.size(); ++i) {
        const auto kind = kind_from_id(test.examples[i].id);
        if (kind) by_kind[std::string(to_string(*kind))].push_back(per_example[i]);
    }
    nlohmann::json subsets = nlohmann::json::object();
    for (const auto& [kind, rows] : by_kind) subsets[kind] = to_json(summarize(rows, m));
    j["subsets"] = subsets;
    return j;
}

}  // namespace detail

// Generates data, clusters, trains every arm, builds its index and scores the
// readouts on a held-out test set. Returns the summary record.
inline nlohmann::json run_pipeline(const Preset& preset, const PipelineOptions& opt) {
    namespace fs = std::filesystem;
    const auto mix = parse_mix(preset.mix);
    const std::size_t n_train = opt.n_train ? opt.n_train : preset.n_train;
    const auto train_set = generate_dataset(mix, n_train, opt.seed, preset.world);
    // Test examples come from a disjoint stream of the same generator.
    auto test_set = generate_dataset(preset.test_mix.empty() ? mix : parse_mix(preset.test_mix), preset.n_test,
                                     opt.seed ^ 0x7465737400000000ULL, preset.world);

    const bool write = !opt.workdir.empty();
    const fs::path dir = opt.workdir;
    if (write) {
        fs::create_directories(dir);
        save_dataset((dir / "train.jsonl").string(), train_set);
        save_dataset((dir / "test.jsonl").string(), test_set);
    }

    nlohmann::json summary = {{"preset", preset.name}, {"seed", opt.seed}, {"n_train", n_train},
                              {"n_test", preset.n_test}};
    nlohmann::json arms = nlohmann::json::object();
    for (const auto& arm : preset.arms) {
        auto cluster = arm.cluster;
        cluster.seed = opt.seed;
        auto cfg = arm.train;
        cfg.seed = opt.seed;
        if (opt.max_steps) cfg.max_steps = opt.max_steps;

        const auto bank = build_bank(train_set, cluster);
        const auto result = train(cfg, train_set, bank);
        if (result.aborted) throw NumericError(arm.name + ": " + result.message);
        auto variant = preset.index;
        variant.seed = opt.seed;
        const auto index = build_index(bank, result.params, variant);

        nlohmann::json arm_json = {{"steps", result.steps},
                                   {"final_val_nll", result.log.empty() ? 0.0 : result.log.back().val_nll},
                                   {"alpha", result.params.alpha(0)},
                                   {"beta", result.params.beta()}};
        if (write) {
            const auto sub = dir / arm.name;
            fs::create_directories(sub);
            save_bank((sub / "bank.jsonl").string(), bank);
            save_checkpoint((sub / "model.ckpt").string(), result.params);
            save_log((sub / "train_log.jsonl").string(), result.log);
        }

        nlohmann::json evals = nlohmann::json::object();
        for (const auto& ev : arm.evals) {
            InferenceConfig icfg;
            icfg.top_k = ev.top_k;
            std::vector<PredictionRecord> records;
            std::vector<ExampleMetrics> per_example;
            double fit_first = 0.0, fit_second = 0.0;
            for (std::size_t i = 0; i < test_set.examples.size(); ++i) {
                const auto& ex = test_set.examples[i];
                Rng rng = make_stream(opt.seed, i, 0x70726564);
                const auto preds = predict(result.params, ex.scene, index, bank, ev.strategy, icfg, rng);
                per_example.push_back(evaluate_example(ex.id, preds, ex.ground_truth));
                const auto kind = kind_from_id(ex.id);
                if (cfg.m >= 2 && kind && is_fork(*kind)) {
                    const auto fit = fork_branch_fit(preds, ex.scene, preset.world);
                    fit_first += fit.first;
                    fit_second += fit.second;
                }
                for (const auto& p : preds) records.push_back({ex.id, p});
            }
            auto report = detail::report_json(per_example, test_set, preset.world.M);
            if (cfg.m >= 2) {
                const auto n = static_cast<double>(test_set.examples.size());
                report["branch_ade"] = {fit_first / n, fit_second / n};
            }
            if (write) save_predictions((dir / arm.name / (ev.name + "_pred.jsonl")).string(), records);
            evals[ev.name] = report;
        }
        arm_json["evals"] = evals;
        arms[arm.name] = arm_json;
    }
    summary["arms"] = arms;
    if (write) {
        auto out = detail::open_output((dir / "summary.json").string());
        out << summary.dump(2) << '\n';
    }
    return summary;
}

}  // namespace prank

#endif  // PRANK_PRESETS_HPP
