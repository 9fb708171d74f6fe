#ifndef PRANK_CLI_HPP
#define PRANK_CLI_HPP

// Command-line front end. Needs CLI11.hpp on the include path.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prank/prank.hpp"
#include "prank/presets.hpp"

namespace prank::cli {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct GenArgs {
    std::string mix = "straight";
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t M = 25;
    double dt = 0.2;
    std::size_t H = 10;
};

struct ClusterArgs {
    std::string in, out;
    std::size_t k = 64;
    std::string method = "minibatch_kmeans";
    std::uint64_t seed = 0;
    std::size_t max_iters = 100;
    std::size_t batch_size = 1024;
    std::size_t n_batches = 200;
};

struct TrainArgs {
    std::string data, bank, out, log;
    TrainConfig cfg;
};

struct IndexArgs {
    std::string bank, checkpoint, out;
    std::string variant = "exact";
    std::size_t n_lists = 256;
    std::size_t n_probe = 16;
    std::uint64_t seed = 0;
};

struct PredictArgs {
    std::string checkpoint, index, bank, in, out;
    std::string strategy = "mean";
    std::string mixture_strategy = "mean";
    std::size_t top_k = 150;
    std::size_t n_samples = 16;
    bool with_noise = false;
    bool no_h_weight = false;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct EvalArgs {
    std::string pred, data, out;
    bool per_example = false;
};

struct PipelineArgs {
    std::string preset = "fork-bimodal";
    std::string workdir;
    std::uint64_t seed = 0;
    std::size_t n_train = 0;
    std::size_t max_steps = 0;
};

struct PlotArgs {
    std::string in, out;
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    auto out = prank::detail::open_output(path);
    out << text;
    if (!out) throw ArgumentError("write failed: " + path);
}

// Resolved configuration of the active subcommand, stored beside its output.
inline void write_resolved_config(const CLI::App& sub, const std::string& out_path) {
    std::string text = "[" + sub.get_name() + "]\n";
    text += sub.config_to_str(true, false);
    write_text(out_path + ".config.toml", text);
}

inline std::string format_versions() {
    std::ostringstream s;
    s << "prank " << kToolVersion << "\n"
      << "dataset format " << kDatasetVersion << "\n"
      << "bank format " << kBankVersion << "\n"
      << "checkpoint format " << kCheckpointVersion << "\n"
      << "index format " << kIndexVersion << "\n";
    return s.str();
}

// ---- subcommand bodies --------------------------------------------------------

inline void run_gen(const GenArgs& a) {
    WorldConfig world{a.M, a.dt, a.H};
    save_dataset(a.out, generate_dataset(parse_mix(a.mix), a.n, a.seed, world));
}

inline void run_cluster(const ClusterArgs& a) {
    const auto data = load_dataset(a.in);
    ClusterOptions opt{a.k, cluster_method_from_string(a.method), a.seed, a.max_iters, a.batch_size, a.n_batches};
    save_bank(a.out, build_bank(data, opt));
}

inline void run_train(const TrainArgs& a) {
    const auto data = load_dataset(a.data);
    const auto bank = load_bank(a.bank);
    const auto result = train(a.cfg, data, bank);
    save_checkpoint(a.out, result.params);
    save_log(a.log.empty() ? a.out + ".log.jsonl" : a.log, result.log);
    if (result.aborted) throw NumericError(result.message);
}

inline void run_build_index(const IndexArgs& a) {
    const auto bank = load_bank(a.bank);
    const auto params = load_checkpoint(a.checkpoint);
    IndexVariant v;
    v.kind = index_kind_from_string(a.variant);
    v.n_lists = a.n_lists;
    v.n_probe = a.n_probe;
    v.seed = a.seed;
    build_index(bank, params, v).save(a.out);
}

inline void run_predict(const PredictArgs& a) {
    const auto params = load_checkpoint(a.checkpoint);
    const auto bank = load_bank(a.bank);
    const auto index = MipsIndex::load(a.index);
    const auto data = load_dataset(a.in);
    if (index.size() != bank.size()) throw ArgumentError("index and bank sizes differ");
    if (a.threads == 0) throw ArgumentError("--threads must be >= 1");

    const Strategy strategy = strategy_from_string(a.strategy);
    InferenceConfig cfg;
    cfg.top_k = a.top_k;
    cfg.n_samples = a.n_samples;
    cfg.with_noise = a.with_noise;
    cfg.h_weighted = !a.no_h_weight;
    cfg.mixture_strategy = strategy_from_string(a.mixture_strategy);

    // Each example owns its RNG stream, so results do not depend on threading.
    std::vector<std::vector<Prediction>> results(data.examples.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        try {
            for (std::size_t i = next++; i < data.examples.size(); i = next++) {
                Rng rng = make_stream(a.seed, i, 0x70726564);
                results[i] = predict(params, data.examples[i].scene, index, bank, strategy, cfg, rng);
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(a.threads, std::max<std::size_t>(1, data.examples.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<PredictionRecord> records;
    for (std::size_t i = 0; i < results.size(); ++i)
        for (auto& p : results[i]) records.push_back({data.examples[i].id, std::move(p)});
    save_predictions(a.out, records);
}

inline void run_eval(const EvalArgs& a) {
    const auto data = load_dataset(a.data);
    const auto per_example = evaluate_examples(load_predictions(a.pred), data);
    std::string text = to_json(summarize(per_example, data.header.M)).dump() + "\n";
    if (a.per_example)
        for (const auto& e : per_example) text += to_json(e).dump() + "\n";
    write_text(a.out, text);
}

inline void run_pipeline_cmd(const PipelineArgs& a) {
    PipelineOptions opt;
    opt.seed = a.seed;
    opt.workdir = a.workdir;
    opt.n_train = a.n_train;
    opt.max_steps = a.max_steps;
    run_pipeline(make_preset(a.preset), opt);
}

// Training logs become step/train/val/lr columns; a pipeline summary becomes
// one row per (arm, readout).
inline void run_plotdata(const PlotArgs& a) {
    std::ostringstream raw;
    raw << prank::detail::open_input(a.in).rdbuf();
    const auto whole = nlohmann::json::parse(raw.str(), nullptr, false);
    std::ostringstream text;
    if (whole.is_object() && whole.contains("arms")) {
        text << "arm\treadout\tade\tfde\thit_rate\tll_per_timestamp\n";
        for (const auto& [arm, body] : whole["arms"].items())
            for (const auto& [name, r] : body["evals"].items())
                text << arm << '\t' << name << '\t' << r["ade"].get<double>() << '\t' << r["fde"].get<double>()
                     << '\t' << r["hit_rate"].get<double>() << '\t' << r["ll_per_timestamp"].get<double>() << '\n';
    } else {
        text << "step\ttrain_nll\tval_nll\tlr\n";
        for (const auto& r : load_log(a.in))
            text << r.step << '\t' << r.train_nll << '\t' << r.val_nll << '\t' << r.lr << '\n';
    }
    write_text(a.out, text.str());
}

}  // namespace detail

// Parses argv and runs one subcommand. Machine-readable results go to files;
// diagnostics go to `err`.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"Trajectory ranking toolkit"};
    app.require_subcommand(1);
    app.allow_config_extras(false);
    app.set_config("--config", "", "TOML config file; flags override its values");
    bool show_version = false;
    app.add_flag("--version", show_version, "Print tool and file format versions");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
    g->add_option("--mix", gen.mix, "kind[:speed[:noise[:weight]]],...")->capture_default_str();
    g->add_option("--n", gen.n, "Number of examples")->capture_default_str();
    g->add_option("--seed", gen.seed)->capture_default_str();
    g->add_option("--out", gen.out)->required();
    g->add_option("--M", gen.M, "Future steps")->capture_default_str();
    g->add_option("--dt", gen.dt, "Seconds per step")->capture_default_str();
    g->add_option("--H", gen.H, "History steps")->capture_default_str();

    ClusterArgs cl;
    auto* c = app.add_subcommand("cluster", "Cluster ground truths into a trajectory bank");
    c->add_option("--in", cl.in)->required();
    c->add_option("--out", cl.out)->required();
    c->add_option("--k", cl.k)->capture_default_str();
    c->add_option("--method", cl.method)
        ->check(CLI::IsMember({"minibatch_kmeans", "full_kmeans", "none"}))
        ->capture_default_str();
    c->add_option("--seed", cl.seed)->capture_default_str();
    c->add_option("--max-iters", cl.max_iters)->capture_default_str();
    c->add_option("--batch-size", cl.batch_size)->capture_default_str();
    c->add_option("--n-batches", cl.n_batches)->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train the ranking model");
    t->add_option("--data", tr.data)->required();
    t->add_option("--bank", tr.bank)->required();
    t->add_option("--out", tr.out, "Checkpoint path")->required();
    t->add_option("--log", tr.log, "Loss log path (default: <out>.log.jsonl)");
    auto& tc = tr.cfg;
    t->add_option("--batch-size", tc.batch_size)->capture_default_str();
    t->add_option("--n-mc-samples", tc.n_mc_samples)->capture_default_str();
    t->add_option("--lr", tc.learning_rate)->capture_default_str();
    t->add_option("--plateau-patience", tc.plateau_patience)->capture_default_str();
    t->add_option("--pseudo-epoch-batches", tc.pseudo_epoch_batches)->capture_default_str();
    t->add_option("--lr-halving-factor", tc.lr_halving_factor)->capture_default_str();
    t->add_option("--max-steps", tc.max_steps)->capture_default_str();
    t->add_option("--seed", tc.seed)->capture_default_str();
    t->add_flag("--noise", tc.use_noise_model, "Train the noise model");
    t->add_flag("--kernel-normalizer", tc.kernel_normalizer, "Add the analytic kernel normalizer");
    t->add_option("--modes", tc.m, "Mixture components")->capture_default_str();
    t->add_option("--mixture-warmup-steps", tc.mixture_warmup_steps)->capture_default_str();
    t->add_option("--val-fraction", tc.val_fraction)->capture_default_str();
    t->add_option("--d", tc.d, "Embedding dimension")->capture_default_str();
    t->add_option("--f-hidden", tc.f_hidden)->capture_default_str();
    t->add_option("--g-hidden", tc.g_hidden)->capture_default_str();
    t->add_option("--input-scale", tc.input_scale)->capture_default_str();

    IndexArgs ix;
    auto* b = app.add_subcommand("build-index", "Embed the bank and build a search index");
    b->add_option("--bank", ix.bank)->required();
    b->add_option("--checkpoint", ix.checkpoint)->required();
    b->add_option("--out", ix.out)->required();
    b->add_option("--variant", ix.variant)->check(CLI::IsMember({"exact", "ivf"}))->capture_default_str();
    b->add_option("--n-lists", ix.n_lists)->capture_default_str();
    b->add_option("--n-probe", ix.n_probe)->capture_default_str();
    b->add_option("--seed", ix.seed)->capture_default_str();

    PredictArgs pr;
    auto* p = app.add_subcommand("predict", "Predict trajectories for a dataset");
    p->add_option("--checkpoint", pr.checkpoint)->required();
    p->add_option("--index", pr.index)->required();
    p->add_option("--bank", pr.bank)->required();
    p->add_option("--in", pr.in)->required();
    p->add_option("--out", pr.out)->required();
    const auto strategies = CLI::IsMember({"top1", "mode_h", "mean", "meanshift", "sample", "mixture"});
    p->add_option("--strategy", pr.strategy)->check(strategies)->capture_default_str();
    p->add_option("--mixture-strategy", pr.mixture_strategy)
        ->check(CLI::IsMember({"top1", "mode_h", "mean", "meanshift"}))
        ->capture_default_str();
    p->add_option("--top-k", pr.top_k)->capture_default_str();
    p->add_option("--n-samples", pr.n_samples)->capture_default_str();
    p->add_flag("--with-noise", pr.with_noise, "Add kernel noise to samples");
    p->add_flag("--no-h-weight", pr.no_h_weight, "Do not weight candidates by h(t)");
    p->add_option("--seed", pr.seed)->capture_default_str();
    p->add_option("--threads", pr.threads, "Worker threads")->capture_default_str();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
    e->add_option("--pred", ev.pred)->required();
    e->add_option("--data", ev.data)->required();
    e->add_option("--out", ev.out)->required();
    e->add_flag("--per-example", ev.per_example, "Append one record per example");

    PipelineArgs pl;
    auto* q = app.add_subcommand("pipeline", "Run a preset experiment end to end");
    q->add_option("--preset", pl.preset)->check(CLI::IsMember(preset_names()))->capture_default_str();
    q->add_option("--workdir", pl.workdir)->required();
    q->add_option("--seed", pl.seed)->capture_default_str();
    q->add_option("--n-train", pl.n_train, "Override the preset training size")->capture_default_str();
    q->add_option("--max-steps", pl.max_steps, "Override the preset step budget")->capture_default_str();

    PlotArgs pd;
    auto* d = app.add_subcommand("plotdata", "Convert a loss log or pipeline summary to TSV");
    d->add_option("--in", pd.in)->required();
    d->add_option("--out", pd.out)->required();

    // --version works without a subcommand.
    for (int i = 1; i < argc; ++i) {
        if (std::string_view(argv[i]) == "--version") {
            out << detail::format_versions();
            return kOk;
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (g->parsed()) {
            detail::run_gen(gen);
            detail::write_resolved_config(*g, gen.out);
        } else if (c->parsed()) {
            detail::run_cluster(cl);
            detail::write_resolved_config(*c, cl.out);
        } else if (t->parsed()) {
            detail::run_train(tr);
            detail::write_resolved_config(*t, tr.out);
        } else if (b->parsed()) {
            detail::run_build_index(ix);
            detail::write_resolved_config(*b, ix.out);
        } else if (p->parsed()) {
            detail::run_predict(pr);
            detail::write_resolved_config(*p, pr.out);
        } else if (e->parsed()) {
            detail::run_eval(ev);
        } else if (q->parsed()) {
            detail::run_pipeline_cmd(pl);
            detail::write_resolved_config(*q, (std::filesystem::path(pl.workdir) / "pipeline").string());
        } else if (d->parsed()) {
            detail::run_plotdata(pd);
        }
    } catch (const ArgumentError& ex) {
        err << "error: " << ex.what() << '\n';
        return kUsage;
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << '\n';
        return kUsage;
    } catch (const NumericError& ex) {
        err << "numeric failure: " << ex.what() << '\n';
        return kNumeric;
    } catch (const Error& ex) {
        err << "data error: " << ex.what() << '\n';
        return kData;
    } catch (const std::exception& ex) {
        err << "data error: " << ex.what() << '\n';
        return kData;
    }
    return kOk;
}

}  // namespace prank::cli

#endif  // PRANK_CLI_HPP
