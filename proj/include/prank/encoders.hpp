#ifndef PRANK_ENCODERS_HPP
#define PRANK_ENCODERS_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prank/autodiff.hpp"
#include "prank/core_types.hpp"
#include "prank/errors.hpp"
#include "prank/linalg.hpp"
#include "prank/random.hpp"

namespace prank {

inline constexpr int kCheckpointVersion = 1;

// Fully-connected ReLU network. A hidden layer gets a residual connection
// from the previous hidden layer when `skip` is set and both widths match.
struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 0;
    bool skip = false;
    double input_scale = 1.0;  // inputs are multiplied by this before the first layer

    bool has_skip(std::size_t layer) const {
        return skip && layer > 0 && layer < hidden.size() && hidden[layer] == hidden[layer - 1];
    }

    void validate(const char* name) const {
        const std::string who(name);
        if (input_dim == 0 || output_dim == 0) throw ArgumentError(who + ": dimensions must be >= 1");
        for (auto w : hidden)
            if (w == 0) throw ArgumentError(who + ": hidden widths must be >= 1");
        if (skip) {
            bool any = false;
            for (std::size_t i = 1; i < hidden.size(); ++i) any |= hidden[i] == hidden[i - 1];
            if (!any) throw ArgumentError(who + ": skip connections need two adjacent equal widths");
        }
        if (!(input_scale > 0.0) || !std::isfinite(input_scale))
            throw ArgumentError(who + ": input_scale must be positive");
    }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// f: scene tower with a shared trunk (all hidden layers but the last) and m
// heads (last hidden layer + output layer each); g: trajectory tower.
struct ModelSpec {
    MlpSpec f;
    MlpSpec g;
    std::size_t m = 1;

    std::size_t d() const { return f.output_dim; }

    void validate() const {
        f.validate("scene encoder");
        g.validate("trajectory encoder");
        if (f.output_dim != g.output_dim) throw ArgumentError("scene and trajectory embeddings differ in size");
        if (m == 0) throw ArgumentError("mode count must be >= 1");
    }

    static ModelSpec defaults(std::size_t scene_dim, std::size_t trajectory_points, std::size_t m = 1) {
        ModelSpec s;
        s.f = {scene_dim, {128, 128, 64}, 32, false, 0.1};
        s.g = {2 * trajectory_points, {128, 128, 64}, 32, true, 0.1};
        s.m = m;
        return s;
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct TensorInfo {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
};

struct LayerRef {
    std::size_t weight = 0;  // in x out
    std::size_t bias = 0;    // 1 x out
};

// All learnable state as one flat vector; `layout` records tensor shapes in
// declaration order, which is also the checkpoint order.
class ModelParams {
public:
    ModelParams() = default;

    explicit ModelParams(ModelSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        const auto& f = spec_.f;
        const std::size_t trunk_layers = f.hidden.empty() ? 0 : f.hidden.size() - 1;
        std::size_t in = f.input_dim;
        for (std::size_t i = 0; i < trunk_layers; ++i) {
            f_trunk_.push_back(add_layer("f.trunk." + std::to_string(i), in, f.hidden[i]));
            in = f.hidden[i];
        }
        const std::size_t trunk_out = in;
        for (std::size_t k = 0; k < spec_.m; ++k) {
            std::vector<LayerRef> head;
            std::size_t hin = trunk_out;
            const std::string p = "f.head" + std::to_string(k) + ".";
            if (!f.hidden.empty()) {
                head.push_back(add_layer(p + "hidden", hin, f.hidden.back()));
                hin = f.hidden.back();
            }
            head.push_back(add_layer(p + "out", hin, f.output_dim));
            f_heads_.push_back(std::move(head));
        }
        mix_head_ = add_layer("f.mixture_logits", trunk_out, spec_.m);
        std::size_t gin = spec_.g.input_dim;
        for (std::size_t i = 0; i < spec_.g.hidden.size(); ++i) {
            g_layers_.push_back(add_layer("g." + std::to_string(i), gin, spec_.g.hidden[i]));
            gin = spec_.g.hidden[i];
        }
        g_layers_.push_back(add_layer("g.out", gin, spec_.g.output_dim));
        for (std::size_t k = 0; k < spec_.m; ++k)
            alpha_raw_.push_back(add_tensor("alpha_raw" + std::to_string(k), 1, 1));
        beta_raw_ = add_tensor("beta_raw", 1, 1);
        values_.assign(total_, 0.0);
    }

    // Glorot-uniform weights, zero biases, alpha = beta = 1.
    static ModelParams initialize(const ModelSpec& spec, std::uint64_t seed) {
        ModelParams p(spec);
        Rng rng(seed);
        for (const auto& t : p.layout_) {
            if (t.name.ends_with(".W")) {
                const double limit = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
                std::uniform_real_distribution<double> u(-limit, limit);
                for (std::size_t i = 0; i < t.size(); ++i) p.values_[t.offset + i] = u(rng);
            }
        }
        return p;
    }

    const ModelSpec& spec() const { return spec_; }
    const std::vector<TensorInfo>& layout() const { return layout_; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    Eigen::Map<const Matrix> tensor(std::size_t i) const {
        const auto& t = layout_[i];
        return {values_.data() + t.offset, t.rows, t.cols};
    }
    Eigen::Map<Matrix> tensor(std::size_t i) {
        const auto& t = layout_[i];
        return {values_.data() + t.offset, t.rows, t.cols};
    }

    const std::vector<LayerRef>& f_trunk() const { return f_trunk_; }
    const std::vector<LayerRef>& f_head(std::size_t k) const { return f_heads_.at(k); }
    const LayerRef& mixture_head() const { return mix_head_; }
    const std::vector<LayerRef>& g_layers() const { return g_layers_; }
    std::size_t alpha_raw_index(std::size_t k) const { return alpha_raw_.at(k); }
    std::size_t beta_raw_index() const { return beta_raw_; }

    double alpha(std::size_t k) const { return std::exp(values_[layout_[alpha_raw_.at(k)].offset]); }
    double beta() const { return std::exp(values_[layout_[beta_raw_].offset]); }
    void set_alpha_raw(std::size_t k, double v) { values_[layout_[alpha_raw_.at(k)].offset] = v; }
    void set_beta_raw(double v) { values_[layout_[beta_raw_].offset] = v; }

private:
    std::size_t add_tensor(std::string name, std::size_t rows, std::size_t cols) {
        layout_.push_back({std::move(name), static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(cols), total_});
        total_ += rows * cols;
        return layout_.size() - 1;
    }
    LayerRef add_layer(const std::string& name, std::size_t in, std::size_t out) {
        LayerRef l;
        l.weight = add_tensor(name + ".W", in, out);
        l.bias = add_tensor(name + ".b", 1, out);
        return l;
    }

    ModelSpec spec_;
    std::vector<TensorInfo> layout_;
    std::vector<double> values_;
    std::size_t total_ = 0;
    std::vector<LayerRef> f_trunk_;
    std::vector<std::vector<LayerRef>> f_heads_;
    LayerRef mix_head_;
    std::vector<LayerRef> g_layers_;
    std::vector<std::size_t> alpha_raw_;
    std::size_t beta_raw_ = 0;
};

// Parameters placed on a tape as gradient-carrying leaves.
class BoundParams {
public:
    BoundParams(ad::Tape& tape, const ModelParams& params) : tape_(&tape), params_(&params) {
        vars_.reserve(params.layout().size());
        for (std::size_t i = 0; i < params.layout().size(); ++i)
            vars_.push_back(tape.leaf(Matrix(params.tensor(i)), static_cast<int>(i)));
    }

    ad::Tape& tape() const { return *tape_; }
    const ModelParams& params() const { return *params_; }
    ad::Var operator[](std::size_t tensor) const { return vars_[tensor]; }

    ad::Var alpha(std::size_t k) const { return tape_->exp(vars_[params_->alpha_raw_index(k)]); }
    ad::Var beta() const { return tape_->exp(vars_[params_->beta_raw_index()]); }

    // Flat gradient in layout order after tape().backward(loss).
    std::vector<double> gradients() const {
        std::vector<double> out(params_->size(), 0.0);
        for (const auto& leaf : tape_->leaves()) {
            const auto& info = params_->layout()[static_cast<std::size_t>(leaf.tag)];
            const Matrix g = tape_->grad({leaf.node});
            std::memcpy(out.data() + info.offset, g.data(), info.size() * sizeof(double));
        }
        return out;
    }

private:
    ad::Tape* tape_;
    const ModelParams* params_;
    std::vector<ad::Var> vars_;
};

namespace detail {

inline ad::Var dense(const BoundParams& p, ad::Var x, const LayerRef& l) {
    auto& t = p.tape();
    return t.add_bias(t.matmul(x, p[l.weight]), p[l.bias]);
}

// Hidden layer `index` of a tower: relu(W x + b), plus x when skipped.
inline ad::Var hidden_layer(const BoundParams& p, ad::Var x, const LayerRef& l, bool skip) {
    auto& t = p.tape();
    ad::Var h = t.relu(dense(p, x, l));
    return skip ? t.add(h, x) : h;
}

}  // namespace detail

// Scene trunk output for a batch of scene rows (B x F).
inline ad::Var scene_trunk(const BoundParams& p, ad::Var scenes) {
    auto& t = p.tape();
    const auto& spec = p.params().spec().f;
    if (t.value(scenes).cols() != static_cast<Eigen::Index>(spec.input_dim))
        throw ShapeError("scene features have " + std::to_string(t.value(scenes).cols()) +
                         " values, encoder expects " + std::to_string(spec.input_dim));
    ad::Var h = t.scale_const(scenes, spec.input_scale);
    const auto& trunk = p.params().f_trunk();
    for (std::size_t i = 0; i < trunk.size(); ++i) h = detail::hidden_layer(p, h, trunk[i], spec.has_skip(i));
    return h;
}

// Unit-norm scene embeddings of head k (B x d).
inline ad::Var scene_head(const BoundParams& p, ad::Var trunk_out, std::size_t k) {
    auto& t = p.tape();
    const auto& spec = p.params().spec().f;
    if (k >= p.params().spec().m) throw ArgumentError("mode index out of range");
    const auto& head = p.params().f_head(k);
    ad::Var h = trunk_out;
    if (!spec.hidden.empty()) h = detail::hidden_layer(p, h, head[0], spec.has_skip(spec.hidden.size() - 1));
    return t.normalize_rows(detail::dense(p, h, head.back()));
}

inline ad::Var mixture_logits(const BoundParams& p, ad::Var trunk_out) {
    return detail::dense(p, trunk_out, p.params().mixture_head());
}

// Unit-norm trajectory embeddings for flattened trajectory rows (N x 2M).
inline ad::Var trajectory_tower(const BoundParams& p, ad::Var trajs) {
    auto& t = p.tape();
    const auto& spec = p.params().spec().g;
    if (t.value(trajs).cols() != static_cast<Eigen::Index>(spec.input_dim))
        throw ShapeError("trajectory has " + std::to_string(t.value(trajs).cols()) +
                         " coordinates, encoder expects " + std::to_string(spec.input_dim));
    ad::Var h = t.scale_const(trajs, spec.input_scale);
    const auto& layers = p.params().g_layers();
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
        h = detail::hidden_layer(p, h, layers[i], spec.has_skip(i));
    return t.normalize_rows(detail::dense(p, h, layers.back()));
}

inline Matrix stack_scenes(std::span<const SceneFeatures> scenes) {
    if (scenes.empty()) return Matrix(0, 0);
    Matrix out(static_cast<Eigen::Index>(scenes.size()), static_cast<Eigen::Index>(scenes[0].size()));
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (scenes[i].size() != scenes[0].size()) throw ShapeError("scene lengths differ");
        for (std::size_t c = 0; c < scenes[i].size(); ++c)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = scenes[i][c];
    }
    return out;
}

// ---- inference-side helpers (no gradients kept) ----------------------------

inline Matrix encode_scenes(const ModelParams& params, const Matrix& scenes, std::size_t k) {
    ad::Tape tape;
    BoundParams p(tape, params);
    return tape.value(scene_head(p, scene_trunk(p, tape.constant(scenes)), k));
}

inline Matrix encode_trajectories(const ModelParams& params, const Matrix& trajs) {
    ad::Tape tape;
    BoundParams p(tape, params);
    return tape.value(trajectory_tower(p, tape.constant(trajs)));
}

inline Embedding encode_scene(const ModelParams& params, const SceneFeatures& scene, std::size_t k) {
    const Matrix e = encode_scenes(params, stack_scenes(std::span(&scene, 1)), k);
    return Embedding(std::vector<double>(e.data(), e.data() + e.size()));
}

inline Embedding encode_trajectory(const ModelParams& params, const Trajectory& trajectory) {
    const Matrix e = encode_trajectories(params, stack_trajectories(std::span(&trajectory, 1)));
    return Embedding(std::vector<double>(e.data(), e.data() + e.size()));
}

// pi_k(q): softmax of the mixture-logit head.
inline std::vector<double> mixture_weights(const ModelParams& params, const SceneFeatures& scene) {
    ad::Tape tape;
    BoundParams p(tape, params);
    const ad::Var logp =
        tape.log_softmax_rows(mixture_logits(p, scene_trunk(p, tape.constant(stack_scenes(std::span(&scene, 1))))));
    const Matrix& lp = tape.value(logp);
    std::vector<double> w(static_cast<std::size_t>(lp.cols()));
    for (Eigen::Index k = 0; k < lp.cols(); ++k) w[static_cast<std::size_t>(k)] = std::exp(lp(0, k));
    return w;
}

// Runs backward from a scalar loss and returns the flat parameter gradient.
inline std::vector<double> backprop(const BoundParams& bound, ad::Var loss) {
    bound.tape().backward(loss);
    return bound.gradients();
}

// ---- checkpoint ------------------------------------------------------------

namespace detail {

inline nlohmann::json mlp_to_json(const MlpSpec& s) {
    return {{"input_dim", s.input_dim}, {"hidden", s.hidden}, {"output_dim", s.output_dim},
            {"skip", s.skip},           {"input_scale", s.input_scale}};
}

inline MlpSpec mlp_from_json(const nlohmann::json& j) {
    MlpSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    s.output_dim = j.at("output_dim").get<std::size_t>();
    s.skip = j.at("skip").get<bool>();
    s.input_scale = j.at("input_scale").get<double>();
    return s;
}

inline void write_f64_le(std::ostream& out, std::span<const double> values) {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

inline void read_f64_le(std::istream& in, std::span<double> values) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

}  // namespace detail

// One JSON header line, then the flat parameter array as little-endian doubles.
inline void save_checkpoint(const std::string& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write " + path);
    const nlohmann::json header = {{"f", detail::mlp_to_json(params.spec().f)},
                                   {"g", detail::mlp_to_json(params.spec().g)},
                                   {"d", params.spec().d()},
                                   {"m", params.spec().m},
                                   {"n_params", params.size()},
                                   {"version", kCheckpointVersion}};
    out << header.dump() << '\n';
    detail::write_f64_le(out, params.values());
    if (!out) throw ArgumentError("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty checkpoint", 1);
    ModelSpec spec;
    std::size_t n = 0;
    try {
        const auto h = nlohmann::json::parse(line);
        if (h.at("version").get<int>() != kCheckpointVersion) throw ParseError("unsupported checkpoint version", 1);
        spec.f = detail::mlp_from_json(h.at("f"));
        spec.g = detail::mlp_from_json(h.at("g"));
        spec.m = h.at("m").get<std::size_t>();
        n = h.at("n_params").get<std::size_t>();
        if (h.at("d").get<std::size_t>() != spec.f.output_dim) throw ParseError("checkpoint d disagrees with f", 1);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad checkpoint header: ") + e.what(), 1);
    }
    ModelParams params = [&] {
        try {
            return ModelParams(spec);
        } catch (const ArgumentError& e) {
            throw ParseError(std::string("bad checkpoint spec: ") + e.what(), 1);
        }
    }();
    if (params.size() != n) throw ParseError("checkpoint parameter count does not match its spec", 1);
    detail::read_f64_le(in, params.values());
    if (!in) throw ParseError("checkpoint is truncated");
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint has trailing bytes");
    return params;
}

}  // namespace prank

#endif  // PRANK_ENCODERS_HPP
