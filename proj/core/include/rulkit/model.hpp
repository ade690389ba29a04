#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rulkit/errors.hpp"
#include "rulkit/param_store.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tape.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

enum class Activation { relu, gelu };
enum class NormPlacement { post, pre };

/// Architecture of the regression network: linear sensor embedding with
/// learned positions, a stack of decoder-style transformer blocks, average +
/// attention pooling fused by addition, and a small MLP regression head.
struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t window_len = 30;
    std::size_t n_channels = 21;
    std::size_t head_hidden1 = 50;
    std::size_t head_hidden2 = 10;
    Activation activation = Activation::relu;
    bool causal = true;
    NormPlacement norm_placement = NormPlacement::post;
    Dtype dtype = Dtype::f32;
    double layer_norm_eps = 1e-5;

    void validate() const {
        if (!d_model || !n_layers || !n_heads || !d_ff || !window_len ||
            !n_channels || !head_hidden1 || !head_hidden2)
            throw ConfigError("model dimensions must be positive");
        if (d_model % n_heads != 0)
            throw ConfigError("d_model must be divisible by n_heads");
    }

    /// 1024-wide, 24-layer configuration matching a medium decoder-only
    /// language-model backbone.  Not trainable at desk scale; provided so
    /// imported checkpoints and parameter-count checks have a fixed target.
    static ModelConfig full_scale() {
        ModelConfig c;
        c.d_model = 1024;
        c.n_layers = 24;
        c.n_heads = 16;
        c.d_ff = 4096;
        return c;
    }

    bool operator==(const ModelConfig&) const = default;
};

struct ParamSpec {
    enum class Init { weight, zero, one };
    std::string name;
    std::vector<std::size_t> shape;
    Init init;
};

inline std::string layer_param(std::size_t layer, const std::string& field) {
    return "layers." + std::to_string(layer) + "." + field;
}

/// Canonical parameter list: every tensor name, its shape, and how it is
/// initialized.  This order also fixes the RNG draw order of init_params.
inline std::vector<ParamSpec> parameter_shapes(const ModelConfig& cfg) {
    cfg.validate();
    using Init = ParamSpec::Init;
    const std::size_t d = cfg.d_model;
    std::vector<ParamSpec> out;
    out.push_back({"embed.W_e", {cfg.n_channels, d}, Init::weight});
    out.push_back({"embed.b_e", {d}, Init::zero});
    out.push_back({"pos.P", {cfg.window_len, d}, Init::zero});
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        for (const char* w : {"W_Q", "W_K", "W_V", "W_O"})
            out.push_back({layer_param(l, std::string("attn.") + w), {d, d},
                           Init::weight});
        for (const char* b : {"b_Q", "b_K", "b_V", "b_O"})
            out.push_back({layer_param(l, std::string("attn.") + b), {d},
                           Init::zero});
        out.push_back({layer_param(l, "ffn.W_1"), {d, cfg.d_ff}, Init::weight});
        out.push_back({layer_param(l, "ffn.b_1"), {cfg.d_ff}, Init::zero});
        out.push_back({layer_param(l, "ffn.W_2"), {cfg.d_ff, d}, Init::weight});
        out.push_back({layer_param(l, "ffn.b_2"), {d}, Init::zero});
        out.push_back({layer_param(l, "norm1.gamma"), {d}, Init::one});
        out.push_back({layer_param(l, "norm1.beta"), {d}, Init::zero});
        out.push_back({layer_param(l, "norm2.gamma"), {d}, Init::one});
        out.push_back({layer_param(l, "norm2.beta"), {d}, Init::zero});
    }
    out.push_back({"pool.w", {d}, Init::weight});
    out.push_back({"head.W_1", {d, cfg.head_hidden1}, Init::weight});
    out.push_back({"head.b_1", {cfg.head_hidden1}, Init::zero});
    out.push_back({"head.W_2", {cfg.head_hidden1, cfg.head_hidden2}, Init::weight});
    out.push_back({"head.b_2", {cfg.head_hidden2}, Init::zero});
    out.push_back({"head.W_3", {cfg.head_hidden2, 1}, Init::weight});
    out.push_back({"head.b_3", {1}, Init::zero});
    return out;
}

inline std::size_t parameter_count(const ModelConfig& cfg) {
    std::size_t n = 0;
    for (const auto& spec : parameter_shapes(cfg)) {
        std::size_t k = 1;
        for (auto dmn : spec.shape) k *= dmn;
        n += k;
    }
    return n;
}

/// Seeded initialization: weight matrices (and the pooling vector) drawn
/// from N(0, 0.02), biases and positional rows zero, norm gains one.
/// Draws happen in double so the f32 and f64 stores for one seed agree.
template <typename T>
ParameterStore<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    ParameterStore<T> store;
    for (const auto& spec : parameter_shapes(cfg)) {
        Tensor<T> t = Tensor<T>::zeros(spec.shape);
        switch (spec.init) {
            case ParamSpec::Init::weight:
                for (auto& v : t.data()) v = T(rng.normal(0.0, 0.02));
                break;
            case ParamSpec::Init::zero:
                break;
            case ParamSpec::Init::one:
                for (auto& v : t.data()) v = T(1);
                break;
        }
        store.insert(spec.name, std::move(t));
    }
    return store;
}

/// Parameters placed on a tape for one forward pass: trainable names enter
/// as leaves, frozen names as constants (so no gradient work is recorded
/// for them at all).
template <typename T>
struct StagedParams {
    std::map<std::string, typename Tape<T>::Var> vars;

    typename Tape<T>::Var operator[](const std::string& name) const {
        auto it = vars.find(name);
        if (it == vars.end()) throw UsageError("unstaged parameter: " + name);
        return it->second;
    }
};

template <typename T>
StagedParams<T> stage_params(Tape<T>& tape, const ParameterStore<T>& params,
                             const FreezeMask* mask = nullptr) {
    StagedParams<T> staged;
    for (const auto& [name, tensor] : params) {
        const bool frozen = mask && mask->is_frozen(name);
        staged.vars[name] = frozen ? tape.constant(tensor) : tape.leaf(tensor);
    }
    return staged;
}

/// Per-timestep affine embedding X*W_e + b_e plus the learned positional
/// rows: {L,C} -> {L,d_model}.
template <typename T>
typename Tape<T>::Var embed(Tape<T>& tape, const StagedParams<T>& p,
                            typename Tape<T>::Var window,
                            const ModelConfig& cfg) {
    const auto& shape = tape.val(window).shape();
    if (shape.size() != 2 || shape[0] != cfg.window_len ||
        shape[1] != cfg.n_channels)
        throw ShapeError("embed: window must be {window_len, n_channels}");
    auto x = tape.add(tape.matmul(window, p["embed.W_e"]), p["embed.b_e"]);
    return tape.add(x, p["pos.P"]);
}

/// Scaled dot-product attention softmax(Q K^T / sqrt(d_k)) V.
template <typename T>
typename Tape<T>::Var attention(Tape<T>& tape, typename Tape<T>::Var q,
                                typename Tape<T>::Var k,
                                typename Tape<T>::Var v, bool causal) {
    const std::size_t d_k = tape.val(k).dim(1);
    if (tape.val(q).dim(1) != d_k)
        throw ShapeError("attention: query/key dims disagree");
    auto scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                             T(1.0 / std::sqrt(double(d_k))));
    auto probs = tape.softmax_lastdim(scores, causal);
    return tape.matmul(probs, v);
}

/// Multi-head self-attention for one layer: per-head slices of the combined
/// projections, independent attention per head, concatenation, then the
/// output projection W_O.
template <typename T>
typename Tape<T>::Var multi_head(Tape<T>& tape, const StagedParams<T>& p,
                                 typename Tape<T>::Var h, std::size_t layer,
                                 const ModelConfig& cfg) {
    using Var = typename Tape<T>::Var;
    const std::size_t d_h = cfg.d_model / cfg.n_heads;
    auto q = tape.add(tape.matmul(h, p[layer_param(layer, "attn.W_Q")]),
                      p[layer_param(layer, "attn.b_Q")]);
    auto k = tape.add(tape.matmul(h, p[layer_param(layer, "attn.W_K")]),
                      p[layer_param(layer, "attn.b_K")]);
    auto v = tape.add(tape.matmul(h, p[layer_param(layer, "attn.W_V")]),
                      p[layer_param(layer, "attn.b_V")]);
    std::vector<Var> heads;
    heads.reserve(cfg.n_heads);
    for (std::size_t i = 0; i < cfg.n_heads; ++i) {
        auto qi = tape.slice_cols(q, i * d_h, d_h);
        auto ki = tape.slice_cols(k, i * d_h, d_h);
        auto vi = tape.slice_cols(v, i * d_h, d_h);
        heads.push_back(attention(tape, qi, ki, vi, cfg.causal));
    }
    auto cat = tape.concat_lastdim(std::span<const Var>(heads));
    return tape.add(tape.matmul(cat, p[layer_param(layer, "attn.W_O")]),
                    p[layer_param(layer, "attn.b_O")]);
}

template <typename T>
typename Tape<T>::Var activation(Tape<T>& tape, typename Tape<T>::Var x,
                                 Activation act) {
    return act == Activation::relu ? tape.relu(x) : tape.gelu(x);
}

/// Position-wise feed-forward network W_2 * act(W_1 * H + b_1) + b_2.
template <typename T>
typename Tape<T>::Var ffn(Tape<T>& tape, const StagedParams<T>& p,
                          typename Tape<T>::Var h, std::size_t layer,
                          const ModelConfig& cfg) {
    auto a = activation(tape,
                        tape.add(tape.matmul(h, p[layer_param(layer, "ffn.W_1")]),
                                 p[layer_param(layer, "ffn.b_1")]),
                        cfg.activation);
    return tape.add(tape.matmul(a, p[layer_param(layer, "ffn.W_2")]),
                    p[layer_param(layer, "ffn.b_2")]);
}

/// One transformer block.  Post-norm (default): LN after each residual sum.
/// Pre-norm variant normalizes the sub-layer input instead.
template <typename T>
typename Tape<T>::Var transformer_block(Tape<T>& tape, const StagedParams<T>& p,
                                        typename Tape<T>::Var h,
                                        std::size_t layer,
                                        const ModelConfig& cfg) {
    const T eps = T(cfg.layer_norm_eps);
    auto g1 = p[layer_param(layer, "norm1.gamma")];
    auto b1 = p[layer_param(layer, "norm1.beta")];
    auto g2 = p[layer_param(layer, "norm2.gamma")];
    auto b2 = p[layer_param(layer, "norm2.beta")];
    if (cfg.norm_placement == NormPlacement::post) {
        auto h1 = tape.layer_norm(tape.add(h, multi_head(tape, p, h, layer, cfg)),
                                  g1, b1, eps);
        return tape.layer_norm(tape.add(h1, ffn(tape, p, h1, layer, cfg)), g2, b2,
                               eps);
    }
    auto h1 = tape.add(
        h, multi_head(tape, p, tape.layer_norm(h, g1, b1, eps), layer, cfg));
    return tape.add(h1, ffn(tape, p, tape.layer_norm(h1, g2, b2, eps), layer, cfg));
}

/// Fused sequence summary: global average pooling plus attention pooling
/// with the learned scoring vector, added together.  Equals 2*H_mean when
/// all rows agree.
template <typename T>
typename Tape<T>::Var pool_fuse(Tape<T>& tape, const StagedParams<T>& p,
                                typename Tape<T>::Var h) {
    auto h_bar = tape.mean_rows(h);
    auto weights = tape.softmax_lastdim(tape.matmul(h, p["pool.w"]));
    auto h_att = tape.matmul(weights, h);
    return tape.add(h_bar, h_att);
}

/// MLP regression head d_model -> hidden1 -> hidden2 -> 1 with ReLU between
/// layers and a linear, unbounded output.  The head activation stays ReLU
/// regardless of the FFN activation choice.
template <typename T>
typename Tape<T>::Var regress_head(Tape<T>& tape, const StagedParams<T>& p,
                                   typename Tape<T>::Var h_final) {
    auto a1 = tape.relu(tape.add(tape.matmul(h_final, p["head.W_1"]),
                                 p["head.b_1"]));
    auto a2 = tape.relu(tape.add(tape.matmul(a1, p["head.W_2"]), p["head.b_2"]));
    return tape.add(tape.matmul(a2, p["head.W_3"]), p["head.b_3"]);
}

/// Full forward pass for one window: embed -> n_layers blocks -> pooled
/// fusion -> regression head.  Returns a {1} tensor variable.
template <typename T>
typename Tape<T>::Var model_forward(Tape<T>& tape, const StagedParams<T>& p,
                                    typename Tape<T>::Var window,
                                    const ModelConfig& cfg) {
    auto h = embed(tape, p, window, cfg);
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
        h = transformer_block(tape, p, h, l, cfg);
    return regress_head(tape, p, pool_fuse(tape, p, h));
}

/// Gradient-free prediction for one window.
template <typename T>
double predict(const ParameterStore<T>& params, const ModelConfig& cfg,
               const Tensor<T>& window) {
    Tape<T> tape;
    StagedParams<T> staged;
    for (const auto& [name, tensor] : params)
        staged.vars[name] = tape.constant(tensor);
    auto out = model_forward(tape, staged, tape.constant(window), cfg);
    return double(tape.val(out)(0));
}

/// Batched prediction; per-sample results are independent of batch size by
/// construction (each sample runs on its own tape).
template <typename T>
std::vector<double> predict_batch(const ParameterStore<T>& params,
                                  const ModelConfig& cfg,
                                  std::span<const Tensor<T>> windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(predict(params, cfg, w));
    return out;
}

} // namespace rulkit
