#pragma once

// Parameterized building blocks: linear layers and the MLP used throughout
// (ReLU hidden activations, optional LayerNorm after the output layer).

#include <string>
#include <vector>

#include "corgi/common.hpp"
#include "corgi/tensor.hpp"

namespace corgi::nn {

// Kaiming-uniform fan-in bound for ReLU networks.
template <class T>
void kaiming_uniform(std::vector<T>& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
struct Linear {
    tc::Param<T>* W = nullptr;
    tc::Param<T>* b = nullptr;

    Linear() = default;
    Linear(tc::ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
           Rng& rng, bool bias = true) {
        W = &store.create(name + ".W", {in, out});
        kaiming_uniform(W->value, in, rng);
        if (bias) b = &store.create(name + ".b", {out});
    }

    tc::Tensor<T> forward(tc::Tape<T>& tape, const tc::Tensor<T>& x) const {
        tc::Tensor<T> w = tape.leaf(*W);
        if (!b) return tc::linear(x, w);
        tc::Tensor<T> bias = tape.leaf(*b);
        return tc::linear(x, w, &bias);
    }
};

// widths = {in, hidden..., out}; ReLU between layers, LayerNorm(out) when
// with_layer_norm (gamma init 1, beta init 0).
template <class T>
struct Mlp {
    std::vector<Linear<T>> layers;
    tc::Param<T>* ln_gamma = nullptr;
    tc::Param<T>* ln_beta = nullptr;

    Mlp() = default;
    Mlp(tc::ParamStore<T>& store, const std::string& name, const std::vector<std::size_t>& widths,
        bool with_layer_norm, Rng& rng) {
        if (widths.size() < 2) throw ValidationError("mlp '" + name + "': needs >= 2 widths");
        for (std::size_t l = 0; l + 1 < widths.size(); ++l)
            layers.emplace_back(store, name + ".l" + std::to_string(l), widths[l], widths[l + 1],
                                rng);
        if (with_layer_norm) {
            ln_gamma = &store.create(name + ".ln.gamma", {widths.back()});
            std::fill(ln_gamma->value.begin(), ln_gamma->value.end(), T(1));
            ln_beta = &store.create(name + ".ln.beta", {widths.back()});
        }
    }

    std::size_t in_width() const { return layers.front().W->shape[0]; }
    std::size_t out_width() const { return layers.back().W->shape[1]; }

    tc::Tensor<T> forward(tc::Tape<T>& tape, const tc::Tensor<T>& x) const {
        tc::Tensor<T> h = x;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            h = layers[l].forward(tape, h);
            if (l + 1 < layers.size()) h = tc::relu(h);
        }
        if (ln_gamma) h = tc::layer_norm(h, tape.leaf(*ln_gamma), tape.leaf(*ln_beta));
        return h;
    }
};

// Standard hidden-layer plan: `depth` hidden layers of width `hidden`.
inline std::vector<std::size_t> mlp_widths(std::size_t in, std::size_t hidden, std::size_t out,
                                           int depth) {
    std::vector<std::size_t> w{in};
    for (int i = 0; i < depth; ++i) w.push_back(hidden);
    w.push_back(out);
    return w;
}

}  // namespace corgi::nn
