#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pqvae/rng.hpp"
#include "pqvae/tensor.hpp"

namespace pqvae {

enum class Activation : unsigned char { linear = 0, relu = 1 };

struct DenseLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
    Activation activation = Activation::linear;

    std::size_t in_dim() const { return weight.shape[1]; }
    std::size_t out_dim() const { return weight.shape[0]; }
};

// Fully-connected feed-forward stack. Hidden layers are ReLU, the last layer
// is linear so latent and reconstruction outputs stay unbounded.
struct DenseNet {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size();
        return n;
    }

    void validate() const {
        require(!layers.empty(), errc::config, "DenseNet: no layers");
        for (std::size_t i = 0; i + 1 < layers.size(); ++i)
            require(layers[i].out_dim() == layers[i + 1].in_dim(), errc::config,
                    "DenseNet: layer dimensions do not chain at layer " + std::to_string(i));
        require(layers.back().activation == Activation::linear, errc::config,
                "DenseNet: last layer must be linear");
    }
};

// Glorot-uniform weights, zero biases.
inline DenseLayer make_dense_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    DenseLayer layer;
    layer.weight = Tensor::row_major(out, in);
    layer.bias = Tensor({out});
    layer.activation = act;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
    return layer;
}

inline DenseNet make_mlp(std::size_t input, const std::vector<std::size_t>& hidden,
                         std::size_t output, Rng& rng) {
    DenseNet net;
    std::size_t prev = input;
    for (std::size_t h : hidden) {
        net.layers.push_back(make_dense_layer(prev, h, Activation::relu, rng));
        prev = h;
    }
    net.layers.push_back(make_dense_layer(prev, output, Activation::linear, rng));
    return net;
}

// Square linear net computing y = x. Used by tests and frozen-encoder setups.
inline DenseNet make_identity_net(std::size_t dim) {
    DenseNet net;
    DenseLayer layer;
    layer.weight = Tensor::row_major(dim, dim);
    layer.bias = Tensor({dim});
    layer.activation = Activation::linear;
    for (std::size_t i = 0; i < dim; ++i) layer.weight(i, i) = 1.0;
    net.layers.push_back(std::move(layer));
    return net;
}

// Per-layer inputs and pre-activations recorded during forward, consumed by
// backward. `inputs[i]` feeds layer i; `pre[i]` is W x + b before activation.
struct ForwardCache {
    std::vector<Tensor> inputs;
    std::vector<Tensor> pre;
    std::size_t batch = 0;
    std::size_t layer_count = 0;
};

struct ForwardResult {
    Tensor output;
    ForwardCache cache;
};

inline ForwardResult forward(const DenseNet& net, const Tensor& batch) {
    require(batch.shape.size() == 2, errc::shape, "forward: batch must be rank 2");
    require(batch.shape[1] == net.input_dim(), errc::shape,
            "forward: batch width " + std::to_string(batch.shape[1]) +
                " does not match net input dim " + std::to_string(net.input_dim()));

    const std::size_t B = batch.shape[0];
    ForwardCache cache;
    cache.batch = B;
    cache.layer_count = net.layers.size();
    cache.inputs.reserve(net.layers.size());
    cache.pre.reserve(net.layers.size());

    Tensor x = batch;
    for (const auto& layer : net.layers) {
        const std::size_t in = layer.in_dim();
        const std::size_t out = layer.out_dim();
        Tensor y = Tensor::row_major(B, out);
        for (std::size_t r = 0; r < B; ++r) {
            const double* xr = x.row(r);
            double* yr = y.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double* wrow = layer.weight.row(o);
                double acc = layer.bias[o];
                for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * xr[i];
                yr[o] = acc;
            }
        }
        cache.inputs.push_back(std::move(x));
        cache.pre.push_back(y);
        if (layer.activation == Activation::relu)
            for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        x = std::move(y);
    }

    return {std::move(x), std::move(cache)};
}

struct Gradients {
    std::vector<Tensor> weight;  // same shapes as net weights
    std::vector<Tensor> bias;
};

struct BackwardResult {
    Tensor grad_input;
    Gradients grads;
};

// Gradient of a scalar loss w.r.t. net input and parameters, given the
// gradient at the output. Cache must come from a forward over the same net.
inline BackwardResult backward(const DenseNet& net, const ForwardCache& cache,
                               const Tensor& grad_output) {
    require(cache.layer_count == net.layers.size(), errc::state,
            "backward: cache does not match net");
    require(grad_output.shape.size() == 2 && grad_output.shape[0] == cache.batch &&
                grad_output.shape[1] == net.output_dim(),
            errc::state, "backward: grad_output shape does not match forward output");
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        require(cache.inputs[i].shape[1] == net.layers[i].in_dim(), errc::state,
                "backward: cache layer width mismatch");

    const std::size_t B = cache.batch;
    Gradients grads;
    grads.weight.resize(net.layers.size());
    grads.bias.resize(net.layers.size());

    Tensor delta = grad_output;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const DenseLayer& layer = net.layers[li];
        const std::size_t in = layer.in_dim();
        const std::size_t out = layer.out_dim();

        if (layer.activation == Activation::relu) {
            const Tensor& pre = cache.pre[li];
            for (std::size_t i = 0; i < delta.size(); ++i)
                if (pre.data[i] <= 0.0) delta.data[i] = 0.0;
        }

        Tensor dw = Tensor::row_major(out, in);
        Tensor db = Tensor({out});
        Tensor dx = Tensor::row_major(B, in);
        const Tensor& x = cache.inputs[li];
        for (std::size_t r = 0; r < B; ++r) {
            const double* dr = delta.row(r);
            const double* xr = x.row(r);
            double* dxr = dx.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = dr[o];
                if (d == 0.0) continue;
                db[o] += d;
                double* dwrow = dw.row(o);
                const double* wrow = layer.weight.row(o);
                for (std::size_t i = 0; i < in; ++i) {
                    dwrow[i] += d * xr[i];
                    dxr[i] += d * wrow[i];
                }
            }
        }

        grads.weight[li] = std::move(dw);
        grads.bias[li] = std::move(db);
        delta = std::move(dx);
    }

    return {std::move(delta), std::move(grads)};
}

}  // namespace pqvae
