#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pqvae/net.hpp"
#include "pqvae/tensor.hpp"

namespace pqvae {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment accumulators for a fixed list of parameter tensors.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState for_params(const std::vector<const Tensor*>& params, AdamConfig cfg) {
        AdamState st;
        st.config = cfg;
        st.m.reserve(params.size());
        st.v.reserve(params.size());
        for (const Tensor* p : params) {
            st.m.emplace_back(p->shape);
            st.v.emplace_back(p->shape);
        }
        return st;
    }
};

// One bias-corrected Adam update over all parameter tensors. Gradients are
// validated up front so a non-finite value aborts before any state changes.
inline void adam_step(AdamState& state, const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads) {
    require(params.size() == grads.size() && params.size() == state.m.size(), errc::state,
            "adam_step: parameter/gradient/state count mismatch");
    for (std::size_t p = 0; p < params.size(); ++p) {
        require(params[p]->same_shape(*grads[p]) && params[p]->same_shape(state.m[p]),
                errc::state, "adam_step: shape mismatch at parameter " + std::to_string(p));
        for (std::size_t i = 0; i < grads[p]->size(); ++i)
            require(std::isfinite(grads[p]->data[i]), errc::training,
                    "adam_step: non-finite gradient at parameter " + std::to_string(p) +
                        " element " + std::to_string(i));
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.config.beta1, t);
    const double c2 = 1.0 - std::pow(state.config.beta2, t);

    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p];
        const Tensor& grad = *grads[p];
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double g = grad.data[i];
            m.data[i] = state.config.beta1 * m.data[i] + (1.0 - state.config.beta1) * g;
            v.data[i] = state.config.beta2 * v.data[i] + (1.0 - state.config.beta2) * g * g;
            const double mhat = m.data[i] / c1;
            const double vhat = v.data[i] / c2;
            param.data[i] -= state.config.learning_rate * mhat / (std::sqrt(vhat) + state.config.epsilon);
        }
    }
}

inline std::vector<Tensor*> net_params(DenseNet& net) {
    std::vector<Tensor*> out;
    for (auto& layer : net.layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    return out;
}

inline std::vector<const Tensor*> grad_ptrs(const Gradients& grads) {
    std::vector<const Tensor*> out;
    for (std::size_t i = 0; i < grads.weight.size(); ++i) {
        out.push_back(&grads.weight[i]);
        out.push_back(&grads.bias[i]);
    }
    return out;
}

}  // namespace pqvae
