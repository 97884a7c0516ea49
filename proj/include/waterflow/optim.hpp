// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_OPTIM_HPP
#define WATERFLOW_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "waterflow/graph.hpp"

namespace wf {

struct AdamWConfig {
    double lr = 2.5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <Real T>
struct AdamWState {
    std::uint64_t step = 0;
    std::map<std::string, Tensor<T>> m;
    std::map<std::string, Tensor<T>> v;
};

struct AdamWStatus {
    std::vector<std::string> rejected; // tensors skipped because of non-finite gradients
    bool ok() const noexcept { return rejected.empty(); }
};

// One decoupled-weight-decay Adam update over every parameter, using the
// gradients currently stored in the set.
template <Real T>
AdamWStatus adamw_step(ParamSet<T>& params, AdamWState<T>& state, const AdamWConfig& cfg) {
    if (!(cfg.lr >= 0.0)) {
        throw ContractError("adamw learning rate must be non-negative");
    }
    AdamWStatus status;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
    const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
    for (auto& p : params) {
        if (!p.grad.all_finite()) {
            status.rejected.push_back(p.name);
            continue;
        }
        auto [mit, m_new] = state.m.try_emplace(p.name, p.value.shape());
        auto [vit, v_new] = state.v.try_emplace(p.name, p.value.shape());
        Tensor<T>& m = mit->second;
        Tensor<T>& v = vit->second;
        require_same_shape(m.shape(), p.value.shape(), "adamw first moment");
        require_same_shape(v.shape(), p.value.shape(), "adamw second moment");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const T gi = p.grad[i];
            m[i] = b1 * m[i] + (T{1} - b1) * gi;
            v[i] = b2 * v[i] + (T{1} - b2) * gi * gi;
            const T mhat = m[i] * inv_bc1;
            const T vhat = v[i] * inv_bc2;
            p.value[i] = p.value[i] * decay - lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    return status;
}

} // namespace wf

#endif
