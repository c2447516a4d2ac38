// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "unison/errors.hpp"

namespace unison::num {

Adam::Adam(AdamConfig config) : config_(config) {
    if (!(config_.lr > 0.0)) throw ContractError("Adam: learning rate must be positive");
}

void Adam::set_lr(double lr) {
    if (!(lr > 0.0)) throw ContractError("Adam: learning rate must be positive");
    config_.lr = lr;
}

void Adam::step(std::span<Tensor> params) {
    if (m_.empty()) {
        for (const Tensor& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }
    if (params.size() != m_.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, state holds " +
                             std::to_string(m_.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != m_[i].size()) {
            throw DimensionError("adam_step: parameter " + std::to_string(i) + " has " +
                                 std::to_string(params[i].size()) + " values, moments have " +
                                 std::to_string(m_[i].size()));
        }
    }

    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    const Precision prec = precision();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.has_grad()) continue;
        auto value = p.mutable_data();
        const auto grad = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            value[j] = round_value(value[j] - config_.lr * mhat / (std::sqrt(vhat) + config_.eps), prec);
        }
    }
}

}  // namespace unison::num
