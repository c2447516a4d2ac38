// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unison/numerics/tensor.hpp"

namespace unison::num {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are bound to the parameter list on the
/// first step; later steps must pass parameters of identical shapes in the
/// same order.
class Adam {
public:
    explicit Adam(AdamConfig config = {});

    /// Updates every parameter in place from its grad buffer (missing grad = 0).
    void step(std::span<Tensor> params);

    std::uint64_t step_count() const { return steps_; }
    const AdamConfig& config() const { return config_; }
    void set_lr(double lr);

    std::span<const double> first_moment(std::size_t param) const { return m_.at(param); }
    std::span<const double> second_moment(std::size_t param) const { return v_.at(param); }

private:
    AdamConfig config_;
    std::uint64_t steps_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace unison::num
