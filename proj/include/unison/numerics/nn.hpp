// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small layer building blocks and the named-parameter registry used for
// optimization and checkpointing.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unison/numerics/ops.hpp"
#include "unison/numerics/tensor.hpp"
#include "unison/rng.hpp"

namespace unison::num {

using NamedTensor = std::pair<std::string, Tensor>;
using ParamList = std::vector<NamedTensor>;

/// Leaf parameter drawn from U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng);
/// Leaf parameter with every entry set to `value`.
Tensor constant_param(std::size_t rows, std::size_t cols, double value);
/// Leaf parameter drawn from N(0, stddev^2).
Tensor normal_param(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

/// y = x W + b with W: in x out, b: 1 x out.
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);

    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
    void collect(ParamList& out, const std::string& prefix) const;
};

/// Stack of Linear layers with relu between them (none after the last).
struct Mlp {
    std::vector<Linear> layers;

    Mlp() = default;
    /// widths = {in, h1, ..., out}
    Mlp(const std::vector<std::size_t>& widths, Rng& rng);

    Tensor operator()(const Tensor& x) const;
    void collect(ParamList& out, const std::string& prefix) const;
};

std::vector<Tensor> tensors_of(const ParamList& params);
void zero_grads(const ParamList& params);
void set_trainable(const ParamList& params, bool on);
/// Order-sensitive FNV-1a digest over names, shapes and raw values.
std::uint64_t checksum(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

}  // namespace unison::num
