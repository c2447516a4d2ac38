// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/numerics/nn.hpp"

#include <cmath>
#include <cstring>

#include "unison/errors.hpp"

namespace unison::num {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(-a, a);
    return Tensor::from(rows, cols, std::move(v), true);
}

Tensor constant_param(std::size_t rows, std::size_t cols, double value) { return Tensor(rows, cols, value, true); }

Tensor normal_param(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor::from(rows, cols, std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) : weight(xavier(in, out, rng)), bias(constant_param(1, out, 0.0)) {}

void Linear::collect(ParamList& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) throw ContractError("Mlp: need at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) layers.emplace_back(widths[i], widths[i + 1], rng);
}

Tensor Mlp::operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](h);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

void Mlp::collect(ParamList& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "." + std::to_string(i));
}

std::vector<Tensor> tensors_of(const ParamList& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& [name, t] : params) out.push_back(t);
    return out;
}

void zero_grads(const ParamList& params) {
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        handle.zero_grad();
    }
}

void set_trainable(const ParamList& params, bool on) {
    for (const auto& [name, t] : params) {
        Tensor handle = t;
        handle.set_requires_grad(on);
    }
}

std::uint64_t checksum(const ParamList& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params) {
        feed(name.data(), name.size());
        const auto shape = t.shape();
        feed(shape.data(), sizeof(shape));
        feed(t.data().data(), t.size() * sizeof(double));
    }
    return h;
}

std::size_t parameter_count(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

}  // namespace unison::num
