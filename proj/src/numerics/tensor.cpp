// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/numerics/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "unison/errors.hpp"

namespace unison::num {

namespace {
std::atomic<Precision> g_precision{Precision::f32};
std::atomic<bool> g_finite_checks{true};
thread_local Tape t_tape;
thread_local bool t_grad_enabled = true;
}  // namespace

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }
const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks() { return g_finite_checks.load(); }

Tensor::Tensor() : s_(std::make_shared<detail::Storage>()) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill, bool requires_grad)
    : s_(std::make_shared<detail::Storage>()) {
    s_->rows = rows;
    s_->cols = cols;
    s_->value.assign(rows * cols, round_value(fill, precision()));
    s_->requires_grad = requires_grad;
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    if (values.size() != rows * cols) {
        throw DimensionError("Tensor::from: " + std::to_string(values.size()) + " values for shape [" +
                             std::to_string(rows) + "," + std::to_string(cols) + "]");
    }
    const Precision p = precision();
    for (double& v : values) v = round_value(v, p);
    auto s = std::make_shared<detail::Storage>();
    s->rows = rows;
    s->cols = cols;
    s->value = std::move(values);
    s->requires_grad = requires_grad;
    return Tensor(std::move(s));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return from(1, n, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from(1, 1, {v}, requires_grad); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[' << s_->rows << ',' << s_->cols << ']';
    return os.str();
}

double Tensor::item() const {
    if (s_->value.size() != 1) throw ContractError("Tensor::item on non-scalar " + shape_str());
    return s_->value[0];
}

std::vector<double> Tensor::row_values(std::size_t r) const {
    auto first = s_->value.begin() + static_cast<std::ptrdiff_t>(r * s_->cols);
    return {first, first + static_cast<std::ptrdiff_t>(s_->cols)};
}

void Tensor::zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    auto s = std::make_shared<detail::Storage>();
    s->rows = s_->rows;
    s->cols = s_->cols;
    s->value = s_->value;
    return Tensor(std::move(s));
}

void Tape::record(const char* op, std::function<void()> backward) { entries_.push_back({op, std::move(backward)}); }

void Tape::run_backward() {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
    entries_.clear();
}

Tape& tape() { return t_tape; }
bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
    if (t_tape.empty()) throw ContractError("backward: tape is empty (loss does not depend on any trainable tensor)");
    auto& s = *loss.storage();
    s.ensure_grad()[0] += 1.0;
    t_tape.run_backward();
}

void check_finite(const char* op, std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
    }
}

Tensor make_result(const char* op, std::size_t rows, std::size_t cols, std::vector<double>&& values,
                   bool requires_grad) {
    const Precision p = precision();
    const bool check = g_finite_checks.load(std::memory_order_relaxed);
    if (p == Precision::f32 || check) {
        for (double& v : values) {
            if (p == Precision::f32) v = static_cast<double>(static_cast<float>(v));
            if (check && !std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
        }
    }
    auto s = std::make_shared<detail::Storage>();
    s->rows = rows;
    s->cols = cols;
    s->value = std::move(values);
    s->requires_grad = requires_grad && t_grad_enabled;
    return Tensor(std::move(s));
}

}  // namespace unison::num
