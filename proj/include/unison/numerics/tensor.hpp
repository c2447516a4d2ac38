// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices with a thread-local reverse-mode tape.
//
// Every tensor is two-dimensional: vectors are 1 x n rows and scalars are
// 1 x 1. Values are held in double storage; under Precision::f32 every op
// output is rounded through float so runs reproduce single-precision
// arithmetic bitwise, while Precision::f64 is used by gradient checks.

#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace unison::num {

enum class Precision { f32, f64 };

void set_precision(Precision p);
Precision precision();
const char* precision_name(Precision p);

/// Rounds through float when the global precision is f32.
inline double round_value(double v, Precision p) { return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v; }

/// RAII switch of the global precision; restores on scope exit.
class PrecisionScope {
public:
    explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
    ~PrecisionScope() { set_precision(saved_); }
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision saved_;
};

namespace detail {
struct Storage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};
}  // namespace detail

class Tensor {
public:
    Tensor();
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0, bool requires_grad = false);

    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad = false);
    static Tensor row(std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    std::size_t rows() const { return s_->rows; }
    std::size_t cols() const { return s_->cols; }
    std::size_t size() const { return s_->value.size(); }
    bool empty() const { return s_->value.empty(); }
    std::array<std::size_t, 2> shape() const { return {s_->rows, s_->cols}; }
    std::string shape_str() const;

    std::span<const double> data() const { return s_->value; }
    /// Direct write access; only legal for leaves that are not on a live tape.
    std::span<double> mutable_data() { return s_->value; }
    double at(std::size_t r, std::size_t c) const { return s_->value[r * s_->cols + c]; }
    double item() const;
    std::vector<double> row_values(std::size_t r) const;

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool on) { s_->requires_grad = on; }
    bool has_grad() const { return !s_->grad.empty(); }
    std::span<const double> grad() const { return s_->grad; }
    std::span<double> mutable_grad() { return s_->ensure_grad(); }
    void zero_grad();

    /// Copy of the values with no tape attachment.
    Tensor detach() const;
    /// True when both handles refer to the same storage.
    bool same(const Tensor& other) const { return s_ == other.s_; }

    const std::shared_ptr<detail::Storage>& storage() const { return s_; }

private:
    explicit Tensor(std::shared_ptr<detail::Storage> s) : s_(std::move(s)) {}
    std::shared_ptr<detail::Storage> s_;
    friend Tensor make_result(const char*, std::size_t, std::size_t, std::vector<double>&&, bool);
};

/// Ordered record of primitive ops. Backward walks it in exact reverse order.
class Tape {
public:
    void record(const char* op, std::function<void()> backward);
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    void clear() { entries_.clear(); }
    void run_backward();
    const char* op_name(std::size_t i) const { return entries_[i].op; }

private:
    struct Entry {
        const char* op;
        std::function<void()> backward;
    };
    std::vector<Entry> entries_;
};

Tape& tape();
bool grad_enabled();

/// Disables recording for its lifetime (inference, frozen feature extraction).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

/// Seeds d(loss)/d(loss)=1, propagates through the tape and clears it.
/// Leaves accumulate into their grad buffers; call zero_grad between steps.
void backward(const Tensor& loss);

/// Non-finite output checks on every op (on by default).
void set_finite_checks(bool on);
bool finite_checks();

/// Builds an op result: rounds to the active precision and checks finiteness.
Tensor make_result(const char* op, std::size_t rows, std::size_t cols, std::vector<double>&& values, bool requires_grad);
void check_finite(const char* op, std::span<const double> values);

}  // namespace unison::num
