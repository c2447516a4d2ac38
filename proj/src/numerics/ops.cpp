// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "unison/errors.hpp"

namespace unison::num {

namespace {

using StoragePtr = std::shared_ptr<detail::Storage>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

// Elementwise binary layout with leading-dim broadcast of either side.
struct Broadcast {
    std::size_t rows, cols;
    std::size_t a_stride, b_stride;  // row strides (0 when broadcast)
};

Broadcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) shape_error(op, a, b);
    if (a.rows() == b.rows()) return {a.rows(), a.cols(), a.cols(), b.cols()};
    if (b.rows() == 1) return {a.rows(), a.cols(), a.cols(), 0};
    if (a.rows() == 1) return {b.rows(), b.cols(), 0, b.cols()};
    shape_error(op, a, b);
}

void check_index(const char* op, std::span<const std::size_t> index, std::size_t bound) {
    for (std::size_t i : index) {
        if (i >= bound) {
            throw DimensionError(std::string(op) + ": index " + std::to_string(i) + " out of range " +
                                 std::to_string(bound));
        }
    }
}

template <typename Fwd, typename Bwd>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Bwd bwd_factor) {
    const auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    const bool rg = wants_grad({&a});
    Tensor result = make_result(op, a.rows(), a.cols(), std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record(op, [as, os, bwd_factor] {
            if (os->grad.empty() || !as->requires_grad) return;
            auto& ga = as->ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += os->grad[i] * bwd_factor(as->value[i], os->value[i]);
        });
    }
    return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    if (m > 0 && n > 0 && k > 0) {
        MatrixMap(out.data(), m, n).noalias() = ConstMatrixMap(a.data().data(), m, k) * ConstMatrixMap(b.data().data(), k, n);
    }
    const bool rg = wants_grad({&a, &b});
    Tensor result = make_result("matmul", m, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), bs = b.storage(), os = result.storage();
        tape().record("matmul", [as, bs, os, m, k, n] {
            if (os->grad.empty() || m == 0 || n == 0 || k == 0) return;
            const ConstMatrixMap g(os->grad.data(), m, n);
            if (as->requires_grad)
                MatrixMap(as->ensure_grad().data(), m, k).noalias() += g * ConstMatrixMap(bs->value.data(), k, n).transpose();
            if (bs->requires_grad)
                MatrixMap(bs->ensure_grad().data(), k, n).noalias() += ConstMatrixMap(as->value.data(), m, k).transpose() * g;
        });
    }
    return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    std::vector<double> out(m * n, 0.0);
    if (m > 0 && n > 0 && k > 0) {
        MatrixMap(out.data(), m, n).noalias() =
            ConstMatrixMap(a.data().data(), m, k) * ConstMatrixMap(b.data().data(), n, k).transpose();
    }
    const bool rg = wants_grad({&a, &b});
    Tensor result = make_result("matmul_nt", m, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), bs = b.storage(), os = result.storage();
        tape().record("matmul_nt", [as, bs, os, m, k, n] {
            if (os->grad.empty() || m == 0 || n == 0 || k == 0) return;
            const ConstMatrixMap g(os->grad.data(), m, n);
            if (as->requires_grad)
                MatrixMap(as->ensure_grad().data(), m, k).noalias() += g * ConstMatrixMap(bs->value.data(), n, k);
            if (bs->requires_grad)
                MatrixMap(bs->ensure_grad().data(), n, k).noalias() += g.transpose() * ConstMatrixMap(as->value.data(), m, k);
        });
    }
    return result;
}

namespace {

enum class BinOp { add, sub, mul };

Tensor binary(const char* op, BinOp kind, const Tensor& a, const Tensor& b) {
    const Broadcast bc = broadcast(op, a, b);
    const auto A = a.data();
    const auto B = b.data();
    std::vector<double> out(bc.rows * bc.cols);
    for (std::size_t i = 0; i < bc.rows; ++i) {
        const double* ai = A.data() + i * bc.a_stride;
        const double* bi = B.data() + i * bc.b_stride;
        double* oi = out.data() + i * bc.cols;
        switch (kind) {
            case BinOp::add:
                for (std::size_t j = 0; j < bc.cols; ++j) oi[j] = ai[j] + bi[j];
                break;
            case BinOp::sub:
                for (std::size_t j = 0; j < bc.cols; ++j) oi[j] = ai[j] - bi[j];
                break;
            case BinOp::mul:
                for (std::size_t j = 0; j < bc.cols; ++j) oi[j] = ai[j] * bi[j];
                break;
        }
    }
    const bool rg = wants_grad({&a, &b});
    Tensor result = make_result(op, bc.rows, bc.cols, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), bs = b.storage(), os = result.storage();
        tape().record(op, [as, bs, os, bc, kind] {
            if (os->grad.empty()) return;
            const double* G = os->grad.data();
            if (as->requires_grad) {
                double* GA = as->ensure_grad().data();
                for (std::size_t i = 0; i < bc.rows; ++i) {
                    double* gai = GA + i * bc.a_stride;
                    const double* gi = G + i * bc.cols;
                    if (kind == BinOp::mul) {
                        const double* bi = bs->value.data() + i * bc.b_stride;
                        for (std::size_t j = 0; j < bc.cols; ++j) gai[j] += gi[j] * bi[j];
                    } else {
                        for (std::size_t j = 0; j < bc.cols; ++j) gai[j] += gi[j];
                    }
                }
            }
            if (bs->requires_grad) {
                double* GB = bs->ensure_grad().data();
                for (std::size_t i = 0; i < bc.rows; ++i) {
                    double* gbi = GB + i * bc.b_stride;
                    const double* gi = G + i * bc.cols;
                    if (kind == BinOp::mul) {
                        const double* ai = as->value.data() + i * bc.a_stride;
                        for (std::size_t j = 0; j < bc.cols; ++j) gbi[j] += gi[j] * ai[j];
                    } else if (kind == BinOp::sub) {
                        for (std::size_t j = 0; j < bc.cols; ++j) gbi[j] -= gi[j];
                    } else {
                        for (std::size_t j = 0; j < bc.cols; ++j) gbi[j] += gi[j];
                    }
                }
            }
        });
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::mul, a, b); }

Tensor scale(const Tensor& a, double factor) {
    return unary("scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no operands");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != m) shape_error("concat_cols", parts[0], p);
        n += p.cols();
    }
    std::vector<double> out(m * n);
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const auto v = p.data();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(v.data() + i * p.cols(), p.cols(), out.data() + i * n + offset);
        offset += p.cols();
    }
    bool rg = false;
    if (grad_enabled())
        for (const Tensor& p : parts) rg = rg || p.requires_grad();
    Tensor result = make_result("concat_cols", m, n, std::move(out), rg);
    if (rg) {
        std::vector<StoragePtr> ins;
        for (const Tensor& p : parts) ins.push_back(p.storage());
        StoragePtr os = result.storage();
        tape().record("concat_cols", [ins, os, m, n] {
            if (os->grad.empty()) return;
            std::size_t off = 0;
            for (const auto& s : ins) {
                if (s->requires_grad) {
                    auto& g = s->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < s->cols; ++j) g[i * s->cols + j] += os->grad[i * n + off + j];
                }
                off += s->cols;
            }
        });
    }
    return result;
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no operands");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != n) shape_error("concat_rows", parts[0], p);
        m += p.rows();
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    bool rg = false;
    if (grad_enabled())
        for (const Tensor& p : parts) rg = rg || p.requires_grad();
    Tensor result = make_result("concat_rows", m, n, std::move(out), rg);
    if (rg) {
        std::vector<StoragePtr> ins;
        for (const Tensor& p : parts) ins.push_back(p.storage());
        StoragePtr os = result.storage();
        tape().record("concat_rows", [ins, os] {
            if (os->grad.empty()) return;
            std::size_t off = 0;
            for (const auto& s : ins) {
                const std::size_t len = s->value.size();
                if (s->requires_grad) {
                    auto& g = s->ensure_grad();
                    for (std::size_t i = 0; i < len; ++i) g[i] += os->grad[off + i];
                }
                off += len;
            }
        });
    }
    return result;
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
    if (start + count > a.cols()) {
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + "," + std::to_string(start + count) +
                             ") out of range for " + a.shape_str());
    }
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * count);
    const auto v = a.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(v.data() + i * n + start, count, out.data() + i * count);
    const bool rg = wants_grad({&a});
    Tensor result = make_result("slice_cols", m, count, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record("slice_cols", [as, os, m, n, start, count] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += os->grad[i * count + j];
        });
    }
    return result;
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const bool rg = wants_grad({&a});
    Tensor result = make_result("sum", 1, 1, {s}, rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record("sum", [as, os] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (double& x : g) x += os->grad[0];
        });
    }
    return result;
}

Tensor mean(const Tensor& a) {
    if (a.empty()) throw DimensionError("mean: empty operand");
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double n = static_cast<double>(a.size());
    const bool rg = wants_grad({&a});
    Tensor result = make_result("mean", 1, 1, {s / n}, rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record("mean", [as, os, n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (double& x : g) x += os->grad[0] / n;
        });
    }
    return result;
}

Tensor mean_rows(const Tensor& a) {
    if (a.rows() == 0) throw DimensionError("mean_rows: no rows");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(n, 0.0);
    const auto v = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += v[i * n + j];
    for (double& x : out) x /= static_cast<double>(m);
    const bool rg = wants_grad({&a});
    Tensor result = make_result("mean_rows", 1, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record("mean_rows", [as, os, m, n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += os->grad[j] / static_cast<double>(m);
        });
    }
    return result;
}

Tensor sum_cols(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    const auto v = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += v[i * n + j];
    const bool rg = wants_grad({&a});
    Tensor result = make_result("sum_cols", m, 1, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record("sum_cols", [as, os, m, n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += os->grad[i];
        });
    }
    return result;
}

Tensor softmax(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) throw DimensionError("softmax: zero-width rows");
    std::vector<double> out(m * n);
    const auto v = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = v.data() + i * n;
        double* y = out.data() + i * n;
        const double mx = *std::max_element(x, x + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < n; ++j) y[j] /= z;
    }
    const bool rg = wants_grad({&a});
    Tensor result = make_result("softmax", m, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record("softmax", [as, os, m, n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = os->value.data() + i * n;
                const double* gy = os->grad.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
            }
        });
    }
    return result;
}

Tensor log_softmax(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) throw DimensionError("log_softmax: zero-width rows");
    std::vector<double> out(m * n);
    const auto v = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = v.data() + i * n;
        double* y = out.data() + i * n;
        const double mx = *std::max_element(x, x + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lz;
    }
    const bool rg = wants_grad({&a});
    Tensor result = make_result("log_softmax", m, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        tape().record("log_softmax", [as, os, m, n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = os->value.data() + i * n;
                const double* gy = os->grad.data() + i * n;
                double total = 0.0;
                for (std::size_t j = 0; j < n; ++j) total += gy[j];
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gy[j] - std::exp(y[j]) * total;
            }
        });
    }
    return result;
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary(
        "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor log_sigmoid(const Tensor& a) {
    return unary(
        "log_sigmoid", a, [](double x) { return -(std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x)))); },
        [](double x, double) {
            // 1 - sigmoid(x)
            if (x >= 0.0) {
                const double e = std::exp(-x);
                return e / (1.0 + e);
            }
            return 1.0 / (1.0 + std::exp(x));
        });
}

Tensor tanh(const Tensor& a) {
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
    }
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    for (double v : a.data()) {
        if (v > 700.0) throw NumericError("exp: overflow for input " + std::to_string(v));
    }
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor l1_distance(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("l1_distance", a, b);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    const auto A = a.data();
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += std::abs(A[i * n + j] - B[i * n + j]);
    const bool rg = wants_grad({&a, &b});
    Tensor result = make_result("l1_distance", m, 1, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), bs = b.storage(), os = result.storage();
        tape().record("l1_distance", [as, bs, os, m, n] {
            if (os->grad.empty()) return;
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double d = as->value[i * n + j] - bs->value[i * n + j];
                    const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                    if (as->requires_grad) as->ensure_grad()[i * n + j] += os->grad[i] * sgn;
                    if (bs->requires_grad) bs->ensure_grad()[i * n + j] -= os->grad[i] * sgn;
                }
            }
        });
    }
    return result;
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("row_dot", a, b);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    const auto A = a.data();
    const auto B = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += A[i * n + j] * B[i * n + j];
    const bool rg = wants_grad({&a, &b});
    Tensor result = make_result("row_dot", m, 1, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), bs = b.storage(), os = result.storage();
        tape().record("row_dot", [as, bs, os, m, n] {
            if (os->grad.empty()) return;
            if (as->requires_grad) {
                auto& g = as->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[i * n + j] += os->grad[i] * bs->value[i * n + j];
            }
            if (bs->requires_grad) {
                auto& g = bs->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[i * n + j] += os->grad[i] * as->value[i * n + j];
            }
        });
    }
    return result;
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
    if (s.cols() != 1 || s.rows() != a.rows()) shape_error("scale_rows", a, s);
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const auto A = a.data();
    const auto S = s.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i * n + j] * S[i];
    const bool rg = wants_grad({&a, &s});
    Tensor result = make_result("scale_rows", m, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), ss = s.storage(), os = result.storage();
        tape().record("scale_rows", [as, ss, os, m, n] {
            if (os->grad.empty()) return;
            if (as->requires_grad) {
                auto& g = as->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[i * n + j] += os->grad[i * n + j] * ss->value[i];
            }
            if (ss->requires_grad) {
                auto& g = ss->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[i] += os->grad[i * n + j] * as->value[i * n + j];
            }
        });
    }
    return result;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
    check_index("gather_rows", index, a.rows());
    const std::size_t n = a.cols(), m = index.size();
    std::vector<double> out(m * n);
    const auto A = a.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(A.data() + index[i] * n, n, out.data() + i * n);
    const bool rg = wants_grad({&a});
    Tensor result = make_result("gather_rows", m, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        std::vector<std::size_t> idx(index.begin(), index.end());
        tape().record("gather_rows", [as, os, idx = std::move(idx), n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < n; ++j) g[idx[i] * n + j] += os->grad[i * n + j];
        });
    }
    return result;
}

Tensor pick(const Tensor& a, std::span<const std::size_t> column) {
    if (column.size() != a.rows()) {
        throw DimensionError("pick: " + std::to_string(column.size()) + " columns for " + a.shape_str());
    }
    check_index("pick", column, a.cols());
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = a.data()[i * n + column[i]];
    const bool rg = wants_grad({&a});
    Tensor result = make_result("pick", m, 1, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        std::vector<std::size_t> col(column.begin(), column.end());
        tape().record("pick", [as, os, col = std::move(col), n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < col.size(); ++i) g[i * n + col[i]] += os->grad[i];
        });
    }
    return result;
}

namespace {

Tensor segment_reduce(const char* op, const Tensor& a, std::span<const std::size_t> segment, std::size_t segments,
                      bool average) {
    if (segment.size() != a.rows()) {
        throw DimensionError(std::string(op) + ": " + std::to_string(segment.size()) + " segment ids for " +
                             a.shape_str());
    }
    check_index(op, segment, segments);
    const std::size_t n = a.cols();
    std::vector<double> out(segments * n, 0.0);
    std::vector<double> weight(segments, 0.0);
    for (std::size_t s : segment) weight[s] += 1.0;
    for (double& w : weight) w = (average && w > 0.0) ? 1.0 / w : 1.0;
    const auto A = a.data();
    for (std::size_t i = 0; i < segment.size(); ++i) {
        double* o = out.data() + segment[i] * n;
        const double* x = A.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += x[j];
    }
    if (average)
        for (std::size_t s = 0; s < segments; ++s)
            for (std::size_t j = 0; j < n; ++j) out[s * n + j] *= weight[s];
    const bool rg = wants_grad({&a});
    Tensor result = make_result(op, segments, n, std::move(out), rg);
    if (rg) {
        StoragePtr as = a.storage(), os = result.storage();
        std::vector<std::size_t> seg(segment.begin(), segment.end());
        tape().record(op, [as, os, seg = std::move(seg), weight = std::move(weight), n] {
            if (os->grad.empty()) return;
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < seg.size(); ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += os->grad[seg[i] * n + j] * weight[seg[i]];
        });
    }
    return result;
}

}  // namespace

Tensor segment_sum(const Tensor& a, std::span<const std::size_t> segment, std::size_t segments) {
    return segment_reduce("segment_sum", a, segment, segments, false);
}

Tensor segment_mean(const Tensor& a, std::span<const std::size_t> segment, std::size_t segments) {
    return segment_reduce("segment_mean", a, segment, segments, true);
}

Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment, std::size_t segments) {
    if (scores.cols() != 1 || segment.size() != scores.rows()) {
        throw DimensionError("segment_softmax: scores " + scores.shape_str() + " with " +
                             std::to_string(segment.size()) + " segment ids");
    }
    check_index("segment_softmax", segment, segments);
    const std::size_t m = scores.rows();
    const auto x = scores.data();
    std::vector<double> mx(segments, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < m; ++i) mx[segment[i]] = std::max(mx[segment[i]], x[i]);
    std::vector<double> out(m);
    std::vector<double> z(segments, 0.0);
    for (std::size_t i = 0; i < m; ++i) z[segment[i]] += (out[i] = std::exp(x[i] - mx[segment[i]]));
    for (std::size_t i = 0; i < m; ++i) out[i] /= z[segment[i]];
    const bool rg = wants_grad({&scores});
    Tensor result = make_result("segment_softmax", m, 1, std::move(out), rg);
    if (rg) {
        StoragePtr as = scores.storage(), os = result.storage();
        std::vector<std::size_t> seg(segment.begin(), segment.end());
        tape().record("segment_softmax", [as, os, seg = std::move(seg), segments] {
            if (os->grad.empty()) return;
            std::vector<double> dot(segments, 0.0);
            for (std::size_t i = 0; i < seg.size(); ++i) dot[seg[i]] += os->grad[i] * os->value[i];
            auto& g = as->ensure_grad();
            for (std::size_t i = 0; i < seg.size(); ++i) g[i] += os->value[i] * (os->grad[i] - dot[seg[i]]);
        });
    }
    return result;
}

}  // namespace unison::num
