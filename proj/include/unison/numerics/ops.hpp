// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Each op is recorded on the active tape when any
// input requires a gradient and recording is enabled.
//
// Broadcasting is limited to the leading (row) dimension: a 1 x n operand is
// repeated over the m rows of an m x n operand.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "unison/numerics/tensor.hpp"

namespace unison::num {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
inline Tensor concat_cols(std::initializer_list<Tensor> parts) { return concat_cols(std::span<const Tensor>(parts.begin(), parts.size())); }
inline Tensor concat_rows(std::initializer_list<Tensor> parts) { return concat_rows(std::span<const Tensor>(parts.begin(), parts.size())); }
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);

/// Full reductions to 1 x 1.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column-wise reduction over rows: m x n -> 1 x n.
Tensor mean_rows(const Tensor& a);
/// Row-wise reduction over columns: m x n -> m x 1.
Tensor sum_cols(const Tensor& a);

/// Row-wise, max-subtracted.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

/// Row-wise L1 distance: m x n, m x n -> m x 1.
Tensor l1_distance(const Tensor& a, const Tensor& b);
/// Row-wise dot product: m x n, m x n -> m x 1.
Tensor row_dot(const Tensor& a, const Tensor& b);
/// Multiplies row i of `a` by the scalar s(i, 0).
Tensor scale_rows(const Tensor& a, const Tensor& s);

/// Selects rows by index (repeats allowed): result row i = a.row(index[i]).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
/// Picks one column per row: result(i, 0) = a(i, column[i]).
Tensor pick(const Tensor& a, std::span<const std::size_t> column);

/// Scatter reductions: segment[i] names the output row receiving input row i.
Tensor segment_sum(const Tensor& a, std::span<const std::size_t> segment, std::size_t segments);
/// Empty segments yield zero rows.
Tensor segment_mean(const Tensor& a, std::span<const std::size_t> segment, std::size_t segments);
/// Softmax of an m x 1 score column within each segment.
Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment, std::size_t segments);

}  // namespace unison::num
