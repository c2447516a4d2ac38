// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checker. The loss closure is re-evaluated
// with perturbed parameter values; only its forward pass is used as the
// oracle. Run it under PrecisionScope(Precision::f64).

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "unison/numerics/nn.hpp"

namespace unison::num {

struct GradCheckOptions {
    /// Initial step of the five-point central stencil. An entry off by more
    /// than a tenth of the tolerance is re-estimated with steps shrinking by 3x until two
    /// successive estimates agree.
    double step = 1e-3;
    double tolerance = 1e-4;
    /// Denominator floor for the relative error.
    double floor = 1e-6;
    /// Per-tensor cap on checked entries (0 = all).
    std::size_t max_entries_per_tensor = 0;
};

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    /// Entries sitting on a kink (relu, |x|), where no derivative exists:
    /// the shrinking stencil never settles or the one-sided slopes disagree.
    std::size_t skipped = 0;
    bool passed = true;
    std::string worst_param;
};

/// `loss` must build a fresh scalar on the tape each call.
GradCheckResult grad_check(const std::string& name, const std::function<Tensor()>& loss, const ParamList& params,
                           const GradCheckOptions& options = {});

}  // namespace unison::num
