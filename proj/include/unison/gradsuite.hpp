// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference check of every training loss and every module forward
// over many small random configurations. Runs at f64 whatever the ambient
// precision.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace unison::gradsuite {

struct Options {
    std::size_t configs = 100;
    /// Widths are drawn from [2, max_dim].
    std::size_t max_dim = 8;
    std::uint64_t seed = 1;
    double tolerance = 1e-4;
};

struct Row {
    std::string name;
    std::size_t configs = 0;
    std::size_t passed = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double max_rel_error = 0.0;
    std::string worst;   // "config N: parameter[i]"
    bool ok() const { return configs > 0 && passed == configs; }
};

/// One row per checked quantity: xe, kl, gan_value, gan_generator, cycle,
/// hgm, encoder, decoder_step.
std::vector<Row> run(const Options& options);

bool all_passed(const std::vector<Row>& rows);
std::string format_table(const std::vector<Row>& rows);
nlohmann::ordered_json to_json(const std::vector<Row>& rows);

}  // namespace unison::gradsuite
