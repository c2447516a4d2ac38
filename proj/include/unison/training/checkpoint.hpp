// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory: manifest.json (format version, tensor names, shapes,
// dtype, blob file names, free-form metadata) plus one raw little-endian blob
// per tensor. Directories are written under a temporary name and renamed
// into place, so a reader never sees a half-written checkpoint.

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "unison/numerics/nn.hpp"

namespace unison::train {

inline constexpr const char* checkpoint_format = "unison-ckpt/1";

struct StoredTensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
};

struct Checkpoint {
    nlohmann::ordered_json metadata;
    std::map<std::string, StoredTensor> tensors;

    /// Copies stored values into matching parameters. Throws FormatError on a
    /// missing name or a shape mismatch.
    void load_into(const num::ParamList& params) const;
    bool contains_all(const num::ParamList& params) const;
};

/// Blobs are float32 under f32 precision (values are already rounded) and
/// float64 otherwise.
void write_checkpoint(const std::filesystem::path& dir, const num::ParamList& params, const nlohmann::ordered_json& metadata);
/// Throws FormatError on an unknown version or inconsistent blobs, and
/// ContractError when the directory does not exist.
Checkpoint read_checkpoint(const std::filesystem::path& dir);

}  // namespace unison::train
