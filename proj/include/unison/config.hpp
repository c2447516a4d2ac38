// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration shared by every CLI command. A config document is JSON;
// only keys that are present override the defaults, and unknown keys are
// rejected with the JSON pointer of the offending key.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "unison/numerics/tensor.hpp"
#include "unison/synthworld.hpp"
#include "unison/training/training.hpp"

namespace unison::cfg {

struct DataSizes {
    std::size_t train = 2000;
    std::size_t val = 200;
    std::size_t test = 200;
    std::size_t images = 1000;
};

/// Inputs of the commands that read earlier results. Empty means unused.
struct Paths {
    std::string data = "data";
    std::string phase1 = "phase1";
    std::string phase2;            // empty: infer without cross-modal mapping
    std::string input;             // graphs (infer, stats) or sentences (parse)
    std::string predictions;       // eval
    std::string references;        // eval
};

struct InferConfig {
    std::size_t beam = 5;
};

struct ParseConfig {
    sg::Language language = sg::Language::source;
};

struct GradcheckConfig {
    std::size_t configs = 100;
    std::size_t max_dim = 8;
};

struct RunConfig {
    /// Drives the world, the corpora and every training run.
    std::uint64_t seed = 1;
    num::Precision precision = num::Precision::f32;
    world::WorldConfig world;
    DataSizes data;
    train::ModelConfig model;
    train::Phase1Config phase1;
    train::Phase2Config phase2;
    InferConfig infer;
    ParseConfig parse;
    GradcheckConfig gradcheck;
    Paths paths;

    /// Throws ContractError through the module validators.
    void validate() const;
    /// World config with the run seed applied.
    world::WorldConfig world_config() const;
};

/// Scaled-down dimensions and schedules that train in minutes on one core.
RunConfig desk();

nlohmann::ordered_json to_json(const RunConfig& config);
nlohmann::ordered_json model_json(const train::ModelConfig& model);
/// Throws ConfigError on unknown or ill-typed keys.
train::ModelConfig model_from_json(const nlohmann::json& doc);
/// Applies the keys present in `doc` on top of `base`. Throws ConfigError.
RunConfig apply_json(const nlohmann::json& doc, RunConfig base);
/// `key=value` with a dotted key; the value is parsed as JSON when it is
/// valid JSON and taken as a string otherwise. Throws ConfigError.
RunConfig apply_override(const std::string& assignment, RunConfig base);

/// Reads a config file. A command manifest is accepted too: its recorded
/// configuration is used. Throws ConfigError.
RunConfig load_config(const std::string& path, const RunConfig& base);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& config);

std::string hex64(std::uint64_t v);
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
/// Throws FormatError when the file cannot be read.
std::uint64_t file_hash(const std::string& path);

}  // namespace unison::cfg
