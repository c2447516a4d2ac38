// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// File-level implementations of the CLI commands. Every command reads its
// inputs from the paths in the run config, writes into an output directory
// and returns the files it produced; the CLI adds the manifest.
//
// Data directory written by gen_data:
//   world.json, source.vec, target.vec      the world and its word vectors
//   {train,val,test}.jsonl                  corpus records
//   {val,test}_graphs.jsonl                 graphs of a split (scene graph schema)
//   {val,test}_refs.jsonl                   target sentences as {id, tokens}
//   images.jsonl                            noisy image graphs
//   image_captions.jsonl                    hidden captions, for eval only

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "unison/config.hpp"
#include "unison/training/training.hpp"

namespace unison::pipeline {

struct Outputs {
    /// Produced files, relative to the output directory, sorted.
    std::vector<std::string> files;
    /// Command-specific results recorded in the manifest.
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    /// Non-zero when the command ran but its check failed (gradcheck).
    int status = 0;
};

Outputs gen_data(const cfg::RunConfig& config, const std::filesystem::path& out);
Outputs train_phase1(const cfg::RunConfig& config, const std::filesystem::path& out);
/// Throws ContractError when the phase-1 checkpoint is missing.
Outputs train_phase2(const cfg::RunConfig& config, const std::filesystem::path& out);
Outputs infer(const cfg::RunConfig& config, const std::filesystem::path& out);
Outputs eval(const cfg::RunConfig& config, const std::filesystem::path& out);
Outputs parse(const cfg::RunConfig& config, const std::filesystem::path& out);
Outputs stats(const cfg::RunConfig& config, const std::filesystem::path& out);
Outputs gradcheck(const cfg::RunConfig& config, const std::filesystem::path& out);

/// Dispatch by command name. Throws ConfigError on an unknown command.
Outputs run_command(const std::string& command, const cfg::RunConfig& config, const std::filesystem::path& out);
const std::vector<std::string>& command_names();

/// manifest.json: command, config hash, seed, versions, wall time, the
/// resolved config, and a hash of every output file.
void write_manifest(const std::filesystem::path& out, const std::string& command, const cfg::RunConfig& config,
                    const Outputs& outputs, double wall_seconds);

nlohmann::ordered_json versions();

// ---------------------------------------------------------------------------
// Building blocks shared with the tests and the acceptance harness.

void write_corpus(const std::filesystem::path& path, const world::ParallelCorpus& corpus);
/// Throws FormatError naming the line.
world::ParallelCorpus read_corpus(const std::filesystem::path& path);

/// Checkpoint metadata carries the resolved run config.
void save_phase1(const std::filesystem::path& dir, const train::Phase1Model& model, const cfg::RunConfig& config);
/// Throws ContractError when `dir` holds no checkpoint.
train::Phase1Model load_phase1(const std::filesystem::path& dir, const world::World& world);
void save_phase2(const std::filesystem::path& dir, const train::Phase2Model& model, std::size_t dim,
                 const cfg::RunConfig& config);
train::Phase2Model load_phase2(const std::filesystem::path& dir);

/// Graphs of image modality get the world's hidden distortion; the mappers
/// apply when `cmm` is given.
std::vector<sg::Tokens> caption_graphs(const train::Phase1Model& model, const world::World& world,
                                       const std::vector<sg::SceneGraph>& graphs, const train::Phase2Model* cmm,
                                       std::size_t beam);

}  // namespace unison::pipeline
