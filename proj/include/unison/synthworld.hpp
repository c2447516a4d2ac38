// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded generator of the toy bilingual world: vocabularies, aligned
// embedding tables, context-sensitive translation rules, parallel corpora
// with paraphrases, and noisy image scene graphs with hidden captions.
//
// Homonyms are source nouns with two target senses. The sense is chosen by
// context words present in the graph: a directly related context noun wins,
// then any context noun in the graph, then the default (first) sense. The
// source vector of a homonym sits next to its default sense, so word-level
// retrieval alone is wrong whenever the context selects the other sense.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "unison/embedspace.hpp"
#include "unison/numerics/tensor.hpp"
#include "unison/scenegraph.hpp"

namespace unison::world {

struct NoiseRates {
    double duplicate_triplet_rate = 0.3;
    double spurious_object_rate = 0.2;
    double attribute_drop_rate = 0.2;
};

struct WorldConfig {
    std::uint64_t seed = 7;
    std::size_t n_objects = 60;
    std::size_t n_relations = 12;
    std::size_t n_attributes = 12;
    std::size_t homonym_count = 10;
    std::size_t contexts_per_sense = 2;
    std::size_t paraphrases_per_sentence = 2;
    std::size_t embedding_dim = 32;
    /// Share of corpus sentences built around a homonym.
    double homonym_rate = 0.6;
    /// Among homonym sentences with a context noun, share where it is a direct neighbour.
    double neighbor_context_rate = 0.5;
    /// Share of homonym sentences with no context noun (default sense).
    double no_context_rate = 0.2;
    double attribute_rate = 0.3;
    NoiseRates noise;
    /// Image-side feature distortion z -> z A + b with A = I + scale * G / sqrt(d).
    double distortion_scale = 0.5;
    double distortion_bias = 0.3;

    /// Throws ContractError.
    void validate() const;
};

struct Homonym {
    std::string token;
    std::array<std::string, 2> senses;
    std::array<std::vector<std::string>, 2> contexts;
};

struct TranslationRules {
    std::map<std::string, std::string> word;
    std::vector<Homonym> homonyms;
    /// (homonym, context noun) -> target sense
    std::map<std::pair<std::string, std::string>, std::string> context;
    std::string source_connective = "and";
    std::string target_connective = "AND";

    const Homonym* homonym(const std::string& token) const;
    /// Target token of object `obj` in `graph`, applying the context rules.
    std::string translate_object(const sg::SceneGraph& graph, std::size_t obj) const;
    /// Node-by-node translation; structure is unchanged.
    sg::SceneGraph translate(const sg::SceneGraph& graph) const;
    sg::Tokens translate_sentence(const sg::SceneGraph& graph) const;
};

struct World {
    WorldConfig config;
    sg::ToyGrammar source_grammar;
    sg::ToyGrammar target_grammar;
    emb::CrossLingualSpace space;
    TranslationRules rules;
    /// Non-homonym nouns that are not context words of any homonym.
    std::vector<std::string> neutral_nouns;
    std::vector<std::string> plain_nouns;   // every non-homonym noun
};

/// Throws ContractError when homonym_count >= n_objects or the config is invalid.
World generate_world(const WorldConfig& config);

struct CorpusItem {
    sg::Tokens source;
    sg::Tokens target;
    sg::SceneGraph graph;
    std::vector<sg::Tokens> paraphrases;
};

struct ParallelCorpus {
    std::vector<CorpusItem> items;
};

/// `stream` selects an independent sample stream (train, val, test, ...).
ParallelCorpus generate_parallel_corpus(const World& world, std::size_t n, std::uint64_t stream);

struct NoiseLog {
    std::size_t relations = 0, duplicated = 0;
    std::size_t graphs = 0, spurious = 0;
    std::size_t attributes = 0, dropped = 0;
};

struct ImageBank {
    std::vector<sg::SceneGraph> graphs;
    /// Graphs before corruption.
    std::vector<sg::SceneGraph> clean;
    /// Target-language captions for evaluation only.
    std::vector<sg::Tokens> hidden_captions;
    NoiseLog log;
};

/// Captions listed in `exclude` (joined by spaces) are never emitted.
ImageBank generate_image_graphs(const World& world, std::size_t n, const NoiseRates& noise, std::uint64_t stream,
                                const std::set<std::string>& exclude = {});

/// Hidden modality distortion applied to encoded image-side node features.
struct Distortion {
    num::Tensor matrix;   // d x d
    num::Tensor bias;     // 1 x d
    num::Tensor apply(const num::Tensor& features) const;
};
Distortion make_distortion(const WorldConfig& config, std::size_t dim);

std::string join(const sg::Tokens& tokens);

/// world.json: config, grammars, translation rules.
void write_world_manifest(const std::filesystem::path& path, const World& world);
/// Rebuilds the world from world.json plus the two embedding files next to it.
World load_world(const std::filesystem::path& dir);

}  // namespace unison::world
