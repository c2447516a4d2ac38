// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cross-lingual hierarchical graph mapping. Each source object node is mapped
// into the target embedding space at three levels:
//   word  - hard nearest-neighbour retrieval plus an affine layer
//   sub   - mean of relu(W [e_i; e_k]) over related neighbours, projected
//   full  - scaled dot-product attention over all objects of the graph, projected
// and the three are fused by a softmax gate computed from the word level.
// Relations and attributes only receive the word-level mapping.

#pragma once

#include <array>
#include <optional>
#include <string>

#include "unison/embedspace.hpp"
#include "unison/graph_batch.hpp"
#include "unison/numerics/nn.hpp"

namespace unison::hgm {

/// How the level mappings are combined.
enum class Fusion {
    word,       // word level only
    word_sub,   // FC over [word; sub]
    hgm_base,   // FC over [word; sub; full]
    hgm,        // self-gated convex combination
};

const char* to_string(Fusion f);
Fusion fusion_from_string(const std::string& s);

struct HgmConfig {
    std::size_t source_dim = 32;
    std::size_t target_dim = 32;
    std::size_t model_dim = 32;
    std::size_t sub_width = 32;
    std::size_t key_dim = 16;
    std::size_t gate_hidden = 32;
    Fusion fusion = Fusion::hgm;
};

class Hgm {
public:
    Hgm() = default;
    Hgm(const HgmConfig& config, Rng& rng);

    const HgmConfig& config() const { return config_; }

    /// Object rows of the batch at each level (N_o x model_dim).
    num::Tensor word_level(const GraphBatch& batch, const emb::CrossLingualSpace& space) const;
    num::Tensor sub_level(const GraphBatch& batch, const emb::CrossLingualSpace& space) const;
    num::Tensor full_level(const GraphBatch& batch, const emb::CrossLingualSpace& space) const;
    /// Attention weights of the full level, one per (object, same-graph object) pair
    /// in row-major pair order.
    num::Tensor full_attention(const GraphBatch& batch, const emb::CrossLingualSpace& space) const;
    /// N_o x 3 softmax weights (alpha_word, alpha_sub, alpha_full).
    num::Tensor gate(const num::Tensor& word) const;

    /// Fused object embeddings per the configured fusion.
    num::Tensor map_objects(const GraphBatch& batch, const emb::CrossLingualSpace& space) const;
    /// Objects through map_objects, relations and attributes through the word level.
    NodeEmbeddings map_batch(const GraphBatch& batch, const emb::CrossLingualSpace& space) const;

    /// Single-graph conveniences; node index is checked (ContractError).
    num::Tensor map_subgraph(const sg::SceneGraph& g, std::size_t node, const emb::CrossLingualSpace& space) const;
    num::Tensor map_fullgraph(const sg::SceneGraph& g, std::size_t node, const emb::CrossLingualSpace& space) const;
    num::Tensor map_node(const sg::SceneGraph& g, std::size_t node, const emb::CrossLingualSpace& space) const;
    NodeEmbeddings map_graph(const sg::SceneGraph& g, const emb::CrossLingualSpace& space) const;

    /// Replaces the gate output with fixed weights (test hook).
    void override_gate(std::optional<std::array<double, 3>> weights) { gate_override_ = weights; }

    /// Only the parameters the configured fusion uses.
    void collect(num::ParamList& out, const std::string& prefix) const;

    emb::WordMapper word;
    num::Linear sconv;
    num::Tensor null_neighbor;
    num::Linear sub_proj;
    num::Linear query;
    num::Linear key;
    num::Linear full_proj;
    num::Mlp gate_mlp;
    num::Linear fuse_word_sub;
    num::Linear fuse_all;

private:
    HgmConfig config_;
    std::optional<std::array<double, 3>> gate_override_;
};

}  // namespace unison::hgm
