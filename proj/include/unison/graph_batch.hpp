// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flattened view of several scene graphs so that node-level computations run
// as a handful of matrix ops per batch. Object, relation and attribute rows
// are concatenated graph by graph; index vectors refer to global rows.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "unison/numerics/tensor.hpp"
#include "unison/scenegraph.hpp"

namespace unison {

struct GraphBatch {
    std::size_t graphs = 0;
    std::vector<std::string> object_tokens;
    std::vector<std::size_t> object_owner;
    std::vector<std::string> predicate_tokens;
    std::vector<std::size_t> relation_subject;
    std::vector<std::size_t> relation_object;
    std::vector<std::size_t> relation_owner;
    std::vector<std::string> attribute_tokens;
    std::vector<std::size_t> attribute_object;
    std::vector<std::size_t> attribute_owner;

    std::size_t objects() const { return object_tokens.size(); }
    std::size_t relations() const { return predicate_tokens.size(); }
    std::size_t attributes() const { return attribute_tokens.size(); }

    /// Validates each graph (ContractError on dangling indices).
    static GraphBatch from(const std::vector<const sg::SceneGraph*>& graphs);
    static GraphBatch from(const sg::SceneGraph& graph) { return from(std::vector<const sg::SceneGraph*>{&graph}); }
};

/// Embeddings of every node of a batch, one row per node.
struct NodeEmbeddings {
    num::Tensor objects;
    num::Tensor relations;
    num::Tensor attributes;
};

}  // namespace unison
