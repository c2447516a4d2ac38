// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// One-hop scene-graph encoder. Relation features come from the whole
// triplet; object features average role-specific transforms of every triplet
// the object takes part in; attribute features average (object, attribute)
// transforms per attributed object.

#pragma once

#include <string>
#include <vector>

#include "unison/graph_batch.hpp"
#include "unison/numerics/nn.hpp"

namespace unison::enc {

/// Feature sets of a batch; owner vectors name the graph of each row.
struct EncodedFeatures {
    std::size_t graphs = 0;
    num::Tensor objects;
    std::vector<std::size_t> object_owner;
    num::Tensor relations;
    std::vector<std::size_t> relation_owner;
    num::Tensor attributes;
    std::vector<std::size_t> attribute_owner;

    /// Rows of type `p` (0 objects, 1 relations, 2 attributes).
    const num::Tensor& of(std::size_t p) const { return p == 0 ? objects : (p == 1 ? relations : attributes); }
    const std::vector<std::size_t>& owner_of(std::size_t p) const {
        return p == 0 ? object_owner : (p == 1 ? relation_owner : attribute_owner);
    }
};

class Encoder {
public:
    Encoder() = default;
    Encoder(std::size_t dim, Rng& rng);

    std::size_t dim() const { return dim_; }
    EncodedFeatures operator()(const GraphBatch& batch, const NodeEmbeddings& nodes) const;
    void collect(num::ParamList& out, const std::string& prefix) const;

    num::Linear g_r;
    num::Linear g_s;
    num::Linear g_o;
    num::Linear g_a;
    num::Tensor null_relation;
    num::Tensor null_object;

private:
    std::size_t dim_ = 0;
};

}  // namespace unison::enc
