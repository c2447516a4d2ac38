// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/sgencoder.hpp"

#include "unison/errors.hpp"

namespace unison::enc {

using num::Tensor;

Encoder::Encoder(std::size_t dim, Rng& rng)
    : g_r(3 * dim, dim, rng),
      g_s(3 * dim, dim, rng),
      g_o(3 * dim, dim, rng),
      g_a(2 * dim, dim, rng),
      null_relation(num::normal_param(1, dim, 0.1, rng)),
      null_object(num::normal_param(1, dim, 0.1, rng)),
      dim_(dim) {}

EncodedFeatures Encoder::operator()(const GraphBatch& batch, const NodeEmbeddings& nodes) const {
    const std::size_t n = batch.objects();
    if (nodes.objects.rows() != n || nodes.relations.rows() != batch.relations() ||
        nodes.attributes.rows() != batch.attributes())
        throw ContractError("encode: node embeddings do not cover the batch");
    for (std::size_t r = 0; r < batch.relations(); ++r)
        if (batch.relation_subject[r] >= n || batch.relation_object[r] >= n) throw ContractError("encode: dangling relation index");
    for (std::size_t a = 0; a < batch.attributes(); ++a)
        if (batch.attribute_object[a] >= n) throw ContractError("encode: dangling attribute index");

    EncodedFeatures out;
    out.graphs = batch.graphs;
    out.relation_owner = batch.relation_owner;
    out.object_owner = batch.object_owner;

    std::vector<bool> linked(n, false);
    for (std::size_t r = 0; r < batch.relations(); ++r) linked[batch.relation_subject[r]] = linked[batch.relation_object[r]] = true;
    std::vector<std::size_t> isolated;
    for (std::size_t i = 0; i < n; ++i)
        if (!linked[i]) isolated.push_back(i);

    std::vector<Tensor> contributions;
    std::vector<std::size_t> segment;
    if (batch.relations() > 0) {
        const Tensor triplets = num::concat_cols({num::gather_rows(nodes.objects, batch.relation_subject), nodes.relations,
                                                  num::gather_rows(nodes.objects, batch.relation_object)});
        out.relations = num::relu(g_r(triplets));
        contributions.push_back(num::relu(g_s(triplets)));
        contributions.push_back(num::relu(g_o(triplets)));
        segment.insert(segment.end(), batch.relation_subject.begin(), batch.relation_subject.end());
        segment.insert(segment.end(), batch.relation_object.begin(), batch.relation_object.end());
    } else {
        out.relations = Tensor(0, dim_);
    }
    if (!isolated.empty()) {
        const std::vector<std::size_t> zeros(isolated.size(), 0);
        const Tensor fallback = num::concat_cols({num::gather_rows(nodes.objects, isolated), num::gather_rows(null_relation, zeros),
                                                  num::gather_rows(null_object, zeros)});
        contributions.push_back(num::relu(g_s(fallback)));
        segment.insert(segment.end(), isolated.begin(), isolated.end());
    }
    out.objects = contributions.empty() ? Tensor(0, dim_) : num::segment_mean(num::concat_rows(contributions), segment, n);

    if (batch.attributes() > 0) {
        // Attributed objects in first-appearance order get compact rows.
        std::vector<std::size_t> compact(n, static_cast<std::size_t>(-1));
        std::vector<std::size_t> attr_segment;
        for (std::size_t a = 0; a < batch.attributes(); ++a) {
            const std::size_t o = batch.attribute_object[a];
            if (compact[o] == static_cast<std::size_t>(-1)) {
                compact[o] = out.attribute_owner.size();
                out.attribute_owner.push_back(batch.object_owner[o]);
            }
            attr_segment.push_back(compact[o]);
        }
        const Tensor pairs = num::concat_cols({num::gather_rows(nodes.objects, batch.attribute_object), nodes.attributes});
        out.attributes = num::segment_mean(num::relu(g_a(pairs)), attr_segment, out.attribute_owner.size());
    } else {
        out.attributes = Tensor(0, dim_);
    }
    return out;
}

void Encoder::collect(num::ParamList& out, const std::string& prefix) const {
    g_r.collect(out, prefix + ".g_r");
    g_s.collect(out, prefix + ".g_s");
    g_o.collect(out, prefix + ".g_o");
    g_a.collect(out, prefix + ".g_a");
    out.emplace_back(prefix + ".null_relation", null_relation);
    out.emplace_back(prefix + ".null_object", null_object);
}

}  // namespace unison::enc
