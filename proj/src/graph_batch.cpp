// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/graph_batch.hpp"

namespace unison {

GraphBatch GraphBatch::from(const std::vector<const sg::SceneGraph*>& graphs) {
    GraphBatch b;
    b.graphs = graphs.size();
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const sg::SceneGraph& g = *graphs[gi];
        g.validate();
        const std::size_t base = b.object_tokens.size();
        for (const sg::ObjectNode& o : g.objects) {
            b.object_tokens.push_back(o.token);
            b.object_owner.push_back(gi);
        }
        for (const sg::Relation& r : g.relations) {
            b.predicate_tokens.push_back(r.predicate);
            b.relation_subject.push_back(base + r.subject);
            b.relation_object.push_back(base + r.object);
            b.relation_owner.push_back(gi);
        }
        for (const sg::Attribute& a : g.attributes) {
            b.attribute_tokens.push_back(a.token);
            b.attribute_object.push_back(base + a.object);
            b.attribute_owner.push_back(gi);
        }
    }
    return b;
}

}  // namespace unison
