// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/hgm.hpp"

#include <cmath>

#include "unison/errors.hpp"

namespace unison::hgm {

using num::Tensor;

const char* to_string(Fusion f) {
    switch (f) {
        case Fusion::word: return "word";
        case Fusion::word_sub: return "word_sub";
        case Fusion::hgm_base: return "hgm_base";
        case Fusion::hgm: return "hgm";
    }
    return "?";
}

Fusion fusion_from_string(const std::string& s) {
    if (s == "word") return Fusion::word;
    if (s == "word_sub") return Fusion::word_sub;
    if (s == "hgm_base") return Fusion::hgm_base;
    if (s == "hgm") return Fusion::hgm;
    throw ContractError("unknown fusion '" + s + "' (word, word_sub, hgm_base, hgm)");
}

Hgm::Hgm(const HgmConfig& config, Rng& rng) : config_(config) {
    // Every variant draws all parameters in the same order so that shared
    // parts start identical across variants for a given seed.
    word = emb::WordMapper(config.target_dim, config.model_dim, rng);
    sconv = num::Linear(2 * config.source_dim, config.sub_width, rng);
    null_neighbor = num::normal_param(1, config.source_dim, 0.1, rng);
    sub_proj = num::Linear(config.sub_width, config.model_dim, rng);
    query = num::Linear(config.source_dim, config.key_dim, rng);
    key = num::Linear(config.source_dim, config.key_dim, rng);
    full_proj = num::Linear(config.source_dim, config.model_dim, rng);
    gate_mlp = num::Mlp({config.model_dim, config.gate_hidden, config.gate_hidden, 3}, rng);
    fuse_word_sub = num::Linear(2 * config.model_dim, config.model_dim, rng);
    fuse_all = num::Linear(3 * config.model_dim, config.model_dim, rng);
}

Tensor Hgm::word_level(const GraphBatch& batch, const emb::CrossLingualSpace& space) const {
    return word(batch.object_tokens, space);
}

Tensor Hgm::sub_level(const GraphBatch& batch, const emb::CrossLingualSpace& space) const {
    const std::size_t n = batch.objects();
    if (n == 0) return Tensor(0, config_.model_dim);
    const Tensor e = num::concat_rows({space.source.rows(batch.object_tokens), null_neighbor});
    std::vector<std::size_t> self, other;
    std::vector<bool> linked(n, false);
    for (std::size_t r = 0; r < batch.relations(); ++r) {
        const std::size_t s = batch.relation_subject[r], o = batch.relation_object[r];
        self.push_back(s);
        other.push_back(o);
        self.push_back(o);
        other.push_back(s);
        linked[s] = linked[o] = true;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (linked[i]) continue;
        self.push_back(i);
        other.push_back(n);   // null neighbour row
    }
    const Tensor pairs = num::concat_cols({num::gather_rows(e, self), num::gather_rows(e, other)});
    return sub_proj(num::segment_mean(num::relu(sconv(pairs)), self, n));
}

namespace {

// All (i, k) object pairs sharing a graph, row-major in i.
void same_graph_pairs(const GraphBatch& batch, std::vector<std::size_t>& left, std::vector<std::size_t>& right) {
    const std::size_t n = batch.objects();
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start;
        while (end < n && batch.object_owner[end] == batch.object_owner[start]) ++end;
        for (std::size_t i = start; i < end; ++i)
            for (std::size_t k = start; k < end; ++k) {
                left.push_back(i);
                right.push_back(k);
            }
        start = end;
    }
}

}  // namespace

Tensor Hgm::full_attention(const GraphBatch& batch, const emb::CrossLingualSpace& space) const {
    const std::size_t n = batch.objects();
    if (n == 0) return Tensor(0, 1);
    const Tensor e = space.source.rows(batch.object_tokens);
    std::vector<std::size_t> left, right;
    same_graph_pairs(batch, left, right);
    const Tensor scores = num::row_dot(num::gather_rows(query(e), left), num::gather_rows(key(e), right));
    return num::segment_softmax(num::scale(scores, 1.0 / std::sqrt(static_cast<double>(config_.key_dim))), left, n);
}

Tensor Hgm::full_level(const GraphBatch& batch, const emb::CrossLingualSpace& space) const {
    const std::size_t n = batch.objects();
    if (n == 0) return Tensor(0, config_.model_dim);
    const Tensor e = space.source.rows(batch.object_tokens);
    std::vector<std::size_t> left, right;
    same_graph_pairs(batch, left, right);
    const Tensor alpha = full_attention(batch, space);
    const Tensor context = num::segment_sum(num::scale_rows(num::gather_rows(e, right), alpha), left, n);
    return full_proj(context);
}

Tensor Hgm::gate(const Tensor& w) const {
    if (gate_override_) {
        std::vector<double> v;
        v.reserve(w.rows() * 3);
        for (std::size_t i = 0; i < w.rows(); ++i) v.insert(v.end(), gate_override_->begin(), gate_override_->end());
        return Tensor::from(w.rows(), 3, std::move(v));
    }
    return num::softmax(gate_mlp(w));
}

Tensor Hgm::map_objects(const GraphBatch& batch, const emb::CrossLingualSpace& space) const {
    const Tensor w = word_level(batch, space);
    if (batch.objects() == 0 || config_.fusion == Fusion::word) return w;
    const Tensor s = sub_level(batch, space);
    if (config_.fusion == Fusion::word_sub) return fuse_word_sub(num::concat_cols({w, s}));
    const Tensor f = full_level(batch, space);
    if (config_.fusion == Fusion::hgm_base) return fuse_all(num::concat_cols({w, s, f}));
    const Tensor alpha = gate(w);
    return num::add(num::add(num::scale_rows(w, num::slice_cols(alpha, 0, 1)), num::scale_rows(s, num::slice_cols(alpha, 1, 1))),
                    num::scale_rows(f, num::slice_cols(alpha, 2, 1)));
}

NodeEmbeddings Hgm::map_batch(const GraphBatch& batch, const emb::CrossLingualSpace& space) const {
    return {map_objects(batch, space), word(batch.predicate_tokens, space), word(batch.attribute_tokens, space)};
}

namespace {

void check_node(const sg::SceneGraph& g, std::size_t node) {
    if (node >= g.objects.size())
        throw ContractError("object index " + std::to_string(node) + " out of range for a graph of " +
                            std::to_string(g.objects.size()) + " objects");
}

Tensor row(const Tensor& t, std::size_t i) {
    const std::size_t idx[] = {i};
    return num::gather_rows(t, idx);
}

}  // namespace

Tensor Hgm::map_subgraph(const sg::SceneGraph& g, std::size_t node, const emb::CrossLingualSpace& space) const {
    check_node(g, node);
    return row(sub_level(GraphBatch::from(g), space), node);
}

Tensor Hgm::map_fullgraph(const sg::SceneGraph& g, std::size_t node, const emb::CrossLingualSpace& space) const {
    if (g.objects.empty()) throw ContractError("map_fullgraph: graph has no objects");
    check_node(g, node);
    return row(full_level(GraphBatch::from(g), space), node);
}

Tensor Hgm::map_node(const sg::SceneGraph& g, std::size_t node, const emb::CrossLingualSpace& space) const {
    check_node(g, node);
    return row(map_objects(GraphBatch::from(g), space), node);
}

NodeEmbeddings Hgm::map_graph(const sg::SceneGraph& g, const emb::CrossLingualSpace& space) const {
    return map_batch(GraphBatch::from(g), space);
}

void Hgm::collect(num::ParamList& out, const std::string& prefix) const {
    word.collect(out, prefix + ".word");
    if (config_.fusion == Fusion::word) return;
    sconv.collect(out, prefix + ".sconv");
    out.emplace_back(prefix + ".null_neighbor", null_neighbor);
    sub_proj.collect(out, prefix + ".sub_proj");
    if (config_.fusion == Fusion::word_sub) {
        fuse_word_sub.collect(out, prefix + ".fuse_word_sub");
        return;
    }
    query.collect(out, prefix + ".query");
    key.collect(out, prefix + ".key");
    full_proj.collect(out, prefix + ".full_proj");
    if (config_.fusion == Fusion::hgm_base)
        fuse_all.collect(out, prefix + ".fuse_all");
    else
        gate_mlp.collect(out, prefix + ".gate");
}

}  // namespace unison::hgm
