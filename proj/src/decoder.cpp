// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/decoder.hpp"

#include <algorithm>
#include <numeric>

#include "unison/errors.hpp"

namespace unison::dec {

using num::Tensor;

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
    for (const char* special : {"<bos>", "<eos>"}) {
        index_.emplace(special, tokens_.size());
        tokens_.push_back(special);
    }
    for (const std::string& t : tokens) {
        if (index_.contains(t)) continue;
        index_.emplace(t, tokens_.size());
        tokens_.push_back(t);
    }
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw VocabularyError(token);
    return it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const std::string& t : tokens) out.push_back(id(t));
    return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(token(i));
    return out;
}

Decoder::Decoder(const DecoderConfig& config, Rng& rng) : config_(config) {
    if (config.vocab < 3) throw ContractError("decoder: vocabulary must hold specials and at least one word");
    for (AttentionHead& head : heads) {
        head.feature = num::Linear(config.feature_dim, config.attention, rng);
        head.hidden = num::Linear(config.hidden, config.attention, rng);
        head.score = num::xavier(config.attention, 1, rng);
        head.null_feature = num::normal_param(1, config.feature_dim, 0.1, rng);
    }
    fuse = num::Linear(3 * config.feature_dim, config.triplet, rng);
    embedding = num::normal_param(config.vocab, config.word_dim, 0.1, rng);
    const std::size_t h = config.hidden;
    lstm[0].gates = num::Linear(config.triplet + config.word_dim + h, 4 * h, rng);
    lstm[1].gates = num::Linear(2 * h, 4 * h, rng);
    for (LstmLayer& layer : lstm) {
        auto b = layer.gates.bias.mutable_data();
        std::fill(b.begin() + static_cast<long>(h), b.begin() + static_cast<long>(2 * h), 1.0);
    }
    if (config.tied_output) {
        output = num::Linear(h, config.word_dim, rng);
        output_bias = num::constant_param(1, config.vocab, 0.0);
    } else {
        output = num::Linear(h, config.vocab, rng);
    }
}

void Decoder::load_word_vectors(const Vocabulary& vocab, const emb::EmbeddingTable& table) {
    if (table.dim() != config_.word_dim)
        throw DimensionError("word vectors of width " + std::to_string(table.dim()) + " for a decoder with word_dim " +
                             std::to_string(config_.word_dim));
    if (vocab.size() != config_.vocab) throw ContractError("vocabulary size does not match the decoder");
    auto rows = embedding.mutable_data();
    for (std::size_t id = 0; id < vocab.size(); ++id) {
        if (!table.contains(vocab.token(id))) continue;
        const auto v = table.vector(vocab.token(id));
        for (std::size_t j = 0; j < v.size(); ++j) rows[id * config_.word_dim + j] = num::round_value(v[j], num::precision());
    }
}

PreparedFeatures Decoder::prepare(const enc::EncodedFeatures& features) const {
    PreparedFeatures out;
    out.graphs = features.graphs;
    for (std::size_t p = 0; p < 3; ++p) {
        const Tensor& rows = features.of(p);
        std::vector<std::size_t> owner = features.owner_of(p);
        std::vector<bool> present(features.graphs, false);
        for (std::size_t o : owner) present[o] = true;
        std::vector<std::size_t> missing;
        for (std::size_t g = 0; g < features.graphs; ++g)
            if (!present[g]) missing.push_back(g);
        if (missing.empty()) {
            out.rows[p] = rows;
        } else {
            const std::vector<std::size_t> zeros(missing.size(), 0);
            out.rows[p] = num::concat_rows({rows, num::gather_rows(heads[p].null_feature, zeros)});
            owner.insert(owner.end(), missing.begin(), missing.end());
        }
        out.owner[p] = std::move(owner);
        out.projected[p] = heads[p].feature(out.rows[p]);
    }
    return out;
}

DecodeState Decoder::initial(const std::vector<std::size_t>& graph_of_row) const {
    DecodeState s;
    const std::size_t rows = graph_of_row.size();
    for (std::size_t l = 0; l < 2; ++l) {
        s.h[l] = Tensor(rows, config_.hidden);
        s.c[l] = Tensor(rows, config_.hidden);
    }
    s.prev.assign(rows, Vocabulary::bos);
    s.graph = graph_of_row;
    return s;
}

std::pair<Tensor, Tensor> Decoder::attend(const PreparedFeatures& f, std::size_t p, const Tensor& h,
                                          const std::vector<std::size_t>& graph_of_row) const {
    const std::size_t rows = graph_of_row.size();
    std::vector<std::vector<std::size_t>> members(f.graphs);
    for (std::size_t i = 0; i < f.owner[p].size(); ++i) members[f.owner[p][i]].push_back(i);
    std::vector<std::size_t> feat, row;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i : members.at(graph_of_row[r])) {
            feat.push_back(i);
            row.push_back(r);
        }
    }
    const AttentionHead& head = heads[p];
    const Tensor query = config_.static_attention ? head.hidden(Tensor(rows, config_.hidden)) : head.hidden(h);
    const Tensor pre = num::add(num::gather_rows(f.projected[p], feat), num::gather_rows(query, row));
    const Tensor alpha = num::segment_softmax(num::matmul(num::tanh(pre), head.score), row, rows);
    const Tensor z = num::segment_sum(num::scale_rows(num::gather_rows(f.rows[p], feat), alpha), row, rows);
    return {alpha, z};
}

std::pair<Tensor, DecodeState> Decoder::step(const PreparedFeatures& f, const DecodeState& state) const {
    const std::size_t h = config_.hidden;
    std::array<Tensor, 3> z;
    for (std::size_t p = 0; p < 3; ++p) z[p] = attend(f, p, state.h[1], state.graph).second;
    const Tensor fused = num::relu(fuse(num::concat_cols({z[0], z[1], z[2]})));
    Tensor input = num::concat_cols({fused, num::gather_rows(embedding, state.prev)});

    DecodeState next;
    next.graph = state.graph;
    next.prev = state.prev;
    next.step = state.step + 1;
    for (std::size_t l = 0; l < 2; ++l) {
        const Tensor g = lstm[l].gates(num::concat_cols({input, state.h[l]}));
        const Tensor i = num::sigmoid(num::slice_cols(g, 0, h));
        const Tensor fg = num::sigmoid(num::slice_cols(g, h, h));
        const Tensor cand = num::tanh(num::slice_cols(g, 2 * h, h));
        const Tensor o = num::sigmoid(num::slice_cols(g, 3 * h, h));
        next.c[l] = num::add(num::mul(fg, state.c[l]), num::mul(i, cand));
        next.h[l] = num::mul(o, num::tanh(next.c[l]));
        input = next.h[l];
    }
    Tensor logits = config_.tied_output ? num::add(num::matmul_nt(output(next.h[1]), embedding), output_bias)
                                        : output(next.h[1]);
    return {std::move(logits), std::move(next)};
}

Tensor Decoder::nll(const PreparedFeatures& f, const std::vector<std::vector<std::size_t>>& targets) const {
    if (targets.size() != f.graphs) throw ContractError("nll: one target sequence per graph required");
    std::size_t longest = 0;
    for (const auto& t : targets) longest = std::max(longest, t.size());
    std::vector<std::size_t> rows(f.graphs);
    std::iota(rows.begin(), rows.end(), 0);
    DecodeState state = initial(rows);
    std::vector<Tensor> picked;
    for (std::size_t t = 0; t < longest; ++t) {
        auto [logits, next] = step(f, state);
        std::vector<std::size_t> active, gold;
        for (std::size_t b = 0; b < f.graphs; ++b) {
            if (t < targets[b].size()) {
                active.push_back(b);
                gold.push_back(targets[b][t]);
                next.prev[b] = targets[b][t];
            }
        }
        picked.push_back(num::pick(num::log_softmax(num::gather_rows(logits, active)), gold));
        state = std::move(next);
    }
    if (picked.empty()) throw ContractError("nll: no target tokens");
    return num::scale(num::sum(num::concat_rows(picked)), -1.0);
}

std::vector<std::vector<std::size_t>> Decoder::greedy(const PreparedFeatures& f) const {
    num::NoGradGuard guard;
    std::vector<std::size_t> rows(f.graphs);
    std::iota(rows.begin(), rows.end(), 0);
    DecodeState state = initial(rows);
    std::vector<std::vector<std::size_t>> out(f.graphs);
    std::vector<bool> done(f.graphs, false);
    std::size_t remaining = f.graphs;
    for (std::size_t t = 0; t < config_.max_len && remaining > 0; ++t) {
        auto [logits, next] = step(f, state);
        const Tensor logp = num::log_softmax(logits);
        for (std::size_t b = 0; b < f.graphs; ++b) {
            const auto row = logp.data().subspan(b * logp.cols(), logp.cols());
            const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
            next.prev[b] = best;
            if (done[b]) continue;
            if (best == Vocabulary::eos) {
                done[b] = true;
                --remaining;
            } else {
                out[b].push_back(best);
            }
        }
        state = std::move(next);
    }
    return out;
}

void Decoder::collect(num::ParamList& out, const std::string& prefix) const {
    static const char* names[] = {"object", "relation", "attribute"};
    for (std::size_t p = 0; p < 3; ++p) {
        const std::string base = prefix + ".attend_" + names[p];
        heads[p].feature.collect(out, base + ".feature");
        heads[p].hidden.collect(out, base + ".hidden");
        out.emplace_back(base + ".score", heads[p].score);
        out.emplace_back(base + ".null", heads[p].null_feature);
    }
    fuse.collect(out, prefix + ".triplet");
    out.emplace_back(prefix + ".embedding", embedding);
    lstm[0].gates.collect(out, prefix + ".lstm0");
    lstm[1].gates.collect(out, prefix + ".lstm1");
    output.collect(out, prefix + ".output");
    if (config_.tied_output) out.emplace_back(prefix + ".output_bias", output_bias);
}

// ---------------------------------------------------------------------------

double Hypothesis::score() const { return log_prob / static_cast<double>(std::max<std::size_t>(1, tokens.size())); }

namespace {

// Higher score first; equal scores prefer the lexicographically smaller sequence.
bool better(double sa, const std::vector<std::size_t>& a, double sb, const std::vector<std::size_t>& b) {
    if (sa != sb) return sa > sb;
    return a < b;
}

BeamResult to_result(const Hypothesis& h) {
    BeamResult r;
    r.tokens = h.tokens;
    r.finished = h.finished;
    if (h.finished) r.tokens.pop_back();
    r.score = h.score();
    return r;
}

}  // namespace

BeamResult beam_search(StepScorer& scorer, std::size_t beam, std::size_t max_len) {
    if (beam == 0) throw ContractError("beam_search: beam must be >= 1");
    const std::size_t vocab = scorer.vocab_size();
    const std::size_t eos = scorer.eos();
    std::vector<Hypothesis> live(1);
    live[0].state = scorer.initial_state();
    std::vector<Hypothesis> pool;

    for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
        std::vector<const Hypothesis*> refs;
        for (const Hypothesis& h : live) refs.push_back(&h);
        const std::vector<StepScorer::Scored> scored = scorer.score(refs);

        struct Candidate {
            std::size_t parent, token;
            double log_prob;
        };
        std::vector<Candidate> cands;
        cands.reserve(live.size() * vocab);
        for (std::size_t i = 0; i < live.size(); ++i)
            for (std::size_t v = 0; v < vocab; ++v) cands.push_back({i, v, live[i].log_prob + scored[i].log_probs[v]});
        // All candidates share a length, so raw log-probability orders them.
        auto cmp = [&](const Candidate& a, const Candidate& b) {
            if (a.parent == b.parent) {
                const auto& lp = scored[a.parent].log_probs;
                if (lp[a.token] != lp[b.token]) return lp[a.token] > lp[b.token];
                return a.token < b.token;
            }
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            const auto& ta = live[a.parent].tokens;
            const auto& tb = live[b.parent].tokens;
            if (ta != tb) return ta < tb;
            return a.token < b.token;
        };
        const std::size_t keep = std::min(beam, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(), cmp);

        std::vector<Hypothesis> next;
        for (std::size_t c = 0; c < keep; ++c) {
            Hypothesis h;
            h.tokens = live[cands[c].parent].tokens;
            h.tokens.push_back(cands[c].token);
            h.log_prob = cands[c].log_prob;
            h.state = scored[cands[c].parent].next_state;
            if (cands[c].token == eos) {
                h.finished = true;
                pool.push_back(std::move(h));
            } else {
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }
    for (Hypothesis& h : live) pool.push_back(std::move(h));

    const Hypothesis* best = &pool.front();
    for (const Hypothesis& h : pool)
        if (better(h.score(), h.tokens, best->score(), best->tokens)) best = &h;
    return to_result(*best);
}

namespace {

struct LstmSnapshot {
    std::array<Tensor, 2> h, c;
};

class DecoderScorer : public StepScorer {
public:
    DecoderScorer(const Decoder& d, const PreparedFeatures& f, std::size_t graph) : d_(d), f_(f), graph_(graph) {}

    std::size_t vocab_size() const override { return d_.config().vocab; }
    std::size_t eos() const override { return Vocabulary::eos; }
    std::shared_ptr<const void> initial_state() override {
        auto s = std::make_shared<LstmSnapshot>();
        const DecodeState init = d_.initial({graph_});
        s->h = init.h;
        s->c = init.c;
        return s;
    }

    std::vector<Scored> score(const std::vector<const Hypothesis*>& live) override {
        DecodeState state;
        std::vector<Tensor> parts[4];
        for (const Hypothesis* h : live) {
            const auto& snap = *static_cast<const LstmSnapshot*>(h->state.get());
            parts[0].push_back(snap.h[0]);
            parts[1].push_back(snap.h[1]);
            parts[2].push_back(snap.c[0]);
            parts[3].push_back(snap.c[1]);
            state.prev.push_back(h->tokens.empty() ? Vocabulary::bos : h->tokens.back());
            state.graph.push_back(graph_);
        }
        state.h = {num::concat_rows(parts[0]), num::concat_rows(parts[1])};
        state.c = {num::concat_rows(parts[2]), num::concat_rows(parts[3])};
        state.step = live.front()->tokens.size();
        auto [logits, next] = d_.step(f_, state);
        const Tensor logp = num::log_softmax(logits);
        std::vector<Scored> out(live.size());
        for (std::size_t r = 0; r < live.size(); ++r) {
            const std::size_t idx[] = {r};
            auto snap = std::make_shared<LstmSnapshot>();
            for (std::size_t l = 0; l < 2; ++l) {
                snap->h[l] = num::gather_rows(next.h[l], idx);
                snap->c[l] = num::gather_rows(next.c[l], idx);
            }
            const auto row = logp.data().subspan(r * logp.cols(), logp.cols());
            out[r].log_probs.assign(row.begin(), row.end());
            out[r].next_state = std::move(snap);
        }
        return out;
    }

private:
    const Decoder& d_;
    const PreparedFeatures& f_;
    std::size_t graph_;
};

}  // namespace

BeamResult beam_decode(const Decoder& decoder, const PreparedFeatures& features, std::size_t graph, std::size_t beam) {
    if (beam == 0) throw ContractError("beam_decode: beam must be >= 1");
    num::NoGradGuard guard;
    DecoderScorer scorer(decoder, features, graph);
    const BeamResult wide = beam_search(scorer, beam, decoder.config().max_len);
    if (beam == 1) return wide;
    const BeamResult narrow = beam_search(scorer, 1, decoder.config().max_len);
    auto with_eos = [](const BeamResult& r) {
        std::vector<std::size_t> t = r.tokens;
        if (r.finished) t.push_back(Vocabulary::eos);
        return t;
    };
    return better(narrow.score, with_eos(narrow), wide.score, with_eos(wide)) ? narrow : wide;
}

}  // namespace unison::dec
