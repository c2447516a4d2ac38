// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Attention-LSTM sentence decoder over encoded scene-graph features.
//
// Each step attends separately over object, relation and attribute features
// (additive score v^T tanh(W_f f + W_h h)), fuses the three contexts with a
// relu layer, feeds [fused; embed(previous token)] through a 2-layer LSTM and
// projects the top hidden state onto the vocabulary.

#pragma once

#include <array>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "unison/embedspace.hpp"
#include "unison/numerics/nn.hpp"
#include "unison/sgencoder.hpp"

namespace unison::dec {

class Vocabulary {
public:
    static constexpr std::size_t bos = 0;
    static constexpr std::size_t eos = 1;

    Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
    /// Specials first, then `tokens` in the given order (duplicates ignored).
    explicit Vocabulary(const std::vector<std::string>& tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    /// Throws VocabularyError.
    std::size_t id(const std::string& token) const;
    std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct DecoderConfig {
    std::size_t feature_dim = 32;
    std::size_t hidden = 64;
    std::size_t attention = 32;
    std::size_t triplet = 64;
    std::size_t word_dim = 32;
    std::size_t vocab = 0;
    std::size_t max_len = 16;
    /// Attention computed once from a zero hidden state instead of per step.
    bool static_attention = false;
    /// Logits are the dot products of a projected hidden state with the
    /// word embedding rows, plus a per-word bias.
    bool tied_output = false;
};

struct AttentionHead {
    num::Linear feature;   // feature_dim -> attention
    num::Linear hidden;    // hidden -> attention
    num::Tensor score;     // attention x 1
    num::Tensor null_feature;
};

struct LstmLayer {
    num::Linear gates;     // [x; h] -> 4 * hidden, gate order i, f, g, o
};

/// Per-type feature rows with null rows filled in for empty sets.
struct PreparedFeatures {
    std::size_t graphs = 0;
    std::array<num::Tensor, 3> rows;
    std::array<num::Tensor, 3> projected;   // W_f f, computed once
    std::array<std::vector<std::size_t>, 3> owner;
};

struct DecodeState {
    std::array<num::Tensor, 2> h;
    std::array<num::Tensor, 2> c;
    std::vector<std::size_t> prev;
    std::size_t step = 0;
    /// Graph of each state row.
    std::vector<std::size_t> graph;
};

class Decoder {
public:
    Decoder() = default;
    Decoder(const DecoderConfig& config, Rng& rng);

    const DecoderConfig& config() const { return config_; }

    PreparedFeatures prepare(const enc::EncodedFeatures& features) const;
    DecodeState initial(const std::vector<std::size_t>& graph_of_row) const;

    /// Attention weights and pooled context for type `p` given one hidden row
    /// per state row. Weights are one per (row, same-graph feature) pair.
    std::pair<num::Tensor, num::Tensor> attend(const PreparedFeatures& f, std::size_t p, const num::Tensor& h,
                                               const std::vector<std::size_t>& graph_of_row) const;

    /// One decoding step. max_len bounds greedy and beam decoding only, so
    /// teacher forcing accepts targets of any length.
    std::pair<num::Tensor, DecodeState> step(const PreparedFeatures& f, const DecodeState& state) const;

    /// Teacher-forced negative log-likelihood summed over tokens and graphs.
    /// targets[g] excludes BOS and ends with EOS.
    num::Tensor nll(const PreparedFeatures& f, const std::vector<std::vector<std::size_t>>& targets) const;

    /// Argmax decoding for every graph; ties go to the lowest id. EOS is not emitted.
    std::vector<std::vector<std::size_t>> greedy(const PreparedFeatures& f) const;

    void collect(num::ParamList& out, const std::string& prefix) const;

    /// Copies the table vector of every vocabulary token the table contains
    /// into its embedding row. Throws DimensionError on a width mismatch.
    void load_word_vectors(const Vocabulary& vocab, const emb::EmbeddingTable& table);

    std::array<AttentionHead, 3> heads;
    num::Linear fuse;      // 3 * feature_dim -> triplet
    num::Tensor embedding; // vocab x word_dim
    std::array<LstmLayer, 2> lstm;
    num::Linear output;    // hidden -> vocab, or hidden -> word_dim when tied
    num::Tensor output_bias;   // 1 x vocab, tied only

private:
    DecoderConfig config_;
};

// ---------------------------------------------------------------------------
// Beam search over any left-to-right scorer.

struct Hypothesis {
    std::vector<std::size_t> tokens;   // includes EOS when finished
    double log_prob = 0.0;
    std::shared_ptr<const void> state;
    bool finished = false;
    double score() const;              // log_prob / max(1, tokens)
};

class StepScorer {
public:
    virtual ~StepScorer() = default;
    virtual std::size_t vocab_size() const = 0;
    /// Token that ends a hypothesis, or npos when the scorer has none.
    virtual std::size_t eos() const = 0;
    virtual std::shared_ptr<const void> initial_state() = 0;
    struct Scored {
        std::vector<double> log_probs;
        std::shared_ptr<const void> next_state;
    };
    /// Next-token log-probabilities for each live hypothesis.
    virtual std::vector<Scored> score(const std::vector<const Hypothesis*>& live) = 0;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct BeamResult {
    std::vector<std::size_t> tokens;   // EOS stripped
    double score = 0.0;                // length-normalized log-probability
    bool finished = false;
};

/// Length-normalized beam search with a pool of completed hypotheses; equal
/// scores prefer the lexicographically smaller sequence. Hypotheses alive at
/// max_len join the pool unfinished. Throws ContractError when beam == 0.
BeamResult beam_search(StepScorer& scorer, std::size_t beam, std::size_t max_len);

/// Beam search over one graph's features. The greedy hypothesis competes in
/// the final pool, so the result never scores below greedy.
BeamResult beam_decode(const Decoder& decoder, const PreparedFeatures& features, std::size_t graph, std::size_t beam);

}  // namespace unison::dec
