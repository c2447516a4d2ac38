// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bilingual word-embedding tables with exhaustive cosine retrieval, and the
// word-level mapping layer built on top of it.

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "unison/numerics/nn.hpp"

namespace unison::emb {

class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

    /// Throws ContractError on a duplicate token or wrong width.
    void add(const std::string& token, std::span<const double> vector);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return tokens_.size(); }
    bool empty() const { return tokens_.empty(); }
    bool contains(const std::string& token) const { return index_.contains(token); }
    /// Throws VocabularyError.
    std::size_t index_of(const std::string& token) const;

    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(std::size_t i) const { return tokens_.at(i); }
    std::span<const double> vector(std::size_t i) const { return {raw_.data() + i * dim_, dim_}; }
    std::span<const double> vector(const std::string& token) const { return vector(index_of(token)); }
    /// Unit-norm copy (zero rows stay zero).
    std::span<const double> unit(std::size_t i) const { return {unit_.data() + i * dim_, dim_}; }

    /// Rows of the given tokens as a constant tensor.
    num::Tensor rows(const std::vector<std::string>& tokens) const;

    bool operator==(const EmbeddingTable& other) const {
        return dim_ == other.dim_ && tokens_ == other.tokens_ && raw_ == other.raw_;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> raw_;
    std::vector<double> unit_;
};

/// Text layout: header `count dim`, then one `token v1 ... v_dim` per line.
/// Throws FormatError with the offending line number.
EmbeddingTable load_text_embeddings(const std::filesystem::path& path);
void save_text_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

struct Retrieval {
    std::size_t index = 0;
    std::string token;
    double similarity = 0.0;
};

/// Cosine argmax over the table; ties go to the lexicographically smallest
/// token. Throws ContractError on a zero query and DimensionError on width.
Retrieval retrieve_nearest(std::span<const double> query, const EmbeddingTable& table);

struct CrossLingualSpace {
    EmbeddingTable source;
    EmbeddingTable target;

    /// Throws ContractError when a table is empty.
    void validate() const;
    /// Nearest target entry for a source token, memoized.
    const Retrieval& translate(const std::string& source_token) const;

private:
    mutable std::unordered_map<std::string, Retrieval> cache_;
};

/// Hard retrieval into the target table followed by an affine layer to the
/// model width. Only the affine layer is trainable.
struct WordMapper {
    num::Linear affine;

    WordMapper() = default;
    WordMapper(std::size_t target_dim, std::size_t model_dim, Rng& rng) : affine(target_dim, model_dim, rng) {}

    /// One output row per source token.
    num::Tensor operator()(const std::vector<std::string>& source_tokens, const CrossLingualSpace& space) const;
    /// Affine layer applied to target-table rows directly (no retrieval).
    num::Tensor from_target(const std::vector<std::string>& target_tokens, const CrossLingualSpace& space) const;
    void collect(num::ParamList& out, const std::string& prefix) const { affine.collect(out, prefix); }
};

}  // namespace unison::emb
