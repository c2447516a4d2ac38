// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus-level caption metrics over whitespace-tokenized sentences: BLEU-1..4,
// ROUGE-L and plain CIDEr (no length penalty). Each candidate may have
// several references.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "unison/scenegraph.hpp"

namespace unison::metrics {

using Sentence = sg::Tokens;
using References = std::vector<std::vector<Sentence>>;

struct ClippedCount {
    std::size_t matched = 0;
    std::size_t total = 0;
};

/// Clipped n-gram matches of one candidate against its references.
ClippedCount clipped_ngrams(const Sentence& candidate, const std::vector<Sentence>& references, std::size_t n);

/// Cumulative BLEU-n: brevity penalty times the geometric mean of the
/// modified precisions of orders 1..n. Zero precisions are replaced by 1e-9.
double bleu(const std::vector<Sentence>& candidates, const References& references, std::size_t n);

/// Mean over candidates of the best LCS F-measure (beta = 1.2) against any reference.
double rouge_l(const std::vector<Sentence>& candidates, const References& references);
double rouge_l_sentence(const Sentence& candidate, const std::vector<Sentence>& references);

/// idf from the reference sets; per-candidate scores are exposed so callers
/// can report them without recomputing the table.
class Cider {
public:
    explicit Cider(const References& references);
    double score(const Sentence& candidate, std::size_t index) const;
    /// Corpus score: mean of per-candidate scores.
    double corpus(const std::vector<Sentence>& candidates) const;

private:
    using Vec = std::map<std::string, double>;
    Vec vectorize(const Sentence& s, std::size_t n) const;

    double log_sets_ = 0.0;
    std::array<std::map<std::string, std::size_t>, 4> df_;
    std::vector<std::array<std::vector<Vec>, 4>> ref_vectors_;
};

double cider(const std::vector<Sentence>& candidates, const References& references);

struct SentenceScores {
    std::string id;
    std::array<double, 4> bleu{};
    double rouge_l = 0.0;
    double cider = 0.0;
};

struct EvalReport {
    std::array<double, 4> bleu{};
    double rouge_l = 0.0;
    double cider = 0.0;
    std::size_t candidates = 0;
    std::size_t references = 0;
    std::vector<SentenceScores> sentences;
};

EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<Sentence>& candidates,
                    const References& references);

void write_report_json(const std::filesystem::path& path, const EvalReport& report);
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

/// JSON lines of {"id": ..., "tokens": [...]}.
struct TokenRecord {
    std::string id;
    Sentence tokens;
};
std::vector<TokenRecord> read_token_records(const std::filesystem::path& path);
void write_token_records(const std::filesystem::path& path, const std::vector<TokenRecord>& records);

/// Candidates aligned with references grouped by id (several reference
/// lines may share an id). Throws ContractError when a candidate id has no
/// reference.
void align_records(const std::vector<TokenRecord>& candidates, const std::vector<TokenRecord>& references,
                   std::vector<std::string>& ids, std::vector<Sentence>& aligned_candidates, References& aligned_refs);

}  // namespace unison::metrics
