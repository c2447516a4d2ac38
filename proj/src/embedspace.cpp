// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/embedspace.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "unison/errors.hpp"

namespace unison::emb {

void EmbeddingTable::add(const std::string& token, std::span<const double> vector) {
    if (vector.size() != dim_)
        throw DimensionError("embedding '" + token + "' has width " + std::to_string(vector.size()) + ", table width " + std::to_string(dim_));
    if (index_.contains(token)) throw ContractError("duplicate embedding token '" + token + "'");
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    raw_.insert(raw_.end(), vector.begin(), vector.end());
    double norm = 0.0;
    for (double v : vector) norm += v * v;
    norm = std::sqrt(norm);
    for (double v : vector) unit_.push_back(norm > 0.0 ? v / norm : 0.0);
}

std::size_t EmbeddingTable::index_of(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw VocabularyError(token);
    return it->second;
}

num::Tensor EmbeddingTable::rows(const std::vector<std::string>& tokens) const {
    std::vector<double> values;
    values.reserve(tokens.size() * dim_);
    for (const std::string& t : tokens) {
        auto v = vector(t);
        values.insert(values.end(), v.begin(), v.end());
    }
    return num::Tensor::from(tokens.size(), dim_, std::move(values));
}

EmbeddingTable load_text_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open embedding file", path.string());
    auto where = [&path](std::size_t line) { return path.string() + ":" + std::to_string(line); };

    std::string line;
    if (!std::getline(in, line)) throw FormatError("missing `count dim` header", where(1));
    std::istringstream header(line);
    long long count = -1, dim = -1;
    std::string extra;
    if (!(header >> count >> dim) || (header >> extra) || count < 0 || dim <= 0)
        throw FormatError("malformed `count dim` header", where(1));

    EmbeddingTable table(static_cast<std::size_t>(dim));
    std::vector<double> values(static_cast<std::size_t>(dim));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string token;
        row >> token;
        std::size_t k = 0;
        double v = 0.0;
        while (row >> v) {
            if (k == values.size()) throw FormatError("row has more than " + std::to_string(dim) + " values", where(lineno));
            values[k++] = v;
        }
        if (!row.eof()) throw FormatError("non-numeric value", where(lineno));
        if (k != values.size()) throw FormatError("row has " + std::to_string(k) + " values, expected " + std::to_string(dim), where(lineno));
        if (table.contains(token)) throw FormatError("duplicate token '" + token + "'", where(lineno));
        table.add(token, values);
    }
    if (table.size() != static_cast<std::size_t>(count))
        throw FormatError("header declares " + std::to_string(count) + " rows, found " + std::to_string(table.size()), where(lineno));
    return table;
}

void save_text_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing", path.string());
    out << table.size() << ' ' << table.dim() << '\n';
    out << std::setprecision(17);
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << table.token(i);
        for (double v : table.vector(i)) out << ' ' << v;
        out << '\n';
    }
}

Retrieval retrieve_nearest(std::span<const double> query, const EmbeddingTable& table) {
    if (query.size() != table.dim())
        throw DimensionError("retrieve_nearest: query width " + std::to_string(query.size()) + ", table width " + std::to_string(table.dim()));
    if (table.empty()) throw ContractError("retrieve_nearest: empty table");
    double norm = 0.0;
    for (double v : query) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw ContractError("retrieve_nearest: zero query vector");

    Retrieval best;
    bool found = false;
    for (std::size_t i = 0; i < table.size(); ++i) {
        auto u = table.unit(i);
        double dot = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) dot += query[k] * u[k];
        const double sim = dot / norm;
        if (!found || sim > best.similarity || (sim == best.similarity && table.token(i) < best.token)) {
            best = {i, table.token(i), sim};
            found = true;
        }
    }
    return best;
}

void CrossLingualSpace::validate() const {
    if (source.empty() || target.empty()) throw ContractError("cross-lingual space: empty vocabulary");
}

const Retrieval& CrossLingualSpace::translate(const std::string& source_token) const {
    auto it = cache_.find(source_token);
    if (it != cache_.end()) return it->second;
    Retrieval r = retrieve_nearest(source.vector(source_token), target);
    return cache_.emplace(source_token, std::move(r)).first->second;
}

num::Tensor WordMapper::operator()(const std::vector<std::string>& source_tokens, const CrossLingualSpace& space) const {
    std::vector<std::string> targets;
    targets.reserve(source_tokens.size());
    for (const std::string& t : source_tokens) targets.push_back(space.translate(t).token);
    return from_target(targets, space);
}

num::Tensor WordMapper::from_target(const std::vector<std::string>& target_tokens, const CrossLingualSpace& space) const {
    if (target_tokens.empty()) return num::Tensor(0, affine.out_features());
    return affine(space.target.rows(target_tokens));
}

}  // namespace unison::emb
