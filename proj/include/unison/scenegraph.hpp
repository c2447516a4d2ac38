// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scene graphs: object nodes, relation triplets and per-object attributes,
// plus the toy-grammar sentence parser, graph merging (augmentation),
// object-count statistics and the JSON-lines document format.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace unison::sg {

using Tokens = std::vector<std::string>;

enum class Language { source, target };
enum class Modality { sentence, image };

const char* to_string(Language l);
const char* to_string(Modality m);
Language language_from_string(const std::string& s);
Modality modality_from_string(const std::string& s);

struct ObjectNode {
    std::size_t id = 0;
    std::string token;
    bool operator==(const ObjectNode&) const = default;
};

struct Relation {
    std::size_t subject = 0;
    std::string predicate;
    std::size_t object = 0;
    bool operator==(const Relation&) const = default;
};

struct Attribute {
    std::size_t object = 0;
    std::string token;
    bool operator==(const Attribute&) const = default;
};

using TokenTriple = std::tuple<std::string, std::string, std::string>;

struct SceneGraph {
    Language language = Language::source;
    Modality modality = Modality::sentence;
    std::vector<ObjectNode> objects;
    std::vector<Relation> relations;
    std::vector<Attribute> attributes;

    bool operator==(const SceneGraph&) const = default;

    /// Throws ContractError on dangling indices, self-loops or ids that do
    /// not match positions.
    void validate() const;

    /// <subject token, predicate, object token> of relation `r`.
    TokenTriple triplet(std::size_t r) const;
    std::set<TokenTriple> relation_triples() const;
    std::set<std::pair<std::string, std::string>> attribute_pairs() const;
    std::set<std::string> object_tokens() const;

    /// Index of the object carrying `token`, or npos.
    std::size_t find_object(const std::string& token) const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Word classes of the toy language. A sentence is one or more clauses
/// joined by the connective; a clause is `attr* noun (verb attr* noun)?`.
struct ToyGrammar {
    Language language = Language::source;
    std::set<std::string> nouns;
    std::set<std::string> verbs;
    std::set<std::string> attributes;
    std::string connective = "and";

    /// Throws ContractError when word classes overlap or are empty.
    void validate() const;
    bool knows(const std::string& token) const;
};

/// Builds the graph of a toy-grammar sentence: one object per distinct noun
/// (ids in first-mention order), one relation per verb clause, one attribute
/// edge per distinct (object, modifier) pair.
SceneGraph parse_sentence(const Tokens& sentence, const ToyGrammar& grammar);

/// Inverse of parse_sentence on canonical graphs: relation clauses in order,
/// then isolated objects; modifiers are emitted at an object's first mention.
Tokens render_sentence(const SceneGraph& graph, const std::string& connective = "and");

/// Renumbers objects into render (first-mention) order and sorts attributes
/// to match, so that parse_sentence(render_sentence(g)) == g.
SceneGraph canonicalize(const SceneGraph& graph);

/// Union of object tokens, relation triples and attribute pairs, each
/// deduplicated by tokens. Throws ContractError on mixed languages.
SceneGraph merge_graphs(const std::vector<SceneGraph>& graphs);

struct ObjectHistogram {
    std::array<std::size_t, 4> counts{};   // 0, 1, 2, >=3 objects
    std::array<double, 4> fractions{};
    double at_least_three() const { return fractions[3]; }
};

/// Throws ContractError on an empty corpus.
ObjectHistogram graph_stats(const std::vector<SceneGraph>& corpus);

/// Single-line JSON document with stable key order.
std::string serialize(const SceneGraph& graph);
/// Throws FormatError naming the offending JSON pointer.
SceneGraph deserialize(const std::string& text);

void write_jsonl(const std::filesystem::path& path, const std::vector<SceneGraph>& graphs);
/// Errors carry "line N" plus the JSON pointer.
std::vector<SceneGraph> read_jsonl(const std::filesystem::path& path);

}  // namespace unison::sg
