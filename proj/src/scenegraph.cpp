// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/scenegraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "json.hpp"
#include "unison/errors.hpp"

namespace unison::sg {

using ojson = nlohmann::ordered_json;

const char* to_string(Language l) { return l == Language::source ? "source" : "target"; }
const char* to_string(Modality m) { return m == Modality::sentence ? "sentence" : "image"; }

Language language_from_string(const std::string& s) {
    if (s == "source") return Language::source;
    if (s == "target") return Language::target;
    throw FormatError("unknown language '" + s + "'", "/language");
}

Modality modality_from_string(const std::string& s) {
    if (s == "sentence") return Modality::sentence;
    if (s == "image") return Modality::image;
    throw FormatError("unknown modality '" + s + "'", "/modality");
}

void SceneGraph::validate() const {
    for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].id != i) throw ContractError("scene graph: object " + std::to_string(i) + " has id " + std::to_string(objects[i].id));
    }
    for (std::size_t r = 0; r < relations.size(); ++r) {
        const Relation& rel = relations[r];
        if (rel.subject >= objects.size() || rel.object >= objects.size())
            throw ContractError("scene graph: relation " + std::to_string(r) + " endpoint out of range");
        if (rel.subject == rel.object) throw ContractError("scene graph: relation " + std::to_string(r) + " is a self-loop");
    }
    for (std::size_t a = 0; a < attributes.size(); ++a) {
        if (attributes[a].object >= objects.size())
            throw ContractError("scene graph: attribute " + std::to_string(a) + " object out of range");
    }
}

TokenTriple SceneGraph::triplet(std::size_t r) const {
    const Relation& rel = relations.at(r);
    return {objects.at(rel.subject).token, rel.predicate, objects.at(rel.object).token};
}

std::set<TokenTriple> SceneGraph::relation_triples() const {
    std::set<TokenTriple> out;
    for (std::size_t r = 0; r < relations.size(); ++r) out.insert(triplet(r));
    return out;
}

std::set<std::pair<std::string, std::string>> SceneGraph::attribute_pairs() const {
    std::set<std::pair<std::string, std::string>> out;
    for (const Attribute& a : attributes) out.emplace(objects.at(a.object).token, a.token);
    return out;
}

std::set<std::string> SceneGraph::object_tokens() const {
    std::set<std::string> out;
    for (const ObjectNode& o : objects) out.insert(o.token);
    return out;
}

std::size_t SceneGraph::find_object(const std::string& token) const {
    for (const ObjectNode& o : objects)
        if (o.token == token) return o.id;
    return npos;
}

void ToyGrammar::validate() const {
    if (nouns.empty()) throw ContractError("grammar: no nouns");
    if (verbs.empty()) throw ContractError("grammar: no verbs");
    auto overlap = [](const std::set<std::string>& a, const std::set<std::string>& b) {
        return std::any_of(a.begin(), a.end(), [&b](const std::string& t) { return b.contains(t); });
    };
    if (overlap(nouns, verbs) || overlap(nouns, attributes) || overlap(verbs, attributes))
        throw ContractError("grammar: word classes overlap");
    if (nouns.contains(connective) || verbs.contains(connective) || attributes.contains(connective))
        throw ContractError("grammar: connective is also a content word");
}

bool ToyGrammar::knows(const std::string& token) const {
    return token == connective || nouns.contains(token) || verbs.contains(token) || attributes.contains(token);
}

SceneGraph parse_sentence(const Tokens& sentence, const ToyGrammar& grammar) {
    for (std::size_t i = 0; i < sentence.size(); ++i) {
        if (!grammar.knows(sentence[i])) throw ParseError("token '" + sentence[i] + "' is not in the vocabulary", i);
    }
    if (sentence.empty()) throw ParseError("empty sentence", 0);

    SceneGraph g;
    g.language = grammar.language;
    g.modality = Modality::sentence;
    std::set<std::pair<std::size_t, std::string>> seen_attrs;

    auto object_for = [&g](const std::string& token) {
        std::size_t id = g.find_object(token);
        if (id == SceneGraph::npos) {
            id = g.objects.size();
            g.objects.push_back({id, token});
        }
        return id;
    };

    std::size_t pos = 0;
    // Parses `attr* noun` starting at pos; returns the object id.
    auto noun_phrase = [&]() -> std::size_t {
        std::vector<std::string> mods;
        while (pos < sentence.size() && grammar.attributes.contains(sentence[pos])) mods.push_back(sentence[pos++]);
        if (pos >= sentence.size()) throw ParseError("clause ends before its noun", pos);
        if (!grammar.nouns.contains(sentence[pos])) throw ParseError("expected a noun, got '" + sentence[pos] + "'", pos);
        const std::size_t id = object_for(sentence[pos++]);
        for (const std::string& m : mods) {
            if (seen_attrs.emplace(id, m).second) g.attributes.push_back({id, m});
        }
        return id;
    };

    while (true) {
        const std::size_t subject = noun_phrase();
        if (pos < sentence.size() && grammar.verbs.contains(sentence[pos])) {
            const std::string& verb = sentence[pos++];
            const std::size_t clause_start = pos;
            const std::size_t object = noun_phrase();
            if (object == subject) throw ParseError("relation from an object to itself", clause_start);
            g.relations.push_back({subject, verb, object});
        }
        if (pos == sentence.size()) break;
        if (sentence[pos] != grammar.connective) throw ParseError("expected '" + grammar.connective + "' or end of sentence, got '" + sentence[pos] + "'", pos);
        ++pos;
        if (pos == sentence.size()) throw ParseError("dangling connective", pos - 1);
    }
    return g;
}

namespace {

// Object ids in the order render_sentence first mentions them.
std::vector<std::size_t> mention_order(const SceneGraph& graph) {
    std::vector<std::size_t> order;
    std::vector<bool> seen(graph.objects.size(), false);
    auto visit = [&](std::size_t id) {
        if (!seen[id]) {
            seen[id] = true;
            order.push_back(id);
        }
    };
    for (const Relation& r : graph.relations) {
        visit(r.subject);
        visit(r.object);
    }
    for (const ObjectNode& o : graph.objects) visit(o.id);
    return order;
}

}  // namespace

Tokens render_sentence(const SceneGraph& graph, const std::string& connective) {
    std::vector<std::vector<std::string>> mods(graph.objects.size());
    for (const Attribute& a : graph.attributes) mods.at(a.object).push_back(a.token);
    std::vector<bool> mentioned(graph.objects.size(), false);
    Tokens out;
    auto phrase = [&](std::size_t id) {
        if (!mentioned[id]) {
            out.insert(out.end(), mods[id].begin(), mods[id].end());
            mentioned[id] = true;
        }
        out.push_back(graph.objects[id].token);
    };
    std::vector<bool> in_relation(graph.objects.size(), false);
    for (const Relation& r : graph.relations) in_relation[r.subject] = in_relation[r.object] = true;
    bool first = true;
    auto separator = [&] {
        if (!first) out.push_back(connective);
        first = false;
    };
    for (const Relation& r : graph.relations) {
        separator();
        phrase(r.subject);
        out.push_back(r.predicate);
        phrase(r.object);
    }
    for (const ObjectNode& o : graph.objects) {
        if (in_relation[o.id]) continue;
        separator();
        phrase(o.id);
    }
    return out;
}

SceneGraph canonicalize(const SceneGraph& graph) {
    graph.validate();
    const std::vector<std::size_t> order = mention_order(graph);
    std::vector<std::size_t> new_id(graph.objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) new_id[order[i]] = i;

    SceneGraph out;
    out.language = graph.language;
    out.modality = graph.modality;
    for (std::size_t i = 0; i < order.size(); ++i) out.objects.push_back({i, graph.objects[order[i]].token});
    for (const Relation& r : graph.relations) out.relations.push_back({new_id[r.subject], r.predicate, new_id[r.object]});
    std::set<std::pair<std::size_t, std::string>> seen;
    std::vector<std::vector<std::string>> mods(order.size());
    for (const Attribute& a : graph.attributes) {
        if (seen.emplace(new_id[a.object], a.token).second) mods[new_id[a.object]].push_back(a.token);
    }
    for (std::size_t i = 0; i < mods.size(); ++i)
        for (const std::string& m : mods[i]) out.attributes.push_back({i, m});
    return out;
}

SceneGraph merge_graphs(const std::vector<SceneGraph>& graphs) {
    if (graphs.empty()) throw ContractError("merge_graphs: no graphs");
    SceneGraph out;
    out.language = graphs.front().language;
    out.modality = graphs.front().modality;
    std::set<TokenTriple> triples;
    std::set<std::pair<std::string, std::string>> attrs;
    auto object_for = [&out](const std::string& token) {
        std::size_t id = out.find_object(token);
        if (id == SceneGraph::npos) {
            id = out.objects.size();
            out.objects.push_back({id, token});
        }
        return id;
    };
    for (const SceneGraph& g : graphs) {
        if (g.language != out.language) throw ContractError("merge_graphs: graphs mix languages");
        for (const ObjectNode& o : g.objects) object_for(o.token);
        for (std::size_t r = 0; r < g.relations.size(); ++r) {
            auto triple = g.triplet(r);
            if (!triples.insert(triple).second) continue;
            out.relations.push_back({object_for(std::get<0>(triple)), std::get<1>(triple), object_for(std::get<2>(triple))});
        }
        for (const Attribute& a : g.attributes) {
            const std::string& obj = g.objects.at(a.object).token;
            if (!attrs.emplace(obj, a.token).second) continue;
            out.attributes.push_back({object_for(obj), a.token});
        }
    }
    return out;
}

ObjectHistogram graph_stats(const std::vector<SceneGraph>& corpus) {
    if (corpus.empty()) throw ContractError("graph_stats: empty corpus");
    ObjectHistogram h;
    for (const SceneGraph& g : corpus) ++h.counts[std::min<std::size_t>(g.objects.size(), 3)];
    for (std::size_t b = 0; b < 4; ++b) h.fractions[b] = static_cast<double>(h.counts[b]) / static_cast<double>(corpus.size());
    return h;
}

std::string serialize(const SceneGraph& graph) {
    ojson doc;
    doc["language"] = to_string(graph.language);
    doc["modality"] = to_string(graph.modality);
    doc["objects"] = ojson::array();
    for (const ObjectNode& o : graph.objects) doc["objects"].push_back({{"id", o.id}, {"token", o.token}});
    doc["relations"] = ojson::array();
    for (const Relation& r : graph.relations)
        doc["relations"].push_back({{"sub", r.subject}, {"pred", r.predicate}, {"obj", r.object}});
    doc["attributes"] = ojson::array();
    for (const Attribute& a : graph.attributes) doc["attributes"].push_back({{"obj", a.object}, {"attr", a.token}});
    return doc.dump();
}

namespace {

const ojson& field(const ojson& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) throw FormatError("expected an object", path.empty() ? "/" : path);
    auto it = obj.find(key);
    if (it == obj.end()) throw FormatError(std::string("missing field '") + key + "'", path + "/" + key);
    return *it;
}

std::string string_field(const ojson& obj, const char* key, const std::string& path) {
    const ojson& v = field(obj, key, path);
    if (!v.is_string()) throw FormatError("expected a string", path + "/" + key);
    return v.get<std::string>();
}

std::size_t index_field(const ojson& obj, const char* key, const std::string& path) {
    const ojson& v = field(obj, key, path);
    if (!v.is_number_unsigned()) throw FormatError("expected a non-negative integer", path + "/" + key);
    return v.get<std::size_t>();
}

const ojson& array_field(const ojson& obj, const char* key, const std::string& path) {
    const ojson& v = field(obj, key, path);
    if (!v.is_array()) throw FormatError("expected an array", path + "/" + key);
    return v;
}

SceneGraph from_json(const ojson& doc) {
    SceneGraph g;
    g.language = language_from_string(string_field(doc, "language", ""));
    g.modality = modality_from_string(string_field(doc, "modality", ""));
    const ojson& objects = array_field(doc, "objects", "");
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const std::string path = "/objects/" + std::to_string(i);
        const std::size_t id = index_field(objects[i], "id", path);
        if (id != i) throw FormatError("object id must equal its position", path + "/id");
        g.objects.push_back({id, string_field(objects[i], "token", path)});
    }
    const ojson& relations = array_field(doc, "relations", "");
    for (std::size_t i = 0; i < relations.size(); ++i) {
        const std::string path = "/relations/" + std::to_string(i);
        Relation r{index_field(relations[i], "sub", path), string_field(relations[i], "pred", path),
                   index_field(relations[i], "obj", path)};
        if (r.subject >= g.objects.size()) throw FormatError("subject index out of range", path + "/sub");
        if (r.object >= g.objects.size()) throw FormatError("object index out of range", path + "/obj");
        if (r.subject == r.object) throw FormatError("self-loop relation", path);
        g.relations.push_back(std::move(r));
    }
    const ojson& attributes = array_field(doc, "attributes", "");
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        const std::string path = "/attributes/" + std::to_string(i);
        Attribute a{index_field(attributes[i], "obj", path), string_field(attributes[i], "attr", path)};
        if (a.object >= g.objects.size()) throw FormatError("object index out of range", path + "/obj");
        g.attributes.push_back(std::move(a));
    }
    return g;
}

}  // namespace

SceneGraph deserialize(const std::string& text) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("invalid JSON: ") + e.what(), "/");
    }
    return from_json(doc);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<SceneGraph>& graphs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing", path.string());
    for (const SceneGraph& g : graphs) out << serialize(g) << '\n';
}

std::vector<SceneGraph> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for reading", path.string());
    std::vector<SceneGraph> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(deserialize(line));
        } catch (const FormatError& e) {
            throw FormatError(e.what(), path.string() + ":" + std::to_string(lineno));
        }
    }
    return out;
}

}  // namespace unison::sg
