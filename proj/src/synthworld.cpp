// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "unison/errors.hpp"
#include "unison/rng.hpp"

namespace unison::world {

using sg::SceneGraph;
using sg::Tokens;

namespace {

std::string numbered(char prefix, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%02zu", prefix, i);
    return buf;
}

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::vector<double> blend(const std::vector<double>& base, const std::vector<double>& dir, double weight) {
    std::vector<double> v(base.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = base[i] + weight * dir[i];
        norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace

void WorldConfig::validate() const {
    if (n_objects < 2 || n_relations < 2 || n_attributes < 2) throw ContractError("world: vocabulary sizes must be >= 2");
    if (homonym_count >= n_objects) throw ContractError("world: homonym_count must be below n_objects");
    if (homonym_count * (1 + 2 * contexts_per_sense) + 3 > n_objects)
        throw ContractError("world: too few nouns for homonyms, their contexts and fillers");
    if (homonym_count > 0 && contexts_per_sense == 0) throw ContractError("world: homonyms need context words");
    if (embedding_dim < 2) throw ContractError("world: embedding_dim must be >= 2");
    for (double r : {homonym_rate, neighbor_context_rate, no_context_rate, attribute_rate, noise.duplicate_triplet_rate,
                     noise.spurious_object_rate, noise.attribute_drop_rate}) {
        if (!(r >= 0.0 && r <= 1.0)) throw ContractError("world: rates must lie in [0, 1]");
    }
    if (distortion_scale < 0.0 || distortion_bias < 0.0) throw ContractError("world: distortion magnitudes must be >= 0");
}

const Homonym* TranslationRules::homonym(const std::string& token) const {
    for (const Homonym& h : homonyms)
        if (h.token == token) return &h;
    return nullptr;
}

std::string TranslationRules::translate_object(const SceneGraph& graph, std::size_t obj) const {
    const std::string& token = graph.objects.at(obj).token;
    const Homonym* h = homonym(token);
    if (h == nullptr) {
        auto it = word.find(token);
        if (it == word.end()) throw VocabularyError(token);
        return it->second;
    }
    auto lookup = [&](std::size_t other) -> const std::string* {
        auto it = context.find({token, graph.objects[other].token});
        return it == context.end() ? nullptr : &it->second;
    };
    for (const sg::Relation& r : graph.relations) {
        if (r.subject == obj)
            if (auto s = lookup(r.object)) return *s;
        if (r.object == obj)
            if (auto s = lookup(r.subject)) return *s;
    }
    for (const sg::ObjectNode& o : graph.objects) {
        if (o.id == obj) continue;
        if (auto s = lookup(o.id)) return *s;
    }
    return h->senses[0];
}

SceneGraph TranslationRules::translate(const SceneGraph& graph) const {
    SceneGraph out = graph;
    out.language = sg::Language::target;
    auto plain = [this](const std::string& t) {
        auto it = word.find(t);
        if (it == word.end()) throw VocabularyError(t);
        return it->second;
    };
    for (std::size_t i = 0; i < graph.objects.size(); ++i) out.objects[i].token = translate_object(graph, i);
    for (sg::Relation& r : out.relations) r.predicate = plain(r.predicate);
    for (sg::Attribute& a : out.attributes) a.token = plain(a.token);
    return out;
}

Tokens TranslationRules::translate_sentence(const SceneGraph& graph) const {
    return sg::render_sentence(translate(graph), target_connective);
}

World generate_world(const WorldConfig& config) {
    config.validate();
    Rng rng(config.seed);
    World w;
    w.config = config;
    const std::size_t dim = config.embedding_dim;

    std::vector<std::string> nouns, verbs, attrs;
    for (std::size_t i = 0; i < config.n_objects; ++i) nouns.push_back(numbered('n', i));
    for (std::size_t i = 0; i < config.n_relations; ++i) verbs.push_back(numbered('v', i));
    for (std::size_t i = 0; i < config.n_attributes; ++i) attrs.push_back(numbered('a', i));

    // Nouns are dealt out as homonyms, then their context words, then fillers.
    std::vector<std::string> shuffled = nouns;
    rng.shuffle(shuffled);
    std::size_t next = 0;
    for (std::size_t h = 0; h < config.homonym_count; ++h) {
        Homonym hom;
        hom.token = shuffled[next++];
        hom.senses = {upper(hom.token) + "a", upper(hom.token) + "b"};
        w.rules.homonyms.push_back(hom);
    }
    for (Homonym& hom : w.rules.homonyms) {
        for (std::size_t s = 0; s < 2; ++s) {
            for (std::size_t c = 0; c < config.contexts_per_sense; ++c) {
                const std::string& ctx = shuffled[next++];
                hom.contexts[s].push_back(ctx);
                w.rules.context[{hom.token, ctx}] = hom.senses[s];
            }
        }
    }
    std::set<std::string> homonym_tokens, context_tokens;
    for (const Homonym& hom : w.rules.homonyms) {
        homonym_tokens.insert(hom.token);
        for (const auto& cs : hom.contexts) context_tokens.insert(cs.begin(), cs.end());
    }
    for (const std::string& n : nouns) {
        if (homonym_tokens.contains(n)) continue;
        w.plain_nouns.push_back(n);
        if (!context_tokens.contains(n)) w.neutral_nouns.push_back(n);
        w.rules.word[n] = upper(n);
    }
    for (const std::string& v : verbs) w.rules.word[v] = upper(v);
    for (const std::string& a : attrs) w.rules.word[a] = upper(a);

    w.source_grammar.language = sg::Language::source;
    w.source_grammar.nouns = {nouns.begin(), nouns.end()};
    w.source_grammar.verbs = {verbs.begin(), verbs.end()};
    w.source_grammar.attributes = {attrs.begin(), attrs.end()};
    w.source_grammar.connective = w.rules.source_connective;
    w.target_grammar.language = sg::Language::target;
    w.target_grammar.connective = w.rules.target_connective;
    for (const std::string& n : w.plain_nouns) w.target_grammar.nouns.insert(upper(n));
    for (const Homonym& hom : w.rules.homonyms) w.target_grammar.nouns.insert(hom.senses.begin(), hom.senses.end());
    for (const std::string& v : verbs) w.target_grammar.verbs.insert(upper(v));
    for (const std::string& a : attrs) w.target_grammar.attributes.insert(upper(a));
    w.source_grammar.validate();
    w.target_grammar.validate();

    // Target vectors: random unit vectors; context words and the matching
    // sense lean towards a shared per-sense domain direction.
    std::map<std::string, std::vector<double>> target_vec;
    for (const Homonym& hom : w.rules.homonyms) {
        for (std::size_t s = 0; s < 2; ++s) {
            const std::vector<double> domain = random_unit(rng, dim);
            target_vec[hom.senses[s]] = blend(random_unit(rng, dim), domain, 0.8);
            for (const std::string& ctx : hom.contexts[s]) target_vec[upper(ctx)] = blend(random_unit(rng, dim), domain, 0.8);
        }
    }
    w.space.source = emb::EmbeddingTable(dim);
    w.space.target = emb::EmbeddingTable(dim);
    for (const std::string& tok : w.target_grammar.nouns)
        if (!target_vec.contains(tok)) target_vec[tok] = random_unit(rng, dim);
    for (const std::string& tok : w.target_grammar.verbs) target_vec[tok] = random_unit(rng, dim);
    for (const std::string& tok : w.target_grammar.attributes) target_vec[tok] = random_unit(rng, dim);
    for (const auto& [tok, v] : target_vec) w.space.target.add(tok, v);

    // Source vectors sit at cosine ~0.99 to their translation.
    auto source_of = [&](const std::string& target) { return blend(target_vec.at(target), random_unit(rng, dim), 0.12); };
    for (const std::string& n : nouns) {
        const Homonym* hom = w.rules.homonym(n);
        w.space.source.add(n, source_of(hom ? hom->senses[0] : upper(n)));
    }
    for (const std::string& v : verbs) w.space.source.add(v, source_of(upper(v)));
    for (const std::string& a : attrs) w.space.source.add(a, source_of(upper(a)));
    return w;
}

namespace {

// Builds graphs clause by clause with unique object tokens.
struct GraphBuilder {
    SceneGraph g;
    std::size_t object(const std::string& token) {
        std::size_t id = g.find_object(token);
        if (id == SceneGraph::npos) {
            id = g.objects.size();
            g.objects.push_back({id, token});
        }
        return id;
    }
    void relation(const std::string& s, const std::string& verb, const std::string& o) {
        const std::size_t a = object(s), b = object(o);
        g.relations.push_back({a, verb, b});
    }
    void lone(const std::string& token) { object(token); }
};

class Sampler {
public:
    Sampler(const World& w, std::uint64_t stream) : w_(w), rng_(w.config.seed * 0x100000001b3ULL + stream * 7919 + 1) {}

    Rng& rng() { return rng_; }

    template <typename C>
    std::string pick(const C& pool, const std::set<std::string>& used) {
        std::vector<std::string> free;
        for (const auto& t : pool)
            if (!used.contains(t)) free.push_back(t);
        if (free.empty()) throw ContractError("world: ran out of distinct nouns for a sentence");
        return free[rng_.index(free.size())];
    }

    std::string verb() {
        const auto& v = w_.source_grammar.verbs;
        return *std::next(v.begin(), static_cast<long>(rng_.index(v.size())));
    }

    void add_attributes(SceneGraph& g) {
        const auto& pool = w_.source_grammar.attributes;
        for (const sg::ObjectNode& o : g.objects) {
            if (!rng_.bernoulli(w_.config.attribute_rate)) continue;
            g.attributes.push_back({o.id, *std::next(pool.begin(), static_cast<long>(rng_.index(pool.size())))});
        }
    }

    /// Clause soup over `pool`; `b` may already hold objects.
    void filler_clauses(GraphBuilder& b, std::size_t count, const std::vector<std::string>& pool, std::set<std::string>& used) {
        for (std::size_t c = 0; c < count; ++c) {
            const bool link_existing = !b.g.objects.empty() && rng_.bernoulli(0.3);
            if (rng_.bernoulli(0.75)) {
                std::string s = link_existing ? b.g.objects[rng_.index(b.g.objects.size())].token : pick(pool, used);
                used.insert(s);
                std::string o = pick(pool, used);
                used.insert(o);
                if (rng_.bernoulli(0.5)) std::swap(s, o);
                b.relation(s, verb(), o);
            } else {
                std::string s = pick(pool, used);
                used.insert(s);
                b.lone(s);
            }
        }
    }

    std::size_t clause_count() {
        const double u = rng_.uniform(0.0, 1.0);
        return u < 0.5 ? 1 : (u < 0.85 ? 2 : 3);
    }

    SceneGraph sentence_graph() {
        GraphBuilder b;
        std::set<std::string> used;
        const WorldConfig& cfg = w_.config;
        if (!w_.rules.homonyms.empty() && rng_.bernoulli(cfg.homonym_rate)) {
            const Homonym& hom = w_.rules.homonyms[rng_.index(w_.rules.homonyms.size())];
            used.insert(hom.token);
            for (const auto& cs : hom.contexts) used.insert(cs.begin(), cs.end());
            if (rng_.bernoulli(cfg.no_context_rate)) {
                if (rng_.bernoulli(0.5)) {
                    b.lone(hom.token);
                } else {
                    const std::string n = pick(w_.neutral_nouns, used);
                    used.insert(n);
                    b.relation(hom.token, verb(), n);
                }
                filler_clauses(b, rng_.index(2), w_.neutral_nouns, used);
            } else {
                const auto& contexts = hom.contexts[rng_.index(2)];
                const std::string ctx = contexts[rng_.index(contexts.size())];
                if (rng_.bernoulli(cfg.neighbor_context_rate)) {
                    if (rng_.bernoulli(0.7))
                        b.relation(hom.token, verb(), ctx);
                    else
                        b.relation(ctx, verb(), hom.token);
                    filler_clauses(b, rng_.index(2), w_.neutral_nouns, used);
                } else {
                    const std::string n1 = pick(w_.neutral_nouns, used);
                    used.insert(n1);
                    switch (rng_.index(4)) {
                        case 0:
                            b.relation(hom.token, verb(), n1);
                            b.lone(ctx);
                            break;
                        case 1: {
                            b.relation(hom.token, verb(), n1);
                            const std::string n2 = pick(w_.neutral_nouns, used);
                            used.insert(n2);
                            if (rng_.bernoulli(0.5))
                                b.relation(n2, verb(), ctx);
                            else
                                b.relation(ctx, verb(), n2);
                            break;
                        }
                        case 2:
                            b.lone(hom.token);
                            b.lone(ctx);
                            break;
                        default:
                            b.relation(n1, verb(), hom.token);
                            b.lone(ctx);
                            break;
                    }
                }
            }
        } else {
            filler_clauses(b, clause_count(), w_.plain_nouns, used);
        }
        add_attributes(b.g);
        return sg::canonicalize(b.g);
    }

    /// Paraphrases: other clause subsets of a larger scene containing `g`.
    std::vector<Tokens> paraphrases(const SceneGraph& g) {
        GraphBuilder scene;
        scene.g = g;
        std::set<std::string> used;
        for (const sg::ObjectNode& o : g.objects) used.insert(o.token);
        for (const sg::ObjectNode& o : g.objects) {
            if (const Homonym* hom = w_.rules.homonym(o.token))
                for (const auto& cs : hom->contexts) used.insert(cs.begin(), cs.end());
        }
        filler_clauses(scene, 1 + rng_.index(3), w_.neutral_nouns, used);
        add_attributes_to_new(scene.g, g.objects.size());

        // Clauses of the scene: relations, then isolated objects.
        std::vector<bool> in_rel(scene.g.objects.size(), false);
        for (const sg::Relation& r : scene.g.relations) in_rel[r.subject] = in_rel[r.object] = true;
        struct Clause {
            bool relation;
            std::size_t index;
        };
        std::vector<Clause> clauses;
        for (std::size_t r = 0; r < scene.g.relations.size(); ++r) clauses.push_back({true, r});
        for (const sg::ObjectNode& o : scene.g.objects)
            if (!in_rel[o.id]) clauses.push_back({false, o.id});

        std::vector<Tokens> out;
        for (std::size_t p = 0; p < w_.config.paraphrases_per_sentence; ++p) {
            std::vector<Clause> pick_from = clauses;
            rng_.shuffle(pick_from);
            const std::size_t k = 1 + rng_.index(std::min<std::size_t>(3, pick_from.size()));
            GraphBuilder b;
            std::vector<std::size_t> remap(scene.g.objects.size(), SceneGraph::npos);
            auto take = [&](std::size_t id) {
                if (remap[id] == SceneGraph::npos) remap[id] = b.object(scene.g.objects[id].token);
                return remap[id];
            };
            for (std::size_t c = 0; c < k; ++c) {
                if (pick_from[c].relation) {
                    const sg::Relation& r = scene.g.relations[pick_from[c].index];
                    const std::size_t s = take(r.subject), o = take(r.object);
                    b.g.relations.push_back({s, r.predicate, o});
                } else {
                    take(pick_from[c].index);
                }
            }
            for (const sg::Attribute& a : scene.g.attributes)
                if (remap[a.object] != SceneGraph::npos) b.g.attributes.push_back({remap[a.object], a.token});
            out.push_back(sg::render_sentence(sg::canonicalize(b.g), w_.rules.source_connective));
        }
        return out;
    }

private:
    void add_attributes_to_new(SceneGraph& g, std::size_t first_new) {
        const auto& pool = w_.source_grammar.attributes;
        for (std::size_t i = first_new; i < g.objects.size(); ++i) {
            if (!rng_.bernoulli(w_.config.attribute_rate)) continue;
            g.attributes.push_back({i, *std::next(pool.begin(), static_cast<long>(rng_.index(pool.size())))});
        }
    }

    const World& w_;
    Rng rng_;
};

}  // namespace

ParallelCorpus generate_parallel_corpus(const World& world, std::size_t n, std::uint64_t stream) {
    if (n == 0) throw ContractError("generate_parallel_corpus: n must be >= 1");
    Sampler sampler(world, stream);
    ParallelCorpus corpus;
    corpus.items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        CorpusItem item;
        item.graph = sampler.sentence_graph();
        item.source = sg::render_sentence(item.graph, world.rules.source_connective);
        item.target = world.rules.translate_sentence(item.graph);
        item.paraphrases = sampler.paraphrases(item.graph);
        corpus.items.push_back(std::move(item));
    }
    return corpus;
}

ImageBank generate_image_graphs(const World& world, std::size_t n, const NoiseRates& noise, std::uint64_t stream,
                                const std::set<std::string>& exclude) {
    for (double r : {noise.duplicate_triplet_rate, noise.spurious_object_rate, noise.attribute_drop_rate})
        if (!(r >= 0.0 && r <= 1.0)) throw ContractError("image noise rates must lie in [0, 1]");
    Sampler sampler(world, stream);
    Rng& rng = sampler.rng();
    ImageBank bank;
    std::size_t attempts = 0;
    while (bank.graphs.size() < n) {
        if (++attempts > 100 * n + 1000) throw ContractError("generate_image_graphs: caption space exhausted by exclusions");
        SceneGraph clean = sampler.sentence_graph();
        Tokens caption = world.rules.translate_sentence(clean);
        if (exclude.contains(join(caption))) continue;
        clean.modality = sg::Modality::image;

        SceneGraph noisy;
        noisy.language = clean.language;
        noisy.modality = sg::Modality::image;
        noisy.objects = clean.objects;
        for (const sg::Relation& r : clean.relations) {
            noisy.relations.push_back(r);
            ++bank.log.relations;
            if (rng.bernoulli(noise.duplicate_triplet_rate)) {
                noisy.relations.push_back(r);
                ++bank.log.duplicated;
            }
        }
        for (const sg::Attribute& a : clean.attributes) {
            ++bank.log.attributes;
            if (rng.bernoulli(noise.attribute_drop_rate)) {
                ++bank.log.dropped;
                continue;
            }
            noisy.attributes.push_back(a);
        }
        ++bank.log.graphs;
        if (rng.bernoulli(noise.spurious_object_rate)) {
            std::set<std::string> used;
            for (const sg::ObjectNode& o : clean.objects) used.insert(o.token);
            std::vector<std::string> pool;
            for (const std::string& t : world.neutral_nouns)
                if (!used.contains(t)) pool.push_back(t);
            if (!pool.empty()) {
                noisy.objects.push_back({noisy.objects.size(), pool[rng.index(pool.size())]});
                ++bank.log.spurious;
            }
        }
        bank.clean.push_back(std::move(clean));
        bank.graphs.push_back(std::move(noisy));
        bank.hidden_captions.push_back(std::move(caption));
    }
    return bank;
}

num::Tensor Distortion::apply(const num::Tensor& features) const {
    if (features.rows() == 0) return features;
    return num::add(num::matmul(features, matrix), bias);
}

Distortion make_distortion(const WorldConfig& config, std::size_t dim) {
    Rng rng(config.seed ^ 0xd15707710ULL);
    std::vector<double> a(dim * dim), b(dim);
    const double s = config.distortion_scale / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) a[i * dim + j] = (i == j ? 1.0 : 0.0) + s * rng.normal();
    for (double& v : b) v = config.distortion_bias * rng.normal();
    return {num::Tensor::from(dim, dim, std::move(a)), num::Tensor::from(1, dim, std::move(b))};
}

std::string join(const Tokens& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

namespace {

nlohmann::ordered_json config_json(const WorldConfig& c) {
    return {{"seed", c.seed},
            {"n_objects", c.n_objects},
            {"n_relations", c.n_relations},
            {"n_attributes", c.n_attributes},
            {"homonym_count", c.homonym_count},
            {"contexts_per_sense", c.contexts_per_sense},
            {"paraphrases_per_sentence", c.paraphrases_per_sentence},
            {"embedding_dim", c.embedding_dim},
            {"homonym_rate", c.homonym_rate},
            {"neighbor_context_rate", c.neighbor_context_rate},
            {"no_context_rate", c.no_context_rate},
            {"attribute_rate", c.attribute_rate},
            {"duplicate_triplet_rate", c.noise.duplicate_triplet_rate},
            {"spurious_object_rate", c.noise.spurious_object_rate},
            {"attribute_drop_rate", c.noise.attribute_drop_rate},
            {"distortion_scale", c.distortion_scale},
            {"distortion_bias", c.distortion_bias}};
}

}  // namespace

void write_world_manifest(const std::filesystem::path& path, const World& world) {
    nlohmann::ordered_json doc;
    doc["format"] = "unison-world/1";
    doc["config"] = config_json(world.config);
    doc["source_connective"] = world.rules.source_connective;
    doc["target_connective"] = world.rules.target_connective;
    doc["word"] = world.rules.word;
    auto& homs = doc["homonyms"] = nlohmann::ordered_json::array();
    for (const Homonym& h : world.rules.homonyms)
        homs.push_back({{"token", h.token}, {"senses", h.senses}, {"contexts", h.contexts}});
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing", path.string());
    out << doc.dump(2) << '\n';
}

World load_world(const std::filesystem::path& dir) {
    const std::filesystem::path manifest = dir / "world.json";
    std::ifstream in(manifest);
    if (!in) throw FormatError("cannot open world manifest", manifest.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid world manifest: ") + e.what(), manifest.string());
    }
    WorldConfig c;
    try {
        const auto& j = doc.at("config");
        c.seed = j.at("seed").get<std::uint64_t>();
        c.n_objects = j.at("n_objects").get<std::size_t>();
        c.n_relations = j.at("n_relations").get<std::size_t>();
        c.n_attributes = j.at("n_attributes").get<std::size_t>();
        c.homonym_count = j.at("homonym_count").get<std::size_t>();
        c.contexts_per_sense = j.at("contexts_per_sense").get<std::size_t>();
        c.paraphrases_per_sentence = j.at("paraphrases_per_sentence").get<std::size_t>();
        c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        c.homonym_rate = j.at("homonym_rate").get<double>();
        c.neighbor_context_rate = j.at("neighbor_context_rate").get<double>();
        c.no_context_rate = j.at("no_context_rate").get<double>();
        c.attribute_rate = j.at("attribute_rate").get<double>();
        c.noise.duplicate_triplet_rate = j.at("duplicate_triplet_rate").get<double>();
        c.noise.spurious_object_rate = j.at("spurious_object_rate").get<double>();
        c.noise.attribute_drop_rate = j.at("attribute_drop_rate").get<double>();
        c.distortion_scale = j.at("distortion_scale").get<double>();
        c.distortion_bias = j.at("distortion_bias").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad world config: ") + e.what(), manifest.string());
    }
    // Vocabularies and rules are a pure function of the config; the tables on
    // disk replace the generated ones so edited embeddings take effect.
    World w = generate_world(c);
    w.space.source = emb::load_text_embeddings(dir / "source.vec");
    w.space.target = emb::load_text_embeddings(dir / "target.vec");
    w.space.validate();
    if (w.space.source.dim() != w.space.target.dim()) throw FormatError("source and target embedding widths differ", dir.string());
    return w;
}

}  // namespace unison::world
