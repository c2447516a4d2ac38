// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "unison/errors.hpp"
#include "unison/synthworld.hpp"

using namespace unison;
using namespace unison::world;

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("worlds are a pure function of the seed", "[synthworld]") {
    WorldConfig cfg;
    const World a = generate_world(cfg), b = generate_world(cfg);
    CHECK(a.space.source == b.space.source);
    CHECK(a.space.target == b.space.target);
    CHECK(a.rules.word == b.rules.word);
    CHECK(a.rules.context == b.rules.context);
    const ParallelCorpus ca = generate_parallel_corpus(a, 30, 1), cb = generate_parallel_corpus(b, 30, 1);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(ca.items[i].source == cb.items[i].source);
        CHECK(ca.items[i].target == cb.items[i].target);
        CHECK(ca.items[i].paraphrases == cb.items[i].paraphrases);
    }
    cfg.seed = 8;
    CHECK_FALSE(generate_world(cfg).space.source == a.space.source);
}

TEST_CASE("world config is validated", "[synthworld]") {
    WorldConfig cfg;
    cfg.homonym_count = cfg.n_objects;
    CHECK_THROWS_AS(generate_world(cfg), ContractError);
    cfg = WorldConfig{};
    cfg.noise.attribute_drop_rate = 1.5;
    CHECK_THROWS_AS(generate_world(cfg), ContractError);
    cfg = WorldConfig{};
    cfg.n_relations = 1;
    CHECK_THROWS_AS(generate_world(cfg), ContractError);
}

TEST_CASE("word-level retrieval is right for plain words and fixed for homonyms", "[synthworld]") {
    const World w = generate_world(WorldConfig{});
    const auto& src = w.space.source;
    const auto& tgt = w.space.target;
    for (const auto& [s, t] : w.rules.word) {
        CHECK(emb::retrieve_nearest(src.vector(s), tgt).token == t);
        const double pair = cosine(src.vector(s), tgt.vector(t));
        for (std::size_t j = 0; j < tgt.size(); ++j) {
            if (tgt.token(j) == t) continue;
            CHECK(cosine(src.vector(s), tgt.vector(j)) < pair);
        }
    }
    REQUIRE(w.rules.homonyms.size() == 10);
    for (const Homonym& h : w.rules.homonyms) {
        CHECK(emb::retrieve_nearest(src.vector(h.token), tgt).token == h.senses[0]);
        CHECK(h.senses[0] != h.senses[1]);
        CHECK(h.contexts[0].size() >= 1);
        CHECK(h.contexts[1].size() >= 1);
    }
}

TEST_CASE("without homonyms the target is a word-by-word translation", "[synthworld]") {
    WorldConfig cfg;
    cfg.homonym_count = 0;
    const World w = generate_world(cfg);
    const ParallelCorpus c = generate_parallel_corpus(w, 1, 0);
    const auto& item = c.items[0];
    REQUIRE(item.source.size() == item.target.size());
    for (std::size_t i = 0; i < item.source.size(); ++i) {
        const std::string expected = item.source[i] == "and" ? "AND" : w.rules.word.at(item.source[i]);
        CHECK(item.target[i] == expected);
    }
}

TEST_CASE("context rules pick the homonym sense", "[synthworld]") {
    const World w = generate_world(WorldConfig{});
    const Homonym& h = w.rules.homonyms[0];
    const std::string verb = *w.source_grammar.verbs.begin();
    for (std::size_t s = 0; s < 2; ++s) {
        const sg::SceneGraph g = sg::parse_sentence({h.token, verb, h.contexts[s][0]}, w.source_grammar);
        const sg::Tokens t = w.rules.translate_sentence(g);
        CHECK(t[0] == h.senses[s]);
    }
    // A direct neighbour outranks a distant context word.
    const sg::SceneGraph mixed = sg::parse_sentence(
        {h.token, verb, h.contexts[1][0], "and", h.contexts[0][0]}, w.source_grammar);
    CHECK(w.rules.translate_sentence(mixed)[0] == h.senses[1]);
    const sg::SceneGraph distant =
        sg::parse_sentence({h.token, "and", h.contexts[1][0]}, w.source_grammar);
    CHECK(w.rules.translate_sentence(distant)[0] == h.senses[1]);
    const sg::SceneGraph none = sg::parse_sentence({h.token}, w.source_grammar);
    CHECK(w.rules.translate_sentence(none)[0] == h.senses[0]);
}

TEST_CASE("corpus sentences parse back to their generator graphs", "[synthworld]") {
    const World w = generate_world(WorldConfig{});
    const ParallelCorpus c = generate_parallel_corpus(w, 500, 2);
    std::vector<sg::SceneGraph> single, merged;
    for (const CorpusItem& item : c.items) {
        CHECK(sg::parse_sentence(item.source, w.source_grammar) == item.graph);
        CHECK(sg::parse_sentence(item.target, w.target_grammar) == w.rules.translate(item.graph));
        CHECK(item.source.size() <= 16);
        std::vector<sg::SceneGraph> group = {item.graph};
        for (const sg::Tokens& p : item.paraphrases) group.push_back(sg::parse_sentence(p, w.source_grammar));
        single.push_back(item.graph);
        merged.push_back(sg::merge_graphs(group));
    }
    CHECK(sg::graph_stats(merged).at_least_three() > sg::graph_stats(single).at_least_three());
}

TEST_CASE("word-level translation errs exactly on context-selected senses", "[synthworld]") {
    const World w = generate_world(WorldConfig{});
    const ParallelCorpus c = generate_parallel_corpus(w, 1000, 4);
    std::size_t homonym_tokens = 0, word_level_errors = 0;
    for (const CorpusItem& item : c.items) {
        for (std::size_t i = 0; i < item.source.size(); ++i) {
            const Homonym* h = w.rules.homonym(item.source[i]);
            if (h == nullptr) continue;
            ++homonym_tokens;
            const std::string word_level = w.space.translate(item.source[i]).token;
            if (word_level != item.target[i]) {
                ++word_level_errors;
                CHECK(item.target[i] == h->senses[1]);
            }
        }
    }
    REQUIRE(homonym_tokens > 300);
    const double rate = static_cast<double>(word_level_errors) / static_cast<double>(homonym_tokens);
    CHECK(rate > 0.3);
    CHECK(rate < 0.5);
}

TEST_CASE("image noise follows its rates", "[synthworld]") {
    const World w = generate_world(WorldConfig{});
    const ImageBank clean = generate_image_graphs(w, 200, NoiseRates{0.0, 0.0, 0.0}, 5);
    for (std::size_t i = 0; i < clean.graphs.size(); ++i) {
        CHECK(clean.graphs[i] == clean.clean[i]);
        CHECK(clean.graphs[i].modality == sg::Modality::image);
    }

    const ImageBank dup = generate_image_graphs(w, 200, NoiseRates{1.0, 0.0, 0.0}, 5);
    for (std::size_t i = 0; i < dup.graphs.size(); ++i) {
        CHECK(dup.graphs[i].relations.size() == 2 * dup.clean[i].relations.size());
        for (std::size_t r = 0; r < dup.clean[i].relations.size(); ++r) {
            const auto t = dup.clean[i].triplet(r);
            std::size_t seen = 0;
            for (std::size_t k = 0; k < dup.graphs[i].relations.size(); ++k) seen += dup.graphs[i].triplet(k) == t;
            CHECK(seen >= 2);
        }
    }

    const ImageBank noisy = generate_image_graphs(w, 1000, NoiseRates{0.3, 0.2, 0.2}, 6);
    const NoiseLog& log = noisy.log;
    CHECK(static_cast<double>(log.duplicated) / log.relations == Catch::Approx(0.3).margin(0.03));
    CHECK(static_cast<double>(log.spurious) / log.graphs == Catch::Approx(0.2).margin(0.03));
    CHECK(static_cast<double>(log.dropped) / log.attributes == Catch::Approx(0.2).margin(0.03));
}

TEST_CASE("hidden captions stay out of the training corpus", "[synthworld]") {
    const World w = generate_world(WorldConfig{});
    const ParallelCorpus train = generate_parallel_corpus(w, 2000, 1);
    std::set<std::string> seen;
    for (const CorpusItem& item : train.items) seen.insert(join(item.target));
    const ImageBank bank = generate_image_graphs(w, 300, NoiseRates{}, 9, seen);
    for (const sg::Tokens& cap : bank.hidden_captions) CHECK_FALSE(seen.contains(join(cap)));
}

TEST_CASE("distortion is a fixed affine map", "[synthworld]") {
    WorldConfig cfg;
    const Distortion d = make_distortion(cfg, 5);
    const Distortion again = make_distortion(cfg, 5);
    CHECK(std::vector<double>(d.matrix.data().begin(), d.matrix.data().end()) ==
          std::vector<double>(again.matrix.data().begin(), again.matrix.data().end()));
    cfg.distortion_scale = 0.0;
    cfg.distortion_bias = 0.0;
    const Distortion id = make_distortion(cfg, 3);
    const num::Tensor x = num::Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
    const num::Tensor y = id.apply(x);
    for (std::size_t i = 0; i < 6; ++i) CHECK(y.data()[i] == x.data()[i]);
}
