// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "unison/errors.hpp"
#include "unison/rng.hpp"
#include "unison/scenegraph.hpp"
#include "unison/synthworld.hpp"

using namespace unison;
using namespace unison::sg;

namespace {

ToyGrammar pets() {
    ToyGrammar g;
    g.nouns = {"cat", "dog", "mat", "bird"};
    g.verbs = {"chases", "on", "sees"};
    g.attributes = {"red", "small", "old"};
    g.validate();
    return g;
}

SceneGraph random_graph(Rng& rng) {
    static const std::vector<std::string> nouns = {"cat", "dog", "mat", "bird", "tree", "car"};
    static const std::vector<std::string> verbs = {"on", "near", "holds"};
    static const std::vector<std::string> attrs = {"red", "big", "old"};
    SceneGraph g;
    g.language = rng.bernoulli(0.5) ? Language::source : Language::target;
    g.modality = rng.bernoulli(0.5) ? Modality::sentence : Modality::image;
    std::vector<std::string> pool = nouns;
    rng.shuffle(pool);
    const std::size_t n = rng.index(pool.size() + 1);
    for (std::size_t i = 0; i < n; ++i) g.objects.push_back({i, pool[i]});
    if (n >= 2) {
        const std::size_t r = rng.index(5);
        for (std::size_t k = 0; k < r; ++k) {
            std::size_t a = rng.index(n), b = rng.index(n - 1);
            if (b >= a) ++b;
            g.relations.push_back({a, verbs[rng.index(verbs.size())], b});
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (rng.bernoulli(0.4)) g.attributes.push_back({i, attrs[rng.index(attrs.size())]});
    return g;
}

std::size_t union_object_count(const std::vector<SceneGraph>& graphs) {
    std::set<std::string> all;
    for (const SceneGraph& g : graphs)
        for (const ObjectNode& o : g.objects) all.insert(o.token);
    return all.size();
}

}  // namespace

TEST_CASE("parse_sentence builds the graph of a clause", "[scenegraph]") {
    const SceneGraph g = parse_sentence({"red", "cat", "chases", "dog"}, pets());
    REQUIRE(g.objects.size() == 2);
    CHECK(g.objects[0].token == "cat");
    CHECK(g.objects[1].token == "dog");
    REQUIRE(g.relations.size() == 1);
    CHECK(g.triplet(0) == TokenTriple{"cat", "chases", "dog"});
    REQUIRE(g.attributes.size() == 1);
    CHECK(g.attributes[0] == Attribute{0, "red"});

    const SceneGraph single = parse_sentence({"cat"}, pets());
    CHECK(single.objects.size() == 1);
    CHECK(single.relations.empty());
    CHECK(single.attributes.empty());
}

TEST_CASE("parse_sentence merges repeated nouns and joins clauses", "[scenegraph]") {
    const SceneGraph g =
        parse_sentence({"cat", "chases", "small", "dog", "and", "old", "dog", "on", "mat", "and", "bird"}, pets());
    REQUIRE(g.objects.size() == 4);
    CHECK(g.relations.size() == 2);
    CHECK(g.triplet(1) == TokenTriple{"dog", "on", "mat"});
    CHECK(g.attribute_pairs() == std::set<std::pair<std::string, std::string>>{{"dog", "small"}, {"dog", "old"}});
}

TEST_CASE("parse errors carry token positions", "[scenegraph]") {
    auto position = [](const Tokens& s) {
        try {
            parse_sentence(s, pets());
        } catch (const ParseError& e) {
            return static_cast<long>(e.position());
        }
        return -1L;
    };
    CHECK(position({"cat", "flies", "dog"}) == 1);
    CHECK(position({"cat", "chases"}) == 2);
    CHECK(position({"chases", "cat"}) == 0);
    CHECK(position({"cat", "dog"}) == 1);
    CHECK(position({"cat", "and"}) == 1);
    CHECK(position({"cat", "chases", "cat"}) == 2);
    CHECK(position({}) == 0);
}

TEST_CASE("render and parse round-trip canonical graphs", "[scenegraph]") {
    Rng rng(11);
    ToyGrammar g;
    g.nouns = {"cat", "dog", "mat", "bird", "tree", "car"};
    g.verbs = {"on", "near", "holds"};
    g.attributes = {"red", "big", "old"};
    for (int i = 0; i < 500; ++i) {
        SceneGraph graph = random_graph(rng);
        if (graph.objects.empty()) continue;
        graph.language = Language::source;
        graph.modality = Modality::sentence;
        const SceneGraph canon = canonicalize(graph);
        CHECK(parse_sentence(render_sentence(canon), g) == canon);
        CHECK(canon.relation_triples() == graph.relation_triples());
        CHECK(canon.attribute_pairs() == graph.attribute_pairs());
    }
}

TEST_CASE("merge_graphs is a token-level set union", "[scenegraph]") {
    const ToyGrammar g = pets();
    const SceneGraph cat = parse_sentence({"cat"}, g);
    const SceneGraph cat_dog = parse_sentence({"cat", "chases", "dog"}, g);
    const SceneGraph merged = merge_graphs({cat, cat_dog});
    CHECK(merged.object_tokens() == std::set<std::string>{"cat", "dog"});
    CHECK(merge_graphs({cat_dog, cat_dog}) == cat_dog);

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        SceneGraph a = random_graph(rng), b = random_graph(rng), c = random_graph(rng);
        a.language = b.language = c.language = Language::source;
        const SceneGraph ab = merge_graphs({a, b}), ba = merge_graphs({b, a});
        CHECK(ab.relation_triples() == ba.relation_triples());
        CHECK(ab.attribute_pairs() == ba.attribute_pairs());
        CHECK(ab.object_tokens() == ba.object_tokens());
        const SceneGraph left = merge_graphs({merge_graphs({a, b}), c});
        const SceneGraph right = merge_graphs({a, merge_graphs({b, c})});
        CHECK(left.relation_triples() == right.relation_triples());
        CHECK(left.object_tokens() == right.object_tokens());
        CHECK(left.attribute_pairs() == right.attribute_pairs());
        const SceneGraph aa = merge_graphs({a, a});
        CHECK(aa.relation_triples() == a.relation_triples());
        CHECK(aa.object_tokens() == a.object_tokens());
        CHECK(ab.objects.size() >= std::max(a.objects.size(), b.objects.size()));
        ab.validate();
    }
}

TEST_CASE("merging paraphrase graphs matches a brute-force union", "[scenegraph]") {
    world::WorldConfig cfg;
    cfg.paraphrases_per_sentence = 4;
    const world::World w = world::generate_world(cfg);
    const world::ParallelCorpus corpus = world::generate_parallel_corpus(w, 50, 3);
    for (const world::CorpusItem& item : corpus.items) {
        std::vector<SceneGraph> graphs = {item.graph};
        for (const Tokens& p : item.paraphrases) graphs.push_back(parse_sentence(p, w.source_grammar));
        REQUIRE(graphs.size() == 5);
        const SceneGraph merged = merge_graphs(graphs);
        CHECK(merged.objects.size() == union_object_count(graphs));
        std::set<TokenTriple> triples;
        for (const SceneGraph& g : graphs) {
            auto t = g.relation_triples();
            triples.insert(t.begin(), t.end());
        }
        CHECK(merged.relation_triples() == triples);
        CHECK(merged.relations.size() == triples.size());
    }
}

TEST_CASE("merge_graphs rejects mixed languages", "[scenegraph]") {
    SceneGraph a = parse_sentence({"cat"}, pets());
    SceneGraph b = a;
    b.language = Language::target;
    CHECK_THROWS_AS(merge_graphs({a, b}), ContractError);
    CHECK_THROWS_AS(merge_graphs({}), ContractError);
}

TEST_CASE("graph_stats buckets object counts", "[scenegraph]") {
    std::vector<SceneGraph> corpus(4);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t k = 0; k < i; ++k) corpus[i].objects.push_back({k, "n" + std::to_string(k)});
    ObjectHistogram h = graph_stats(corpus);
    for (double f : h.fractions) CHECK(f == 0.25);

    h = graph_stats(std::vector<SceneGraph>(3));
    CHECK(h.fractions == std::array<double, 4>{1.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(graph_stats({}), ContractError);

    Rng rng(2);
    std::vector<SceneGraph> random;
    for (int i = 0; i < 77; ++i) random.push_back(random_graph(rng));
    h = graph_stats(random);
    CHECK(h.fractions[0] + h.fractions[1] + h.fractions[2] + h.fractions[3] == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("serialize round-trips and keeps a stable layout", "[scenegraph]") {
    CHECK(serialize(SceneGraph{}) ==
          R"({"language":"source","modality":"sentence","objects":[],"relations":[],"attributes":[]})");
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const SceneGraph g = random_graph(rng);
        const std::string text = serialize(g);
        const SceneGraph back = deserialize(text);
        CHECK(back == g);
        CHECK(serialize(back) == text);
    }
}

TEST_CASE("hand-written document deserializes to the expected graph", "[scenegraph]") {
    const std::string doc = R"({
      "language": "target", "modality": "image",
      "objects": [{"id": 0, "token": "CAT"}, {"id": 1, "token": "MAT"}],
      "relations": [{"sub": 0, "pred": "ON", "obj": 1}],
      "attributes": [{"obj": 0, "attr": "RED"}, {"obj": 1, "attr": "OLD"}]
    })";
    SceneGraph expected;
    expected.language = Language::target;
    expected.modality = Modality::image;
    expected.objects = {{0, "CAT"}, {1, "MAT"}};
    expected.relations = {{0, "ON", 1}};
    expected.attributes = {{0, "RED"}, {1, "OLD"}};
    CHECK(deserialize(doc) == expected);
}

TEST_CASE("schema violations name the JSON pointer", "[scenegraph]") {
    auto location = [](const std::string& doc) {
        try {
            deserialize(doc);
        } catch (const FormatError& e) {
            return e.location();
        }
        return std::string("no error");
    };
    const std::string head = R"({"language":"source","modality":"sentence",)";
    CHECK(location(head + R"("objects":[{"id":0,"token":"a"}],"relations":[{"sub":0,"pred":"p","obj":3}],"attributes":[]})") ==
          "/relations/0/obj");
    CHECK(location(head + R"("objects":[{"id":0}],"relations":[],"attributes":[]})") == "/objects/0/token");
    CHECK(location(head + R"("objects":[{"id":1,"token":"a"}],"relations":[],"attributes":[]})") == "/objects/0/id");
    CHECK(location(head + R"("objects":[],"relations":[]})") == "/attributes");
    CHECK(location(R"({"language":"klingon","modality":"sentence","objects":[],"relations":[],"attributes":[]})") ==
          "/language");
    CHECK(location(head + R"("objects":[{"id":0,"token":"a"}],"relations":[{"sub":0,"pred":"p","obj":0}],"attributes":[]})") ==
          "/relations/0");
    CHECK(location(head + R"("objects":[{"id":0,"token":"a"}],"relations":[],"attributes":[{"obj":-1,"attr":"x"}]})") ==
          "/attributes/0/obj");
    CHECK(location("{not json") == "/");
}

TEST_CASE("JSON-lines files round-trip and report line numbers", "[scenegraph]") {
    const auto dir = std::filesystem::temp_directory_path() / "unison_sg_test";
    std::filesystem::create_directories(dir);
    Rng rng(4);
    std::vector<SceneGraph> graphs;
    for (int i = 0; i < 20; ++i) graphs.push_back(random_graph(rng));
    write_jsonl(dir / "g.jsonl", graphs);
    CHECK(read_jsonl(dir / "g.jsonl") == graphs);

    {
        std::ofstream out(dir / "bad.jsonl");
        out << serialize(graphs[0]) << "\n" << R"({"language":"source"})" << "\n";
    }
    try {
        read_jsonl(dir / "bad.jsonl");
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
        CHECK(std::string(e.what()).find("/modality") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
