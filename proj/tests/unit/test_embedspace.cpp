// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "unison/embedspace.hpp"
#include "unison/errors.hpp"

using namespace unison;
using namespace unison::emb;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "unison_emb_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string format_error_location(const std::string& text) {
    const auto p = scratch("bad.vec");
    write_file(p, text);
    try {
        load_text_embeddings(p);
    } catch (const FormatError& e) {
        return e.location();
    }
    return "no error";
}

EmbeddingTable random_table(Rng& rng, std::size_t n, std::size_t dim) {
    EmbeddingTable t(dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        t.add("w" + std::to_string(1000 + rng.index(9000)) + "_" + std::to_string(i), v);
    }
    return t;
}

// Independent scan over raw vectors.
std::string brute_force(const std::vector<double>& q, const EmbeddingTable& t) {
    std::string best;
    double best_sim = -2.0;
    double qn = 0.0;
    for (double v : q) qn += v * v;
    for (std::size_t i = 0; i < t.size(); ++i) {
        auto v = t.vector(i);
        double dot = 0.0, vn = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) {
            dot += q[k] * v[k];
            vn += v[k] * v[k];
        }
        const double sim = dot / std::sqrt(qn * vn);
        if (sim > best_sim + 1e-12 || (std::abs(sim - best_sim) <= 1e-12 && t.token(i) < best)) {
            best_sim = sim;
            best = t.token(i);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("text embeddings load from a fixture", "[embedspace]") {
    const auto p = scratch("two.vec");
    write_file(p, "2 3\ncat 1 0 0.5\ndog -1 2 3\n");
    const EmbeddingTable t = load_text_embeddings(p);
    REQUIRE(t.size() == 2);
    REQUIRE(t.dim() == 3);
    CHECK(std::vector<double>(t.vector("cat").begin(), t.vector("cat").end()) == std::vector<double>{1, 0, 0.5});
    CHECK(std::vector<double>(t.vector("dog").begin(), t.vector("dog").end()) == std::vector<double>{-1, 2, 3});
    double norm = 0.0;
    for (double v : t.unit(1)) norm += v * v;
    CHECK(std::sqrt(norm) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("malformed embedding files report line numbers", "[embedspace]") {
    const std::string base = scratch("bad.vec").string();
    CHECK(format_error_location("") == base + ":1");
    CHECK(format_error_location("2\ncat 1 2\n") == base + ":1");
    CHECK(format_error_location("2 2\ncat 1 2\ndog 1\n") == base + ":3");
    CHECK(format_error_location("2 2\ncat 1 2 3\ndog 1 1\n") == base + ":2");
    CHECK(format_error_location("2 2\ncat 1 2\ncat 3 4\n") == base + ":3");
    CHECK(format_error_location("3 2\ncat 1 2\ndog 3 4\n") == base + ":3");
    CHECK(format_error_location("1 2\ncat 1 x\n") == base + ":2");
}

TEST_CASE("saved tables reload identically", "[embedspace]") {
    Rng rng(3);
    const EmbeddingTable t = random_table(rng, 40, 7);
    const auto p = scratch("rt.vec");
    save_text_embeddings(p, t);
    CHECK(load_text_embeddings(p) == t);
}

TEST_CASE("retrieval edge cases", "[embedspace]") {
    EmbeddingTable t(3);
    t.add("b", std::vector<double>{1, 0, 0});
    t.add("a", std::vector<double>{0, 1, 0});
    t.add("c", std::vector<double>{0, 2, 0});

    const Retrieval self = retrieve_nearest(std::vector<double>{1, 0, 0}, t);
    CHECK(self.token == "b");
    CHECK(self.similarity == 1.0);

    const Retrieval ortho = retrieve_nearest(std::vector<double>{0, 0, 5}, t);
    CHECK(ortho.similarity == 0.0);
    CHECK(ortho.token == "a");

    // "a" and "c" are parallel: tie goes to "a".
    CHECK(retrieve_nearest(std::vector<double>{0, 3, 0}, t).token == "a");

    CHECK_THROWS_AS(retrieve_nearest(std::vector<double>{0, 0, 0}, t), ContractError);
    CHECK_THROWS_AS(retrieve_nearest(std::vector<double>{1, 0}, t), DimensionError);
    CHECK_THROWS_AS(t.add("a", std::vector<double>{1, 1, 1}), ContractError);
    CHECK_THROWS_AS(t.index_of("zebra"), VocabularyError);
}

TEST_CASE("retrieval matches an exhaustive scan and is scale invariant", "[embedspace]") {
    Rng rng(17);
    const EmbeddingTable t = random_table(rng, 50, 6);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> q(6);
        for (double& x : q) x = rng.normal();
        const Retrieval r = retrieve_nearest(q, t);
        CHECK(r.token == brute_force(q, t));
        const double c = rng.uniform(0.01, 100.0);
        std::vector<double> scaled = q;
        for (double& x : scaled) x *= c;
        CHECK(retrieve_nearest(scaled, t).token == r.token);
    }
}

TEST_CASE("word mapper is retrieval followed by an affine layer", "[embedspace]") {
    Rng rng(8);
    CrossLingualSpace space;
    space.source = random_table(rng, 10, 4);
    space.target = random_table(rng, 12, 4);
    const std::vector<std::string> tokens = {space.source.token(3), space.source.token(7)};

    WordMapper identity(4, 4, rng);
    std::fill(identity.affine.weight.mutable_data().begin(), identity.affine.weight.mutable_data().end(), 0.0);
    for (std::size_t i = 0; i < 4; ++i) identity.affine.weight.mutable_data()[i * 4 + i] = 1.0;
    std::fill(identity.affine.bias.mutable_data().begin(), identity.affine.bias.mutable_data().end(), 0.0);
    {
        // A query equal to a stored target vector comes back unchanged.
        CrossLingualSpace same;
        same.source = space.target;
        same.target = space.target;
        const num::Tensor out = identity({space.target.token(5)}, same);
        auto v = space.target.vector(5);
        for (std::size_t k = 0; k < 4; ++k) CHECK(out.at(0, k) == Catch::Approx(v[k]).margin(1e-6));
    }

    WordMapper zero(4, 6, rng);
    std::fill(zero.affine.weight.mutable_data().begin(), zero.affine.weight.mutable_data().end(), 0.0);
    std::fill(zero.affine.bias.mutable_data().begin(), zero.affine.bias.mutable_data().end(), 0.0);
    for (double v : zero(tokens, space).data()) CHECK(v == 0.0);

    num::PrecisionScope f64(num::Precision::f64);
    WordMapper mapper(4, 5, rng);
    const num::Tensor out = mapper(tokens, space);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
        const Retrieval hit = retrieve_nearest(space.source.vector(tokens[r]), space.target);
        auto e = space.target.vector(hit.index);
        for (std::size_t c = 0; c < 5; ++c) {
            double expected = mapper.affine.bias.at(0, c);
            for (std::size_t k = 0; k < 4; ++k) expected += e[k] * mapper.affine.weight.at(k, c);
            CHECK(out.at(r, c) == Catch::Approx(expected).margin(1e-12));
        }
    }
}
