// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "unison/errors.hpp"
#include "unison/metrics.hpp"
#include "unison/rng.hpp"

using namespace unison;
using namespace unison::metrics;
using Catch::Approx;

namespace {

Sentence words(const std::string& s) {
    Sentence out;
    std::size_t i = 0;
    while (i < s.size()) {
        const std::size_t j = std::min(s.find(' ', i), s.size());
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j + 1;
    }
    return out;
}

// Brute-force oracles: n-grams as token vectors, counted by linear scans.

std::vector<Sentence> grams(const Sentence& s, std::size_t n) {
    std::vector<Sentence> out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) out.emplace_back(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n));
    return out;
}

std::size_t occurrences(const std::vector<Sentence>& list, const Sentence& g) {
    return static_cast<std::size_t>(std::count(list.begin(), list.end(), g));
}

double naive_bleu(const std::vector<Sentence>& cands, const References& refs, std::size_t n) {
    double log_sum = 0.0;
    std::size_t c = 0, r = 0;
    std::vector<double> matched(n, 0.0), total(n, 0.0);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        for (std::size_t k = 1; k <= n; ++k) {
            const auto cg = grams(cands[i], k);
            std::set<Sentence> distinct(cg.begin(), cg.end());
            for (const Sentence& g : distinct) {
                std::size_t best = 0;
                for (const Sentence& ref : refs[i]) best = std::max(best, occurrences(grams(ref, k), g));
                matched[k - 1] += static_cast<double>(std::min(occurrences(cg, g), best));
            }
            total[k - 1] += static_cast<double>(cg.size());
        }
        c += cands[i].size();
        std::size_t closest = refs[i][0].size();
        for (const Sentence& ref : refs[i]) {
            const long d = std::labs(static_cast<long>(ref.size()) - static_cast<long>(cands[i].size()));
            const long dc = std::labs(static_cast<long>(closest) - static_cast<long>(cands[i].size()));
            if (d < dc || (d == dc && ref.size() < closest)) closest = ref.size();
        }
        r += closest;
    }
    if (c == 0) return 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double p = total[k] > 0 ? matched[k] / total[k] : 0.0;
        log_sum += std::log(p > 0 ? p : 1e-9);
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_sum / static_cast<double>(n));
}

double naive_cider(const std::vector<Sentence>& cands, const References& refs) {
    const double sets = static_cast<double>(refs.size());
    double corpus = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        double per = 0.0;
        for (std::size_t n = 1; n <= 4; ++n) {
            auto tfidf = [&](const Sentence& s) {
                std::map<Sentence, double> v;
                const auto g = grams(s, n);
                for (const Sentence& x : g) {
                    double df = 0.0;
                    for (const auto& set : refs) {
                        bool in = false;
                        for (const Sentence& ref : set) in = in || occurrences(grams(ref, n), x) > 0;
                        df += in ? 1.0 : 0.0;
                    }
                    v[x] = static_cast<double>(occurrences(g, x)) * std::log(sets / std::max(1.0, df));
                }
                return v;
            };
            const auto cv = tfidf(cands[i]);
            double sum = 0.0;
            for (const Sentence& ref : refs[i]) {
                const auto rv = tfidf(ref);
                double dot = 0.0, cn = 0.0, rn = 0.0;
                for (const auto& [g, x] : cv) {
                    cn += x * x;
                    if (rv.count(g)) dot += x * rv.at(g);
                }
                for (const auto& [g, x] : rv) rn += x * x;
                if (cn > 0 && rn > 0) sum += dot / std::sqrt(cn * rn);
            }
            per += sum / static_cast<double>(refs[i].size());
        }
        corpus += 10.0 * per / 4.0;
    }
    return corpus / static_cast<double>(cands.size());
}

Sentence random_sentence(Rng& rng, std::size_t vocab, std::size_t max_len) {
    Sentence s(1 + rng.index(max_len));
    for (auto& w : s) w = "w" + std::to_string(rng.index(vocab));
    return s;
}

}  // namespace

TEST_CASE("BLEU", "[metrics]") {
    const Sentence ref = words("the cat is on the mat");
    for (std::size_t n = 1; n <= 4; ++n) CHECK(bleu({ref}, {{ref}}, n) == Approx(1.0).epsilon(1e-15));

    const Sentence sevens = words("the the the the the the the");
    const ClippedCount cc = clipped_ngrams(sevens, {ref}, 1);
    CHECK(cc.matched == 2);
    CHECK(cc.total == 7);
    CHECK(bleu({sevens}, {{ref}}, 1) == Approx(2.0 / 7.0).epsilon(1e-14));

    // brevity penalty: 3 candidate words against a 6-word reference
    CHECK(bleu({words("the cat is")}, {{ref}}, 1) == Approx(std::exp(1.0 - 2.0)).epsilon(1e-14));

    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<Sentence> cands;
        References refs;
        const std::size_t m = 1 + rng.index(6);
        for (std::size_t i = 0; i < m; ++i) {
            cands.push_back(random_sentence(rng, 5, 9));
            refs.emplace_back();
            for (std::size_t k = 0, nr = 1 + rng.index(3); k < nr; ++k) refs.back().push_back(random_sentence(rng, 5, 9));
        }
        for (std::size_t n = 1; n <= 4; ++n) CHECK(bleu(cands, refs, n) == Approx(naive_bleu(cands, refs, n)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(bleu({ref, ref}, {{ref}}, 1), ContractError);
    CHECK_THROWS_AS(bleu({ref}, {{ref}}, 5), ContractError);
    CHECK_THROWS_AS(bleu({ref}, {{}}, 1), ContractError);
}

TEST_CASE("ROUGE-L", "[metrics]") {
    const Sentence s = words("a b c d");
    CHECK(rouge_l({s}, {{s}}) == Approx(1.0).epsilon(1e-15));
    CHECK(rouge_l({s}, {{words("a c b d")}}) == Approx(0.75).epsilon(1e-14));
    CHECK(rouge_l({s}, {{words("x y z")}}) == 0.0);
    // best reference wins
    CHECK(rouge_l_sentence(s, {words("x y"), s}) == Approx(1.0).epsilon(1e-15));
    // unequal P and R: LCS 2, P = 1, R = 0.5
    const double b2 = 1.44;
    CHECK(rouge_l_sentence(words("a b"), {s}) == Approx((1 + b2) * 0.5 / (0.5 + b2)).epsilon(1e-14));
    CHECK_THROWS_AS(rouge_l({s}, {}), ContractError);
}

TEST_CASE("CIDEr", "[metrics]") {
    const References refs = {{words("a man rides a red horse")}, {words("two dogs chase one ball")}};
    const std::vector<Sentence> cands = {refs[0][0], refs[1][0]};
    CHECK(cider(cands, refs) == Approx(10.0).epsilon(1e-12));
    CHECK(cider({words("zz yy xx ww"), words("qq pp oo nn")}, refs) == 0.0);

    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Sentence> c;
        References r;
        const std::size_t m = 2 + rng.index(5);
        for (std::size_t i = 0; i < m; ++i) {
            c.push_back(random_sentence(rng, 6, 8));
            r.emplace_back();
            for (std::size_t k = 0, nr = 1 + rng.index(3); k < nr; ++k) r.back().push_back(random_sentence(rng, 6, 8));
        }
        const double got = cider(c, r);
        CHECK(got == Approx(naive_cider(c, r)).epsilon(1e-9));
        CHECK(got >= 0.0);
        CHECK(got <= 10.0 + 1e-12);
    }

    CHECK_THROWS_AS(cider({words("a")}, {{words("a")}}), ContractError);
    CHECK_THROWS_AS(Cider(refs).corpus({words("a")}), ContractError);
}

TEST_CASE("corpus scores do not depend on sentence order", "[metrics]") {
    Rng rng(13);
    std::vector<Sentence> cands;
    References refs;
    for (int i = 0; i < 12; ++i) {
        cands.push_back(random_sentence(rng, 7, 8));
        refs.push_back({random_sentence(rng, 7, 8), random_sentence(rng, 7, 8)});
    }
    std::vector<std::string> ids(cands.size(), "s");
    const auto before = evaluate(ids, cands, refs);
    std::vector<std::size_t> order(cands.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
    std::swap(order[0], order[5]);
    std::vector<Sentence> pc;
    References pr;
    for (std::size_t i : order) {
        pc.push_back(cands[i]);
        pr.push_back(refs[i]);
    }
    const auto after = evaluate(ids, pc, pr);
    for (std::size_t n = 0; n < 4; ++n) CHECK(after.bleu[n] == Approx(before.bleu[n]).epsilon(1e-14));
    CHECK(after.rouge_l == Approx(before.rouge_l).epsilon(1e-14));
    CHECK(after.cider == Approx(before.cider).epsilon(1e-12));
    CHECK(before.candidates == 12);
    CHECK(before.sentences.size() == 12);
}

TEST_CASE("token records round-trip and align by id", "[metrics]") {
    const auto dir = std::filesystem::temp_directory_path() / "unison_test_metrics";
    std::filesystem::create_directories(dir);
    const std::vector<TokenRecord> refs = {{"a", words("x y")}, {"b", words("z")}};
    write_token_records(dir / "refs.jsonl", refs);
    const auto back = read_token_records(dir / "refs.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[1].id == "b");
    CHECK(back[0].tokens == words("x y"));

    std::vector<std::string> ids;
    std::vector<Sentence> cands;
    References aligned;
    align_records({{"b", words("z")}, {"a", words("x")}}, refs, ids, cands, aligned);
    REQUIRE(ids.size() == 2);
    for (std::size_t i = 0; i < ids.size(); ++i)
        CHECK(aligned[i].front() == (ids[i] == "a" ? words("x y") : words("z")));
    CHECK_THROWS_AS(align_records({{"c", words("z")}}, refs, ids, cands, aligned), ContractError);
}
