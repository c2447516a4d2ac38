// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "unison/errors.hpp"

namespace unison::metrics {

namespace {

constexpr double zero_precision = 1e-9;
constexpr double rouge_beta = 1.2;

std::map<std::string, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
    std::map<std::string, std::size_t> out;
    if (s.size() < n) return out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
        std::string key = s[i];
        for (std::size_t k = 1; k < n; ++k) key += ' ' + s[i + k];
        ++out[key];
    }
    return out;
}

void check_aligned(std::size_t candidates, const References& references) {
    if (candidates != references.size())
        throw ContractError("metric inputs differ in length: " + std::to_string(candidates) + " candidates, " +
                            std::to_string(references.size()) + " reference sets");
    for (const auto& refs : references)
        if (refs.empty()) throw ContractError("every candidate needs at least one reference");
}

std::size_t closest_ref_length(std::size_t c, const std::vector<Sentence>& refs) {
    std::size_t best = refs.front().size();
    for (const Sentence& r : refs) {
        const auto d = [c](std::size_t len) { return len > c ? len - c : c - len; };
        if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    return best;
}

double bleu_from_counts(const std::array<ClippedCount, 4>& counts, std::size_t n, std::size_t c, std::size_t r) {
    if (c == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double p = counts[k].total == 0 ? 0.0 : static_cast<double>(counts[k].matched) / static_cast<double>(counts[k].total);
        log_sum += std::log(p > 0.0 ? p : zero_precision);
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_sum / static_cast<double>(n));
}

std::size_t lcs_length(const Sentence& a, const Sentence& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

ClippedCount clipped_ngrams(const Sentence& candidate, const std::vector<Sentence>& references, std::size_t n) {
    if (n == 0) throw ContractError("n-gram order must be positive");
    const auto counts = ngram_counts(candidate, n);
    std::map<std::string, std::size_t> max_ref;
    for (const Sentence& r : references)
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    ClippedCount out;
    for (const auto& [g, c] : counts) {
        out.total += c;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) out.matched += std::min(c, it->second);
    }
    return out;
}

double bleu(const std::vector<Sentence>& candidates, const References& references, std::size_t n) {
    if (n < 1 || n > 4) throw ContractError("BLEU order must be in 1..4");
    check_aligned(candidates.size(), references);
    std::array<ClippedCount, 4> counts{};
    std::size_t c = 0, r = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            const ClippedCount cc = clipped_ngrams(candidates[i], references[i], k + 1);
            counts[k].matched += cc.matched;
            counts[k].total += cc.total;
        }
        c += candidates[i].size();
        r += closest_ref_length(candidates[i].size(), references[i]);
    }
    return bleu_from_counts(counts, n, c, r);
}

double rouge_l_sentence(const Sentence& candidate, const std::vector<Sentence>& references) {
    double best = 0.0;
    for (const Sentence& ref : references) {
        if (candidate.empty() || ref.empty()) continue;
        const double lcs = static_cast<double>(lcs_length(candidate, ref));
        if (lcs == 0.0) continue;
        const double p = lcs / static_cast<double>(candidate.size());
        const double r = lcs / static_cast<double>(ref.size());
        const double b2 = rouge_beta * rouge_beta;
        best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
    }
    return best;
}

double rouge_l(const std::vector<Sentence>& candidates, const References& references) {
    check_aligned(candidates.size(), references);
    if (candidates.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) total += rouge_l_sentence(candidates[i], references[i]);
    return total / static_cast<double>(candidates.size());
}

Cider::Cider(const References& references) {
    if (references.size() < 2) throw ContractError("CIDEr needs at least two reference sets to define idf");
    for (const auto& refs : references)
        if (refs.empty()) throw ContractError("every candidate needs at least one reference");
    log_sets_ = std::log(static_cast<double>(references.size()));
    for (const auto& refs : references) {
        for (std::size_t n = 0; n < 4; ++n) {
            std::set<std::string> seen;
            for (const Sentence& r : refs)
                for (const auto& [g, c] : ngram_counts(r, n + 1)) seen.insert(g);
            for (const std::string& g : seen) ++df_[n][g];
        }
    }
    ref_vectors_.reserve(references.size());
    for (const auto& refs : references) {
        std::array<std::vector<Vec>, 4> v;
        for (std::size_t n = 0; n < 4; ++n)
            for (const Sentence& r : refs) v[n].push_back(vectorize(r, n + 1));
        ref_vectors_.push_back(std::move(v));
    }
}

Cider::Vec Cider::vectorize(const Sentence& s, std::size_t n) const {
    Vec out;
    const auto& df = df_[n - 1];
    for (const auto& [g, c] : ngram_counts(s, n)) {
        auto it = df.find(g);
        const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
        out[g] = static_cast<double>(c) * (log_sets_ - std::log(std::max(1.0, d)));
    }
    return out;
}

double Cider::score(const Sentence& candidate, std::size_t index) const {
    const auto& refs = ref_vectors_.at(index);
    double total = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        const Vec c = vectorize(candidate, n + 1);
        double cn = 0.0;
        for (const auto& [g, v] : c) cn += v * v;
        double sum = 0.0;
        for (const Vec& r : refs[n]) {
            double rn = 0.0, dot = 0.0;
            for (const auto& [g, v] : r) {
                rn += v * v;
                auto it = c.find(g);
                if (it != c.end()) dot += v * it->second;
            }
            if (cn > 0.0 && rn > 0.0) sum += dot / (std::sqrt(cn) * std::sqrt(rn));
        }
        total += sum / static_cast<double>(refs[n].size());
    }
    return 10.0 * total / 4.0;
}

double Cider::corpus(const std::vector<Sentence>& candidates) const {
    if (candidates.size() != ref_vectors_.size())
        throw ContractError("metric inputs differ in length: " + std::to_string(candidates.size()) + " candidates, " +
                            std::to_string(ref_vectors_.size()) + " reference sets");
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) total += score(candidates[i], i);
    return total / static_cast<double>(candidates.size());
}

double cider(const std::vector<Sentence>& candidates, const References& references) {
    check_aligned(candidates.size(), references);
    return Cider(references).corpus(candidates);
}

EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<Sentence>& candidates,
                    const References& references) {
    check_aligned(candidates.size(), references);
    if (ids.size() != candidates.size()) throw ContractError("evaluate: ids and candidates differ in length");
    EvalReport report;
    report.candidates = candidates.size();
    for (const auto& refs : references) report.references += refs.size();
    for (std::size_t n = 1; n <= 4; ++n) report.bleu[n - 1] = bleu(candidates, references, n);
    report.rouge_l = rouge_l(candidates, references);
    const Cider cider_table(references);
    report.cider = cider_table.corpus(candidates);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        SentenceScores s;
        s.id = ids[i];
        for (std::size_t n = 1; n <= 4; ++n) s.bleu[n - 1] = bleu({candidates[i]}, {references[i]}, n);
        s.rouge_l = rouge_l_sentence(candidates[i], references[i]);
        s.cider = cider_table.score(candidates[i], i);
        report.sentences.push_back(std::move(s));
    }
    return report;
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
    nlohmann::ordered_json j;
    j["bleu_1"] = report.bleu[0];
    j["bleu_2"] = report.bleu[1];
    j["bleu_3"] = report.bleu[2];
    j["bleu_4"] = report.bleu[3];
    j["rouge_l"] = report.rouge_l;
    j["cider"] = report.cider;
    j["candidates"] = report.candidates;
    j["references"] = report.references;
    auto& per = j["sentences"] = nlohmann::ordered_json::array();
    for (const auto& s : report.sentences)
        per.push_back({{"id", s.id}, {"bleu", s.bleu}, {"rouge_l", s.rouge_l}, {"cider", s.cider}});
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw FormatError("failed writing report", path.string());
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path);
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "id,bleu_1,bleu_2,bleu_3,bleu_4,rouge_l,cider\n";
    out << "corpus," << report.bleu[0] << ',' << report.bleu[1] << ',' << report.bleu[2] << ',' << report.bleu[3] << ','
        << report.rouge_l << ',' << report.cider << '\n';
    for (const auto& s : report.sentences)
        out << s.id << ',' << s.bleu[0] << ',' << s.bleu[1] << ',' << s.bleu[2] << ',' << s.bleu[3] << ',' << s.rouge_l
            << ',' << s.cider << '\n';
    if (!out) throw FormatError("failed writing report", path.string());
}

std::vector<TokenRecord> read_token_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open token file", path.string());
    std::vector<TokenRecord> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        try {
            const auto j = nlohmann::json::parse(line);
            TokenRecord r;
            r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            r.tokens = j.at("tokens").get<Sentence>();
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("bad token record: ") + e.what(), where);
        }
    }
    return out;
}

void write_token_records(const std::filesystem::path& path, const std::vector<TokenRecord>& records) {
    std::ofstream out(path);
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["tokens"] = r.tokens;
        out << j.dump() << '\n';
    }
    if (!out) throw FormatError("failed writing token file", path.string());
}

void align_records(const std::vector<TokenRecord>& candidates, const std::vector<TokenRecord>& references,
                   std::vector<std::string>& ids, std::vector<Sentence>& aligned_candidates, References& aligned_refs) {
    std::map<std::string, std::vector<Sentence>> by_id;
    for (const auto& r : references) by_id[r.id].push_back(r.tokens);
    ids.clear();
    aligned_candidates.clear();
    aligned_refs.clear();
    for (const auto& c : candidates) {
        auto it = by_id.find(c.id);
        if (it == by_id.end()) throw ContractError("no reference for candidate id '" + c.id + "'");
        ids.push_back(c.id);
        aligned_candidates.push_back(c.tokens);
        aligned_refs.push_back(it->second);
    }
}

}  // namespace unison::metrics
