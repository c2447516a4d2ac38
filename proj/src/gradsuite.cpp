// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/gradsuite.hpp"

#include <cstdio>
#include <functional>
#include <sstream>

#include "unison/decoder.hpp"
#include "unison/errors.hpp"
#include "unison/graph_batch.hpp"
#include "unison/hgm.hpp"
#include "unison/numerics/gradcheck.hpp"
#include "unison/numerics/ops.hpp"
#include "unison/sgencoder.hpp"
#include "unison/training/losses.hpp"

namespace unison::gradsuite {

using num::Tensor;

namespace {

std::size_t width(Rng& rng, const Options& o) { return 2 + rng.index(o.max_dim - 1); }

Tensor leaf(std::size_t rows, std::size_t cols, Rng& rng) { return num::normal_param(rows, cols, 1.0, rng); }

Tensor fixed(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.normal();
    return Tensor::from(rows, cols, std::move(v));
}

/// Random projection to a scalar so every output entry matters.
Tensor project(const Tensor& y, const Tensor& weights) { return num::sum(num::mul(y, weights)); }

emb::CrossLingualSpace random_space(std::size_t dim, Rng& rng) {
    emb::CrossLingualSpace s;
    s.source = emb::EmbeddingTable(dim);
    s.target = emb::EmbeddingTable(dim);
    std::vector<double> v(dim);
    auto fill = [&](emb::EmbeddingTable& t, const std::string& token) {
        for (double& x : v) x = rng.normal();
        t.add(token, v);
    };
    for (std::size_t i = 0; i < 6; ++i) {
        fill(s.source, "n" + std::to_string(i));
        fill(s.target, "N" + std::to_string(i));
    }
    for (std::size_t i = 0; i < 3; ++i) {
        fill(s.source, "v" + std::to_string(i));
        fill(s.target, "V" + std::to_string(i));
        fill(s.source, "a" + std::to_string(i));
        fill(s.target, "A" + std::to_string(i));
    }
    return s;
}

sg::SceneGraph random_graph(Rng& rng) {
    sg::SceneGraph g;
    const std::size_t n = 1 + rng.index(4);
    for (std::size_t i = 0; i < n; ++i) g.objects.push_back({i, "n" + std::to_string(rng.index(6))});
    if (n > 1) {
        const std::size_t r = rng.index(3);
        for (std::size_t k = 0; k < r; ++k) {
            const std::size_t s = rng.index(n);
            std::size_t o = rng.index(n - 1);
            if (o >= s) ++o;
            g.relations.push_back({s, "v" + std::to_string(rng.index(3)), o});
        }
    }
    const std::size_t a = rng.index(3);
    for (std::size_t k = 0; k < a; ++k) g.attributes.push_back({rng.index(n), "a" + std::to_string(rng.index(3))});
    return g;
}

std::vector<sg::SceneGraph> random_graphs(Rng& rng) {
    std::vector<sg::SceneGraph> gs;
    const std::size_t b = 1 + rng.index(3);
    for (std::size_t i = 0; i < b; ++i) gs.push_back(random_graph(rng));
    return gs;
}

GraphBatch batch_of(const std::vector<sg::SceneGraph>& gs) {
    std::vector<const sg::SceneGraph*> ptrs;
    for (const auto& g : gs) ptrs.push_back(&g);
    return GraphBatch::from(ptrs);
}

NodeEmbeddings random_nodes(const GraphBatch& b, std::size_t dim, Rng& rng, num::ParamList& params) {
    NodeEmbeddings n{leaf(b.objects(), dim, rng), leaf(b.relations(), dim, rng), leaf(b.attributes(), dim, rng)};
    params.push_back({"nodes.objects", n.objects});
    params.push_back({"nodes.relations", n.relations});
    params.push_back({"nodes.attributes", n.attributes});
    return n;
}

dec::DecoderConfig small_decoder(Rng& rng, const Options& o, std::size_t feature_dim) {
    dec::DecoderConfig c;
    c.feature_dim = feature_dim;
    c.hidden = width(rng, o);
    c.attention = width(rng, o);
    c.triplet = width(rng, o);
    c.word_dim = width(rng, o);
    c.vocab = 3 + rng.index(o.max_dim - 2);
    c.max_len = 6;
    c.static_attention = rng.bernoulli(0.25);
    c.tied_output = rng.bernoulli(0.5);
    return c;
}

// Each case builds a module and a loss closure for one random config.
struct Case {
    std::function<Tensor()> loss;
    num::ParamList params;
};

using Builder = std::function<Case(Rng&)>;

}  // namespace

std::vector<Row> run(const Options& o) {
    if (o.configs == 0 || o.max_dim < 2) throw ContractError("gradient suite needs configs >= 1 and max_dim >= 2");
    num::PrecisionScope f64(num::Precision::f64);
    num::GradCheckOptions check;
    check.tolerance = o.tolerance;

    // Modules live in shared holders so the closures outlive the builder.
    std::vector<std::pair<std::string, Builder>> builders;

    builders.push_back({"xe", [&o](Rng& rng) {
        const std::size_t dim = width(rng, o);
        auto dec = std::make_shared<dec::Decoder>(small_decoder(rng, o, dim), rng);
        auto graphs = std::make_shared<std::vector<sg::SceneGraph>>(random_graphs(rng));
        auto batch = std::make_shared<GraphBatch>(batch_of(*graphs));
        Case c;
        auto enc = std::make_shared<enc::Encoder>(dim, rng);
        auto nodes = std::make_shared<NodeEmbeddings>(random_nodes(*batch, dim, rng, c.params));
        std::vector<std::vector<std::size_t>> targets(graphs->size());
        for (auto& t : targets) {
            const std::size_t len = rng.index(4);
            for (std::size_t k = 0; k < len; ++k) t.push_back(2 + rng.index(dec->config().vocab - 2));
            t.push_back(dec::Vocabulary::eos);
        }
        dec->collect(c.params, "dec");
        c.loss = [=] { return dec->nll(dec->prepare((*enc)(*batch, *nodes)), targets); };
        return c;
    }});

    builders.push_back({"kl", [&o](Rng& rng) {
        const std::size_t dim = width(rng, o);
        const std::size_t d_c = width(rng, o);
        auto proj = std::make_shared<train::KlProjection>(dim, d_c, rng);
        Case c;
        std::array<Tensor, 3> x, y;
        for (std::size_t p = 0; p < 3; ++p) {
            // An empty type on one side exercises the constant contribution.
            const std::size_t rows = rng.bernoulli(0.1) ? 0 : 1 + rng.index(4);
            x[p] = leaf(rows, dim, rng);
            y[p] = leaf(rows == 0 ? 0 : 1 + rng.index(4), dim, rng);
            c.params.push_back({"x" + std::to_string(p), x[p]});
            c.params.push_back({"y" + std::to_string(p), y[p]});
        }
        proj->collect(c.params, "kl");
        c.loss = [=] { return train::kl_loss(x, y, *proj); };
        return c;
    }});

    auto gan = [&o](bool generator) {
        return [&o, generator](Rng& rng) {
            const std::size_t dim = width(rng, o);
            auto d = std::make_shared<train::Discriminator>(dim, width(rng, o), rng);
            const auto variant = rng.bernoulli(0.5) ? train::GanVariant::minimax : train::GanVariant::non_saturating;
            Case c;
            Tensor real = leaf(1 + rng.index(5), dim, rng);
            Tensor fake = leaf(1 + rng.index(5), dim, rng);
            c.params.push_back({"real", real});
            c.params.push_back({"fake", fake});
            d->collect(c.params, "disc");
            c.loss = [=] {
                auto l = train::gan_losses(real, fake, *d, variant);
                return generator ? l.generator : l.value;
            };
            return c;
        };
    };
    builders.push_back({"gan_value", gan(false)});
    builders.push_back({"gan_generator", gan(true)});

    builders.push_back({"cycle", [&o](Rng& rng) {
        const std::size_t dim = width(rng, o);
        auto fwd = std::make_shared<train::Mapper>(dim, width(rng, o), rng);
        auto back = std::make_shared<train::Mapper>(dim, width(rng, o), rng);
        // The last layer starts at zero; perturb it so every path is live.
        num::ParamList own;
        fwd->collect(own, "f");
        back->collect(own, "b");
        for (auto& [name, t] : own)
            for (double& v : t.mutable_data()) v += 0.3 * rng.normal();
        Case c;
        Tensor image = leaf(1 + rng.index(4), dim, rng);
        Tensor sentence = leaf(1 + rng.index(4), dim, rng);
        c.params.push_back({"image", image});
        c.params.push_back({"sentence", sentence});
        fwd->collect(c.params, "to_sentence");
        back->collect(c.params, "to_image");
        c.loss = [=] {
            return train::cycle_loss(image, sentence, [fwd](const Tensor& x) { return (*fwd)(x); },
                                     [back](const Tensor& x) { return (*back)(x); });
        };
        return c;
    }});

    builders.push_back({"hgm", [&o](Rng& rng) {
        hgm::HgmConfig hc;
        hc.source_dim = hc.target_dim = width(rng, o);
        hc.model_dim = width(rng, o);
        hc.sub_width = width(rng, o);
        hc.key_dim = width(rng, o);
        hc.gate_hidden = width(rng, o);
        const hgm::Fusion fusions[] = {hgm::Fusion::word, hgm::Fusion::word_sub, hgm::Fusion::hgm_base, hgm::Fusion::hgm};
        hc.fusion = fusions[rng.index(4)];
        auto space = std::make_shared<emb::CrossLingualSpace>(random_space(hc.source_dim, rng));
        auto h = std::make_shared<hgm::Hgm>(hc, rng);
        auto graphs = std::make_shared<std::vector<sg::SceneGraph>>(random_graphs(rng));
        auto batch = std::make_shared<GraphBatch>(batch_of(*graphs));
        const Tensor w = fixed(batch->objects(), hc.model_dim, rng);
        Case c;
        h->collect(c.params, "hgm");
        c.loss = [=] { return project(h->map_objects(*batch, *space), w); };
        return c;
    }});

    builders.push_back({"encoder", [&o](Rng& rng) {
        const std::size_t dim = width(rng, o);
        auto enc = std::make_shared<enc::Encoder>(dim, rng);
        auto graphs = std::make_shared<std::vector<sg::SceneGraph>>(random_graphs(rng));
        auto batch = std::make_shared<GraphBatch>(batch_of(*graphs));
        Case c;
        auto nodes = std::make_shared<NodeEmbeddings>(random_nodes(*batch, dim, rng, c.params));
        const enc::EncodedFeatures shape = (*enc)(*batch, *nodes);
        std::array<Tensor, 3> w;
        for (std::size_t p = 0; p < 3; ++p) w[p] = fixed(shape.of(p).rows(), dim, rng);
        enc->collect(c.params, "enc");
        c.loss = [=] {
            const enc::EncodedFeatures f = (*enc)(*batch, *nodes);
            Tensor total = Tensor::scalar(0.0);
            for (std::size_t p = 0; p < 3; ++p)
                if (f.of(p).rows() > 0) total = num::add(total, project(f.of(p), w[p]));
            return total;
        };
        return c;
    }});

    builders.push_back({"decoder_step", [&o](Rng& rng) {
        const std::size_t dim = width(rng, o);
        auto dec = std::make_shared<dec::Decoder>(small_decoder(rng, o, dim), rng);
        auto graphs = std::make_shared<std::vector<sg::SceneGraph>>(random_graphs(rng));
        auto batch = std::make_shared<GraphBatch>(batch_of(*graphs));
        auto enc = std::make_shared<enc::Encoder>(dim, rng);
        Case c;
        auto nodes = std::make_shared<NodeEmbeddings>(random_nodes(*batch, dim, rng, c.params));
        std::vector<std::size_t> rows(graphs->size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        // Two steps so the recurrent state carries gradient.
        std::vector<std::size_t> prev(rows.size());
        for (auto& t : prev) t = rng.index(dec->config().vocab);
        const Tensor w = fixed(rows.size(), dec->config().vocab, rng);
        dec->collect(c.params, "dec");
        c.loss = [=] {
            const dec::PreparedFeatures f = dec->prepare((*enc)(*batch, *nodes));
            dec::DecodeState s = dec->initial(rows);
            auto first = dec->step(f, s);
            first.second.prev = prev;
            auto second = dec->step(f, first.second);
            return project(second.first, w);
        };
        return c;
    }});

    std::vector<Row> rows;
    Rng master(o.seed);
    for (const auto& [name, build] : builders) {
        Row row;
        row.name = name;
        Rng rng = master.split();
        for (std::size_t k = 0; k < o.configs; ++k) {
            Case c = build(rng);
            const num::GradCheckResult r = num::grad_check(name, c.loss, c.params, check);
            num::tape().clear();
            ++row.configs;
            if (r.passed) ++row.passed;
            row.checked += r.checked;
            row.skipped += r.skipped;
            if (r.max_rel_error >= row.max_rel_error) {
                row.max_rel_error = r.max_rel_error;
                row.worst = "config " + std::to_string(k) + ": " + r.worst_param;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

bool all_passed(const std::vector<Row>& rows) {
    for (const Row& r : rows)
        if (!r.ok()) return false;
    return !rows.empty();
}

std::string format_table(const std::vector<Row>& rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-14s %8s %8s %10s %8s %12s  %s\n", "loss", "configs", "passed", "entries", "kinks",
                  "max_rel_err", "status");
    out << line;
    for (const Row& r : rows) {
        std::snprintf(line, sizeof line, "%-14s %8zu %8zu %10zu %8zu %12.3e  %s\n", r.name.c_str(), r.configs, r.passed,
                      r.checked, r.skipped, r.max_rel_error, r.ok() ? "ok" : "FAIL");
        out << line;
    }
    return out.str();
}

nlohmann::ordered_json to_json(const std::vector<Row>& rows) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const Row& r : rows)
        j.push_back({{"name", r.name},
                     {"configs", r.configs},
                     {"passed", r.passed},
                     {"checked", r.checked},
                     {"skipped_kinks", r.skipped},
                     {"max_rel_error", r.max_rel_error},
                     {"worst", r.worst},
                     {"ok", r.ok()}});
    return j;
}

}  // namespace unison::gradsuite
