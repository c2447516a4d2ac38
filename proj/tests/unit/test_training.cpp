// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "unison/config.hpp"
#include "unison/errors.hpp"
#include "unison/numerics/ops.hpp"
#include "unison/pipeline.hpp"
#include "unison/training/checkpoint.hpp"
#include "unison/training/training.hpp"

using namespace unison;
using namespace unison::train;
using Catch::Approx;
using num::Tensor;
namespace fs = std::filesystem;

namespace {

Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor::from(r, c, std::move(v)); }

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    std::vector<double> v(r * c);
    for (double& x : v) x = scale * rng.normal();
    return Tensor::from(r, c, std::move(v));
}

world::WorldConfig tiny_world() {
    world::WorldConfig wc;
    wc.embedding_dim = 8;
    return wc;
}

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.model_dim = 8;
    mc.hidden = 8;
    mc.attention = 8;
    mc.triplet = 8;
    mc.word_dim = 8;
    mc.key_dim = 4;
    mc.gate_hidden = 8;
    mc.sub_width = 8;
    return mc;
}

Phase1Config tiny_schedule() {
    Phase1Config pc;
    pc.d_c = 4;
    pc.epochs_xe = 2;
    pc.epochs_joint = 1;
    pc.lr = 3e-3;
    pc.batch = 8;
    return pc;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("unison_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<double> flat(const num::ParamList& params) {
    std::vector<double> out;
    for (const auto& [name, t] : params) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("exponentiated KL of two distributions", "[losses]") {
    num::PrecisionScope f64(num::Precision::f64);
    const Tensor p = matrix(1, 2, {0.5, 0.5});
    CHECK(exp_kl(p, p).item() == Approx(1.0).epsilon(1e-15));
    // KL = 0.5 ln(25/9), so exp(KL) = 5/3
    CHECK(exp_kl(p, matrix(1, 2, {0.9, 0.1})).item() == Approx(5.0 / 3.0).epsilon(1e-12));
    // one differing type next to two identical ones: 2 + exp(0.1438...) = 3.1547
    const double term = exp_kl(p, matrix(1, 2, {0.25, 0.75})).item();
    CHECK(term == Approx(std::exp(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0))).epsilon(1e-12));
    CHECK(2.0 + term == Approx(3.1547).margin(1e-4));
    // rows are averaged before comparing
    const Tensor two = matrix(2, 2, {0.8, 0.2, 0.2, 0.8});
    CHECK(exp_kl(two, p).item() == Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(exp_kl(p, matrix(1, 3, {0.2, 0.3, 0.5})), DimensionError);
}

TEST_CASE("KL objective is at least 3 with equality for identical features", "[losses]") {
    num::PrecisionScope f64(num::Precision::f64);
    Rng rng(3);
    const KlProjection proj(6, 4, rng);
    std::array<Tensor, 3> x;
    for (auto& t : x) t = random_matrix(rng, 3, 6);
    CHECK(kl_loss(x, x, proj).item() == Approx(3.0).epsilon(1e-14));

    for (int trial = 0; trial < 200; ++trial) {
        std::array<Tensor, 3> a, b;
        for (std::size_t p = 0; p < 3; ++p) {
            a[p] = random_matrix(rng, 1 + rng.index(5), 6, 2.0);
            b[p] = random_matrix(rng, 1 + rng.index(5), 6, 2.0);
        }
        CHECK(kl_loss(a, b, proj).item() >= 3.0);
    }

    // a type with no rows on either side contributes exactly 1
    std::array<Tensor, 3> y = x;
    y[2] = Tensor(0, 6);
    const double two_types = kl_loss(x, y, proj).item();
    CHECK(two_types == Approx(3.0).epsilon(1e-14));
    std::array<Tensor, 3> none = {Tensor(0, 6), Tensor(0, 6), Tensor(0, 6)};
    CHECK(kl_loss(none, none, proj).item() == 3.0);
    CHECK_THROWS_AS(KlProjection(6, 1, rng), ContractError);
}

TEST_CASE("GAN losses from logits", "[losses]") {
    num::PrecisionScope f64(num::Precision::f64);
    const Tensor zero = matrix(2, 1, {0.0, 0.0});
    auto ns = gan_losses_from_logits(zero, zero, GanVariant::non_saturating);
    CHECK(ns.value.item() == Approx(2.0 * std::log(0.5)).epsilon(1e-14));
    CHECK(ns.generator.item() == Approx(std::log(2.0)).epsilon(1e-14));
    auto mm = gan_losses_from_logits(zero, zero, GanVariant::minimax);
    CHECK(mm.generator.item() == Approx(std::log(0.5)).epsilon(1e-14));

    // a perfect discriminator drives the value to 0
    auto perfect = gan_losses_from_logits(matrix(1, 1, {60.0}), matrix(1, 1, {-60.0}), GanVariant::minimax);
    CHECK(perfect.value.item() == Approx(0.0).margin(1e-20));
    CHECK(perfect.generator.item() == Approx(0.0).margin(1e-20));

    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor real = random_matrix(rng, 1 + rng.index(6), 1, 3.0);
        const Tensor fake = random_matrix(rng, 1 + rng.index(6), 1, 3.0);
        auto sig = [](double l) { return 1.0 / (1.0 + std::exp(-l)); };
        double lr = 0.0, lf = 0.0, lg = 0.0;
        for (double l : real.data()) lr += std::log(sig(l));
        for (double l : fake.data()) {
            lf += std::log(1.0 - sig(l));
            lg += -std::log(sig(l));
        }
        lr /= static_cast<double>(real.rows());
        lf /= static_cast<double>(fake.rows());
        lg /= static_cast<double>(fake.rows());
        auto got = gan_losses_from_logits(real, fake, GanVariant::non_saturating);
        CHECK(got.value.item() == Approx(lr + lf).epsilon(1e-10));
        CHECK(got.generator.item() == Approx(lg).epsilon(1e-10));
        CHECK(gan_losses_from_logits(real, fake, GanVariant::minimax).generator.item() == Approx(lf).epsilon(1e-10));
    }
    CHECK_THROWS_AS(gan_losses_from_logits(Tensor(0, 1), zero, GanVariant::minimax), ContractError);
    CHECK(gan_variant_from_string("minimax") == GanVariant::minimax);
    CHECK_THROWS_AS(gan_variant_from_string("wgan"), ContractError);
}

TEST_CASE("cycle loss", "[losses]") {
    num::PrecisionScope f64(num::Precision::f64);
    Rng rng(5);
    const Tensor img = random_matrix(rng, 4, 3);
    const Tensor sen = random_matrix(rng, 5, 3);

    SECTION("fresh mappers are the identity") {
        const Mapper a(3, 6, rng), b(3, 6, rng);
        CHECK(cycle_loss(img, sen, [&](const Tensor& x) { return a(x); }, [&](const Tensor& x) { return b(x); }).item() == 0.0);
    }
    SECTION("inverse pair") {
        const double loss = cycle_loss(img, sen, [](const Tensor& x) { return num::scale(x, 2.0); },
                                       [](const Tensor& x) { return num::scale(x, 0.5); })
                                .item();
        CHECK(loss == Approx(0.0).margin(1e-15));
    }
    SECTION("constant shift costs the feature width in each direction") {
        const Tensor one = matrix(1, 3, {1.0, 1.0, 1.0});
        const double loss =
            cycle_loss(img, sen, [&](const Tensor& x) { return num::add(x, one); }, [](const Tensor& x) { return x; }).item();
        CHECK(loss == Approx(6.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(cycle_loss(Tensor(0, 3), sen, [](const Tensor& x) { return x; }, [](const Tensor& x) { return x; }),
                    ContractError);
}

TEST_CASE("uniform decoder output costs ln V per token", "[losses]") {
    num::PrecisionScope f64(num::Precision::f64);
    const world::World w = world::generate_world(tiny_world());
    Phase1Model m(tiny_model(), 4, w, 1);
    for (dec::Decoder* d : {&m.dec_x, &m.dec_y}) {
        for (double& v : d->output.weight.mutable_data()) v = 0.0;
        for (double& v : d->output.bias.mutable_data()) v = 0.0;
    }
    const auto data = m.examples(world::generate_parallel_corpus(w, 5, 1));
    std::vector<const Example*> batch;
    double expected = 0.0;
    std::size_t tokens = 0;
    for (const auto& e : data) {
        batch.push_back(&e);
        expected += static_cast<double>(e.x_ids.size()) * std::log(static_cast<double>(m.vocab_x.size()));
        expected += static_cast<double>(e.y_ids.size()) * std::log(static_cast<double>(m.vocab_y.size()));
        tokens += e.x_ids.size() + e.y_ids.size();
    }
    const Phase1Losses l = phase1_losses(m, batch, w.space, true);
    CHECK(l.xe.item() == Approx(expected / 5.0).epsilon(1e-12));
    CHECK(l.tokens == tokens);
    CHECK(l.kl.item() >= 3.0);

    // two graphs, three tokens each, four-word vocabulary: 6 ln 4
    dec::DecoderConfig dc;
    dc.feature_dim = 4;
    dc.vocab = 4;
    Rng rng(2);
    dec::Decoder d(dc, rng);
    for (double& v : d.output.weight.mutable_data()) v = 0.0;
    enc::EncodedFeatures f;
    f.graphs = 2;
    f.objects = random_matrix(rng, 2, 4);
    f.object_owner = {0, 1};
    f.relations = Tensor(0, 4);
    f.attributes = Tensor(0, 4);
    const double nll = d.nll(d.prepare(f), {{2, 3, 1}, {3, 2, 1}}).item();
    CHECK(nll == Approx(6.0 * std::log(4.0)).epsilon(1e-12));
    CHECK(nll == Approx(8.317766166719343).epsilon(1e-12));
}

TEST_CASE("training is a pure function of the seed", "[training]") {
    const world::World w = world::generate_world(tiny_world());
    const auto corpus = world::generate_parallel_corpus(w, 24, 1);
    auto run = [&](std::uint64_t seed) {
        Phase1Model m(tiny_model(), 4, w, seed);
        const Phase1Report r = train_phase1(m, m.examples(corpus), w.space, tiny_schedule(), seed);
        return std::make_pair(flat(m.params()), r.epoch_xe_per_token);
    };
    const auto a = run(4);
    const auto b = run(4);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(run(5).first != a.first);
}

TEST_CASE("phase 1 reports per-epoch losses and joint epochs add KL", "[training]") {
    const world::World w = world::generate_world(tiny_world());
    Phase1Model m(tiny_model(), 4, w, 2);
    const auto data = m.examples(world::generate_parallel_corpus(w, 24, 1));
    const Phase1Report r = train_phase1(m, data, w.space, tiny_schedule(), 2);
    REQUIRE(r.epoch_xe_per_token.size() == 3);
    CHECK(r.epoch_kl[0] == 0.0);
    CHECK(r.epoch_kl[2] >= 3.0);
    CHECK(r.final_kl >= 3.0);
    CHECK(r.step_xe_per_token.size() == 3 * 3);

    Phase1Config bad = tiny_schedule();
    bad.batch = 0;
    CHECK_THROWS_AS(train_phase1(m, data, w.space, bad, 2), ContractError);
}

TEST_CASE("a diverging loss aborts with the epoch and step", "[training]") {
    const world::World w = world::generate_world(tiny_world());
    Phase1Model m(tiny_model(), 4, w, 3);
    const auto data = m.examples(world::generate_parallel_corpus(w, 16, 1));
    m.dec_y.output.bias.mutable_data()[0] = std::nan("");
    try {
        train_phase1(m, data, w.space, tiny_schedule(), 3);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string what = e.what();
        INFO(what);
        CHECK(what.find("epoch 1") != std::string::npos);
        CHECK(what.find("step 1:") != std::string::npos);
    }
    CHECK(num::tape().size() == 0);
}

TEST_CASE("checkpoints round-trip and reject bad input", "[checkpoint]") {
    const world::World w = world::generate_world(tiny_world());
    cfg::RunConfig rc;
    rc.model = tiny_model();
    rc.phase1 = tiny_schedule();
    rc.seed = 6;
    Phase1Model m(rc.model, rc.phase1.d_c, w, rc.seed);
    train_phase1(m, m.examples(world::generate_parallel_corpus(w, 16, 1)), w.space, rc.phase1, rc.seed);

    const fs::path dir = scratch_dir("ckpt") / "phase1";
    pipeline::save_phase1(dir, m, rc);
    const Phase1Model back = pipeline::load_phase1(dir, w);
    CHECK(flat(back.params()) == flat(m.params()));
    CHECK(num::checksum(back.params()) == num::checksum(m.params()));

    // same model, same bytes
    const fs::path again = dir.parent_path() / "again";
    pipeline::save_phase1(again, m, rc);
    for (const auto& entry : fs::directory_iterator(dir))
        CHECK(slurp(entry.path()) == slurp(again / entry.path().filename()));

    CHECK_THROWS_AS(pipeline::load_phase1(dir.parent_path() / "missing", w), ContractError);
    CHECK_THROWS_AS(read_checkpoint(dir.parent_path() / "missing"), ContractError);

    // truncate one blob
    fs::path blob;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".bin") blob = entry.path();
    REQUIRE(!blob.empty());
    fs::resize_file(blob, fs::file_size(blob) - 1);
    CHECK_THROWS_AS(read_checkpoint(dir), FormatError);
}

TEST_CASE("phase 2 leaves phase-1 parameters untouched", "[training]") {
    const world::World w = world::generate_world(tiny_world());
    Phase1Model m(tiny_model(), 4, w, 7);
    const auto corpus = world::generate_parallel_corpus(w, 24, 1);
    train_phase1(m, m.examples(corpus), w.space, tiny_schedule(), 7);
    const std::uint64_t before_all = num::checksum(m.params());

    std::vector<sg::SceneGraph> graphs;
    for (const auto& item : corpus.items) graphs.push_back(item.graph);
    const world::Distortion d = world::make_distortion(w.config, 8);
    const FeaturePools image = encode_pools(m, graphs, w.space, &d);
    const FeaturePools sentence = encode_pools(m, graphs, w.space, nullptr);

    Phase2Config pc;
    pc.disc_width = 8;
    pc.mapper_hidden = 8;
    pc.steps = 60;
    pc.batch_rows = 8;
    pc.lr = 1e-3;
    Phase2Model cmm(8, pc, 7);
    const Phase2Report r = train_phase2(m, cmm, image, sentence, pc, 7);
    CHECK(r.checksum_constant);
    CHECK(r.frozen_checksum_before == r.frozen_checksum_after);
    CHECK(r.frozen_checksum_after == num::checksum(m.frozen_params()));
    CHECK(num::checksum(m.params()) == before_all);
    CHECK(!r.cycle.empty());
    for (double c : r.final_cycle_per_dim) CHECK(std::isfinite(c));
}

TEST_CASE("identity mappers do not change captions; empty graphs caption", "[inference]") {
    const world::World w = world::generate_world(tiny_world());
    Phase1Model m(tiny_model(), 4, w, 8);
    const auto corpus = world::generate_parallel_corpus(w, 16, 1);
    train_phase1(m, m.examples(corpus), w.space, tiny_schedule(), 8);
    std::vector<sg::SceneGraph> graphs;
    for (const auto& item : corpus.items) graphs.push_back(item.graph);

    Phase2Config pc;
    pc.disc_width = 8;
    pc.mapper_hidden = 8;
    const Phase2Model identity(8, pc, 1);
    InferenceOptions plain;
    plain.beam = 3;
    InferenceOptions mapped = plain;
    mapped.cmm = &identity;
    CHECK(infer_captions(m, graphs, w.space, plain) == infer_captions(m, graphs, w.space, mapped));

    const sg::Tokens empty = infer_caption(m, sg::SceneGraph{}, w.space, plain);
    CHECK(empty.size() <= m.config().max_len);
}

TEST_CASE("phase 2 without a phase-1 checkpoint is a contract error", "[pipeline]") {
    const fs::path root = scratch_dir("p2missing");
    cfg::RunConfig rc = cfg::desk();
    rc.data.train = 20;
    rc.data.val = 5;
    rc.data.test = 5;
    rc.data.images = 10;
    fs::create_directories(root / "data");
    pipeline::gen_data(rc, root / "data");
    rc.paths.data = (root / "data").string();
    rc.paths.phase1 = (root / "nowhere").string();
    CHECK_THROWS_AS(pipeline::train_phase2(rc, root / "out"), ContractError);
}

TEST_CASE("gen-data keeps hidden captions out of the training corpus", "[pipeline]") {
    const fs::path root = scratch_dir("gendata");
    cfg::RunConfig rc = cfg::desk();
    rc.data.train = 300;
    rc.data.images = 200;
    pipeline::gen_data(rc, root);
    const auto train = pipeline::read_corpus(root / "train.jsonl");
    CHECK(train.items.size() == 300);
    std::set<std::string> targets;
    for (const auto& item : train.items) targets.insert(world::join(item.target));
    std::size_t captions = 0;
    std::ifstream in(root / "image_captions.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        const auto rec = nlohmann::json::parse(line);
        sg::Tokens t = rec.at("tokens").get<sg::Tokens>();
        CHECK(!targets.count(world::join(t)));
        ++captions;
    }
    CHECK(captions == 200);
}

TEST_CASE("run config: strict keys, overrides, manifests", "[config]") {
    const cfg::RunConfig base = cfg::desk();
    const cfg::RunConfig round = cfg::apply_json(cfg::to_json(base), cfg::RunConfig{});
    CHECK(cfg::to_json(round) == cfg::to_json(base));
    CHECK(cfg::config_hash(round) == cfg::config_hash(base));

    const cfg::RunConfig o = cfg::apply_override("phase1.lr_end=0.25", cfg::apply_override("paths.data=some/dir", base));
    CHECK(o.phase1.lr_end == 0.25);
    CHECK(o.paths.data == "some/dir");
    CHECK(cfg::config_hash(o) != cfg::config_hash(base));
    CHECK(cfg::apply_override("model.fusion=\"word\"", base).model.fusion == hgm::Fusion::word);
    CHECK(cfg::apply_override("model.fusion=word_sub", base).model.fusion == hgm::Fusion::word_sub);

    try {
        cfg::apply_json(nlohmann::json::parse(R"({"phase1": {"epochs": 3}})"), base);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("/phase1/epochs") != std::string::npos);
    }
    CHECK_THROWS_AS(cfg::apply_override("no_equals_sign", base), ConfigError);
    CHECK_THROWS_AS(cfg::apply_json(nlohmann::json::parse(R"({"model": {"fusion": "sideways"}})"), base), ConfigError);

    cfg::RunConfig bad = base;
    bad.phase1.lr_end = 0.0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = base;
    bad.world.homonym_count = bad.world.n_objects;
    CHECK_THROWS_AS(bad.validate(), ContractError);

    // A manifest carries the resolved config and reloads to the same hash.
    const fs::path dir = scratch_dir("manifest");
    pipeline::Outputs outputs;
    pipeline::write_manifest(dir, "stats", o, outputs, 0.5);
    const cfg::RunConfig back = cfg::load_config((dir / "manifest.json").string(), cfg::RunConfig{});
    CHECK(cfg::config_hash(back) == cfg::config_hash(o));
    CHECK_THROWS_AS(cfg::load_config((dir / "absent.json").string(), base), ConfigError);

    CHECK(cfg::hex64(cfg::fnv1a("")) == "cbf29ce484222325");
    CHECK(cfg::hex64(cfg::fnv1a("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("learning rate decays linearly to the configured fraction", "[training]") {
    const world::World w = world::generate_world(tiny_world());
    Phase1Config pc = tiny_schedule();
    const auto corpus = world::generate_parallel_corpus(w, 16, 1);
    auto run = [&](double lr_end) {
        pc.lr_end = lr_end;
        Phase1Model m(tiny_model(), 4, w, 9);
        train_phase1(m, m.examples(corpus), w.space, pc, 9);
        return flat(m.params());
    };
    // one epoch never decays
    pc.epochs_xe = 1;
    pc.epochs_joint = 0;
    CHECK(run(1.0) == run(0.5));
    pc.epochs_xe = 3;
    CHECK(run(1.0) != run(0.5));
}
