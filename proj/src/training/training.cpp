// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/training/training.hpp"

#include <cmath>
#include <numeric>

#include "unison/errors.hpp"
#include "unison/numerics/adam.hpp"

namespace unison::train {

using num::Tensor;

namespace {

constexpr std::size_t eval_chunk = 64;
constexpr std::size_t phase2_log_every = 50;
constexpr const char* type_names[] = {"object", "relation", "attribute"};

std::vector<const sg::SceneGraph*> pointers(const std::vector<sg::SceneGraph>& graphs, std::size_t begin, std::size_t end) {
    std::vector<const sg::SceneGraph*> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(&graphs[i]);
    return out;
}

dec::DecoderConfig decoder_config(const ModelConfig& c, std::size_t vocab) {
    dec::DecoderConfig d;
    d.feature_dim = c.model_dim;
    d.hidden = c.hidden;
    d.attention = c.attention;
    d.triplet = c.triplet;
    d.word_dim = c.word_dim;
    d.vocab = vocab;
    d.max_len = c.max_len;
    d.static_attention = c.static_attention;
    d.tied_output = c.word_vectors;
    return d;
}

hgm::HgmConfig hgm_config(const ModelConfig& c, std::size_t embedding_dim) {
    hgm::HgmConfig h;
    h.source_dim = embedding_dim;
    h.target_dim = embedding_dim;
    h.model_dim = c.model_dim;
    h.sub_width = c.sub_width;
    h.key_dim = c.key_dim;
    h.gate_hidden = c.gate_hidden;
    h.fusion = c.fusion;
    return h;
}

std::vector<std::string> grammar_tokens(const sg::ToyGrammar& g) {
    std::vector<std::string> out(g.nouns.begin(), g.nouns.end());
    out.insert(out.end(), g.verbs.begin(), g.verbs.end());
    out.insert(out.end(), g.attributes.begin(), g.attributes.end());
    out.push_back(g.connective);
    return out;
}

// Per-sentence mean of each feature type, keeping only sentences that have
// rows of that type.
std::array<Tensor, 3> pooled(const enc::EncodedFeatures& f, std::size_t dim) {
    std::array<Tensor, 3> out;
    for (std::size_t p = 0; p < 3; ++p) {
        const auto& owner = f.owner_of(p);
        if (owner.empty()) {
            out[p] = Tensor(0, dim);
            continue;
        }
        std::vector<bool> seen(f.graphs, false);
        for (std::size_t g : owner) seen[g] = true;
        std::vector<std::size_t> present;
        for (std::size_t g = 0; g < f.graphs; ++g)
            if (seen[g]) present.push_back(g);
        out[p] = num::gather_rows(num::segment_mean(f.of(p), owner, f.graphs), present);
    }
    return out;
}

void map_features(enc::EncodedFeatures& f, const std::array<const Mapper*, 3>& mappers) {
    for (std::size_t p = 0; p < 3; ++p) {
        Tensor& rows = p == 0 ? f.objects : (p == 1 ? f.relations : f.attributes);
        if (rows.rows() > 0 && mappers[p] != nullptr) rows = (*mappers[p])(rows);
    }
}

void distort(enc::EncodedFeatures& f, const world::Distortion& d) {
    f.objects = d.apply(f.objects);
    f.relations = d.apply(f.relations);
    f.attributes = d.apply(f.attributes);
}

}  // namespace

void Phase1Config::validate() const {
    if (d_c < 2) throw ContractError("phase1.d_c must be >= 2");
    if (batch == 0) throw ContractError("phase1.batch must be positive");
    if (!(lr > 0.0)) throw ContractError("phase1.lr must be positive");
    if (kl_weight < 0.0) throw ContractError("phase1.kl_weight must be non-negative");
    if (!(lr_end > 0.0 && lr_end <= 1.0)) throw ContractError("phase1.lr_end must be in (0, 1]");
}

void Phase2Config::validate() const {
    if (lambda < 0.0) throw ContractError("phase2.lambda must be non-negative");
    if (disc_width == 0 || mapper_hidden == 0) throw ContractError("phase2 widths must be positive");
    if (batch_rows == 0) throw ContractError("phase2.batch_rows must be positive");
    if (!(lr > 0.0)) throw ContractError("phase2.lr must be positive");
}

dec::Vocabulary source_vocabulary(const world::World& w) { return dec::Vocabulary(grammar_tokens(w.source_grammar)); }
dec::Vocabulary target_vocabulary(const world::World& w) { return dec::Vocabulary(grammar_tokens(w.target_grammar)); }

Phase1Model::Phase1Model(const ModelConfig& config, std::size_t d_c, const world::World& world, std::uint64_t seed)
    : vocab_x(source_vocabulary(world)), vocab_y(target_vocabulary(world)), config_(config), d_c_(d_c) {
    Rng rng(seed);
    const std::size_t e = world.config.embedding_dim;
    if (config.word_vectors && config.word_dim != e)
        throw ContractError("word_vectors needs word_dim (" + std::to_string(config.word_dim) + ") equal to the embedding width (" +
                            std::to_string(e) + ")");
    hgm = hgm::Hgm(hgm_config(config, e), rng);
    x_input = num::Linear(e, config.model_dim, rng);
    enc_x = enc::Encoder(config.model_dim, rng);
    enc_y = enc::Encoder(config.model_dim, rng);
    dec_x = dec::Decoder(decoder_config(config, vocab_x.size()), rng);
    dec_y = dec::Decoder(decoder_config(config, vocab_y.size()), rng);
    kl = KlProjection(config.model_dim, d_c, rng);
    if (config.word_vectors) {
        dec_x.load_word_vectors(vocab_x, world.space.source);
        dec_y.load_word_vectors(vocab_y, world.space.target);
    }
}

num::ParamList Phase1Model::params() const {
    num::ParamList out;
    hgm.collect(out, "hgm");
    x_input.collect(out, "x_input");
    enc_x.collect(out, "enc_x");
    enc_y.collect(out, "enc_y");
    dec_x.collect(out, "dec_x");
    dec_y.collect(out, "dec_y");
    kl.collect(out, "kl");
    return out;
}

num::ParamList Phase1Model::frozen_params() const {
    num::ParamList out;
    hgm.collect(out, "hgm");
    enc_y.collect(out, "enc_y");
    dec_y.collect(out, "dec_y");
    return out;
}

std::vector<Example> Phase1Model::examples(const world::ParallelCorpus& corpus) const {
    std::vector<Example> out;
    out.reserve(corpus.items.size());
    for (const auto& item : corpus.items) {
        Example ex{item.graph, vocab_x.encode(item.source), vocab_y.encode(item.target)};
        ex.x_ids.push_back(dec::Vocabulary::eos);
        ex.y_ids.push_back(dec::Vocabulary::eos);
        out.push_back(std::move(ex));
    }
    return out;
}

NodeEmbeddings Phase1Model::embed_source(const GraphBatch& batch, const emb::CrossLingualSpace& space) const {
    return {x_input(space.source.rows(batch.object_tokens)), x_input(space.source.rows(batch.predicate_tokens)),
            x_input(space.source.rows(batch.attribute_tokens))};
}

Phase1Losses phase1_losses(const Phase1Model& model, const std::vector<const Example*>& batch,
                           const emb::CrossLingualSpace& space, bool with_kl) {
    if (batch.empty()) throw ContractError("phase1_losses: empty batch");
    std::vector<const sg::SceneGraph*> graphs;
    std::vector<std::vector<std::size_t>> xt, yt;
    Phase1Losses out;
    for (const Example* ex : batch) {
        graphs.push_back(&ex->graph);
        xt.push_back(ex->x_ids);
        yt.push_back(ex->y_ids);
        out.tokens += ex->x_ids.size() + ex->y_ids.size();
    }
    const GraphBatch gb = GraphBatch::from(graphs);
    const enc::EncodedFeatures fx = model.enc_x(gb, model.embed_source(gb, space));
    const enc::EncodedFeatures fy = model.enc_y(gb, model.hgm.map_batch(gb, space));
    const Tensor nll = num::add(model.dec_x.nll(model.dec_x.prepare(fx), xt), model.dec_y.nll(model.dec_y.prepare(fy), yt));
    out.xe = num::scale(nll, 1.0 / static_cast<double>(batch.size()));
    if (with_kl) {
        const std::size_t d = model.config().model_dim;
        out.kl = kl_loss(pooled(fx, d), pooled(fy, d), model.kl);
    }
    return out;
}

Phase1Report train_phase1(Phase1Model& model, const std::vector<Example>& data, const emb::CrossLingualSpace& space,
                          const Phase1Config& config, std::uint64_t seed, const Phase1Hooks& hooks) {
    config.validate();
    if (data.empty()) throw ContractError("train_phase1: no training data");
    Rng rng(seed);
    const num::ParamList params = model.params();
    std::vector<Tensor> tensors = num::tensors_of(params);
    num::Adam adam({.lr = config.lr});

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    Phase1Report report;
    const std::size_t epochs = config.epochs_xe + config.epochs_joint;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const bool with_kl = config.joint && epoch >= config.epochs_xe;
        if (epochs > 1)
            adam.set_lr(config.lr * (1.0 - (1.0 - config.lr_end) * static_cast<double>(epoch) / static_cast<double>(epochs - 1)));
        rng.shuffle(order);
        double xe_sum = 0.0, kl_sum = 0.0;
        std::size_t tokens = 0, steps = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch, ++steps) {
            const std::size_t end = std::min(order.size(), begin + config.batch);
            std::vector<const Example*> batch;
            for (std::size_t i = begin; i < end; ++i) batch.push_back(&data[order[i]]);

            num::zero_grads(params);
            Phase1Losses l;
            Tensor loss;
            try {
                l = phase1_losses(model, batch, space, with_kl);
                loss = with_kl ? num::add(l.xe, num::scale(l.kl, config.kl_weight)) : l.xe;
            } catch (const NumericError& e) {
                num::tape().clear();
                throw NumericError("phase 1 diverged at epoch " + std::to_string(epoch + 1) + ", step " +
                                   std::to_string(steps + 1) + ": " + e.what());
            }
            if (!std::isfinite(loss.item())) {
                num::tape().clear();
                throw NumericError("phase 1 loss is non-finite at epoch " + std::to_string(epoch + 1) + ", step " +
                                   std::to_string(steps + 1));
            }
            num::backward(loss);
            adam.step(tensors);

            const double batch_xe = l.xe.item() * static_cast<double>(batch.size());
            report.step_xe_per_token.push_back(batch_xe / static_cast<double>(l.tokens));
            xe_sum += batch_xe;
            tokens += l.tokens;
            if (with_kl) kl_sum += l.kl.item();
        }
        report.epoch_xe_per_token.push_back(xe_sum / static_cast<double>(tokens));
        report.epoch_kl.push_back(with_kl ? kl_sum / static_cast<double>(steps) : 0.0);
        if (hooks.on_epoch) hooks.on_epoch(epoch);
        if (hooks.stop_below && report.epoch_xe_per_token.back() < *hooks.stop_below) break;
    }
    report.final_kl = evaluate_kl(model, data, space, config.batch);
    return report;
}

double evaluate_kl(const Phase1Model& model, const std::vector<Example>& data, const emb::CrossLingualSpace& space,
                   std::size_t batch) {
    if (data.empty() || batch == 0) throw ContractError("evaluate_kl: empty data or batch");
    num::NoGradGuard guard;
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += batch, ++batches) {
        std::vector<const Example*> b;
        for (std::size_t i = begin; i < std::min(data.size(), begin + batch); ++i) b.push_back(&data[i]);
        total += phase1_losses(model, b, space, true).kl.item();
    }
    return total / static_cast<double>(batches);
}

// ---------------------------------------------------------------------------

Phase2Model::Phase2Model(std::size_t dim, const Phase2Config& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    for (std::size_t p = 0; p < 3; ++p) {
        to_sentence[p] = Mapper(dim, config.mapper_hidden, rng);
        to_image[p] = Mapper(dim, config.mapper_hidden, rng);
        disc_sentence[p] = Discriminator(dim, config.disc_width, rng);
        disc_image[p] = Discriminator(dim, config.disc_width, rng);
    }
}

num::ParamList Phase2Model::generator_params() const {
    num::ParamList out;
    for (std::size_t p = 0; p < 3; ++p) {
        to_sentence[p].collect(out, std::string("cmm.to_sentence.") + type_names[p]);
        to_image[p].collect(out, std::string("cmm.to_image.") + type_names[p]);
    }
    return out;
}

num::ParamList Phase2Model::discriminator_params() const {
    num::ParamList out;
    for (std::size_t p = 0; p < 3; ++p) {
        disc_sentence[p].collect(out, std::string("cmm.disc_sentence.") + type_names[p]);
        disc_image[p].collect(out, std::string("cmm.disc_image.") + type_names[p]);
    }
    return out;
}

num::ParamList Phase2Model::params() const {
    num::ParamList out = generator_params();
    num::ParamList d = discriminator_params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

FeaturePools encode_pools(const Phase1Model& model, const std::vector<sg::SceneGraph>& graphs,
                          const emb::CrossLingualSpace& space, const world::Distortion* distortion) {
    num::NoGradGuard guard;
    std::array<std::vector<Tensor>, 3> parts;
    for (std::size_t begin = 0; begin < graphs.size(); begin += eval_chunk) {
        const GraphBatch gb = GraphBatch::from(pointers(graphs, begin, std::min(graphs.size(), begin + eval_chunk)));
        enc::EncodedFeatures f = model.enc_y(gb, model.hgm.map_batch(gb, space));
        if (distortion != nullptr) distort(f, *distortion);
        for (std::size_t p = 0; p < 3; ++p)
            if (f.of(p).rows() > 0) parts[p].push_back(f.of(p));
    }
    FeaturePools out;
    for (std::size_t p = 0; p < 3; ++p)
        out.rows[p] = parts[p].empty() ? Tensor(0, model.config().model_dim) : num::concat_rows(parts[p]);
    return out;
}

Phase2Report train_phase2(const Phase1Model& frozen, Phase2Model& cmm, const FeaturePools& image,
                          const FeaturePools& sentence, const Phase2Config& config, std::uint64_t seed) {
    config.validate();
    Phase2Report report;
    const num::ParamList fixed = frozen.frozen_params();
    report.frozen_checksum_before = num::checksum(fixed);

    const num::ParamList all = cmm.params();
    std::vector<Tensor> gen = num::tensors_of(cmm.generator_params());
    std::vector<Tensor> disc = num::tensors_of(cmm.discriminator_params());
    num::Adam g_adam({.lr = config.lr});
    num::Adam d_adam({.lr = config.lr});
    Rng rng(seed);

    auto sample = [&](const Tensor& pool) {
        std::vector<std::size_t> idx(config.batch_rows);
        for (std::size_t& i : idx) i = rng.index(pool.rows());
        return num::gather_rows(pool, idx);
    };

    std::vector<std::size_t> active;
    for (std::size_t p = 0; p < 3; ++p)
        if (image.rows[p].rows() > 0 && sentence.rows[p].rows() > 0) active.push_back(p);
    if (active.empty()) throw ContractError("train_phase2: no feature type has rows on both sides");

    for (std::size_t step = 0; step < config.steps; ++step) {
        std::array<Tensor, 3> img, sen;
        for (std::size_t p : active) {
            img[p] = sample(image.rows[p]);
            sen[p] = sample(sentence.rows[p]);
        }

        // Discriminators ascend the adversarial value.
        num::zero_grads(all);
        Tensor value;
        for (std::size_t p : active) {
            const Tensor v = num::add(
                gan_losses(sen[p], cmm.to_sentence[p](img[p]).detach(), cmm.disc_sentence[p], config.gan).value,
                gan_losses(img[p], cmm.to_image[p](sen[p]).detach(), cmm.disc_image[p], config.gan).value);
            value = value.empty() ? v : num::add(value, v);
        }
        num::backward(num::scale(value, -1.0));
        d_adam.step(disc);

        num::zero_grads(all);
        Tensor gen_loss, cycle;
        for (std::size_t p : active) {
            const Tensor g = num::add(gan_losses(sen[p], cmm.to_sentence[p](img[p]), cmm.disc_sentence[p], config.gan).generator,
                                      gan_losses(img[p], cmm.to_image[p](sen[p]), cmm.disc_image[p], config.gan).generator);
            const Tensor c = cycle_loss(img[p], sen[p], cmm.to_sentence[p], cmm.to_image[p]);
            gen_loss = gen_loss.empty() ? g : num::add(gen_loss, g);
            cycle = cycle.empty() ? c : num::add(cycle, c);
        }
        const Tensor total = num::add(gen_loss, num::scale(cycle, config.lambda));
        if (!std::isfinite(total.item())) {
            num::tape().clear();
            throw NumericError("phase 2 loss is non-finite at step " + std::to_string(step));
        }
        num::backward(total);
        g_adam.step(gen);

        if (step % phase2_log_every == 0 || step + 1 == config.steps) {
            report.cycle.push_back(cycle.item());
            report.disc_value.push_back(value.item());
            if (num::checksum(fixed) != report.frozen_checksum_before) report.checksum_constant = false;
        }
    }
    report.frozen_checksum_after = num::checksum(fixed);
    if (report.frozen_checksum_after != report.frozen_checksum_before) report.checksum_constant = false;
    report.final_cycle_per_dim = cycle_per_dim(cmm, image, sentence);
    return report;
}

std::array<double, 3> cycle_per_dim(const Phase2Model& cmm, const FeaturePools& image, const FeaturePools& sentence) {
    num::NoGradGuard guard;
    std::array<double, 3> out{};
    for (std::size_t p = 0; p < 3; ++p) {
        if (image.rows[p].rows() == 0 || sentence.rows[p].rows() == 0) continue;
        const double loss = cycle_loss(image.rows[p], sentence.rows[p], cmm.to_sentence[p], cmm.to_image[p]).item();
        out[p] = loss / static_cast<double>(image.rows[p].cols());
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<sg::Tokens> infer_captions(const Phase1Model& model, const std::vector<sg::SceneGraph>& graphs,
                                       const emb::CrossLingualSpace& space, const InferenceOptions& options) {
    if (options.beam == 0) throw ContractError("beam width must be positive");
    num::NoGradGuard guard;
    std::vector<sg::Tokens> out;
    out.reserve(graphs.size());
    for (std::size_t begin = 0; begin < graphs.size(); begin += eval_chunk) {
        const std::size_t end = std::min(graphs.size(), begin + eval_chunk);
        const GraphBatch gb = GraphBatch::from(pointers(graphs, begin, end));
        enc::EncodedFeatures f = model.enc_y(gb, model.hgm.map_batch(gb, space));
        if (options.distortion != nullptr) distort(f, *options.distortion);
        if (options.cmm != nullptr)
            map_features(f, {&options.cmm->to_sentence[0], &options.cmm->to_sentence[1], &options.cmm->to_sentence[2]});
        const dec::PreparedFeatures prepared = model.dec_y.prepare(f);
        for (std::size_t g = 0; g < gb.graphs; ++g)
            out.push_back(model.vocab_y.decode(dec::beam_decode(model.dec_y, prepared, g, options.beam).tokens));
    }
    return out;
}

sg::Tokens infer_caption(const Phase1Model& model, const sg::SceneGraph& graph, const emb::CrossLingualSpace& space,
                         const InferenceOptions& options) {
    return infer_captions(model, {graph}, space, options).front();
}

Reconstructions greedy_reconstruct(const Phase1Model& model, const std::vector<Example>& data,
                                   const emb::CrossLingualSpace& space) {
    num::NoGradGuard guard;
    Reconstructions out;
    for (std::size_t begin = 0; begin < data.size(); begin += eval_chunk) {
        std::vector<const sg::SceneGraph*> graphs;
        for (std::size_t i = begin; i < std::min(data.size(), begin + eval_chunk); ++i) graphs.push_back(&data[i].graph);
        const GraphBatch gb = GraphBatch::from(graphs);
        auto x = model.dec_x.greedy(model.dec_x.prepare(model.enc_x(gb, model.embed_source(gb, space))));
        auto y = model.dec_y.greedy(model.dec_y.prepare(model.enc_y(gb, model.hgm.map_batch(gb, space))));
        out.x.insert(out.x.end(), x.begin(), x.end());
        out.y.insert(out.y.end(), y.begin(), y.end());
    }
    return out;
}

}  // namespace unison::train
