// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-phase training.
//
// Phase 1 learns, from a source-language corpus, to caption a source scene
// graph in both languages: the x branch embeds source nodes directly and
// reconstructs the source sentence; the y branch maps nodes through the
// cross-lingual graph mapping and generates the target sentence. Training is
// cross-entropy only for the warm-up epochs, then cross-entropy plus the
// exponentiated-KL alignment of the two branches' feature distributions.
//
// Phase 2 freezes the mapping, the y encoder and the y decoder and learns
// per-type pointwise mappers between image-side and sentence-side node
// features with adversarial and cycle-consistency losses.

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "unison/decoder.hpp"
#include "unison/hgm.hpp"
#include "unison/sgencoder.hpp"
#include "unison/synthworld.hpp"
#include "unison/training/losses.hpp"

namespace unison::train {

struct ModelConfig {
    std::size_t model_dim = 1000;
    std::size_t hidden = 1000;
    std::size_t attention = 512;
    std::size_t triplet = 1000;
    std::size_t word_dim = 300;
    std::size_t key_dim = 128;
    std::size_t gate_hidden = 256;
    std::size_t sub_width = 300;
    std::size_t max_len = 16;
    bool static_attention = false;
    /// Decoder word embeddings start from the language's word vectors and
    /// the output layer scores against them. Needs word_dim == embedding_dim.
    bool word_vectors = false;
    hgm::Fusion fusion = hgm::Fusion::hgm;
};

struct Phase1Config {
    std::size_t d_c = 100;
    std::size_t epochs_xe = 80;
    std::size_t epochs_joint = 20;
    double lr = 5e-5;
    std::size_t batch = 50;
    /// false: the joint epochs keep training on cross-entropy alone.
    bool joint = true;
    double kl_weight = 1.0;
    /// Learning rate of the last epoch as a fraction of `lr`, reached by
    /// linear per-epoch decay. 1 keeps it constant.
    double lr_end = 1.0;

    void validate() const;
};

struct Phase2Config {
    double lambda = 10.0;
    std::size_t disc_width = 1000;
    std::size_t mapper_hidden = 1000;
    GanVariant gan = GanVariant::non_saturating;
    std::size_t steps = 2000;
    std::size_t batch_rows = 64;
    double lr = 1e-4;

    void validate() const;
};

/// Training example: a source graph with encoded source and target
/// sentences (EOS-terminated, no BOS).
struct Example {
    sg::SceneGraph graph;
    std::vector<std::size_t> x_ids;
    std::vector<std::size_t> y_ids;
};

dec::Vocabulary source_vocabulary(const world::World& w);
dec::Vocabulary target_vocabulary(const world::World& w);

class Phase1Model {
public:
    Phase1Model(const ModelConfig& config, std::size_t d_c, const world::World& world, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::size_t d_c() const { return d_c_; }

    /// Every parameter phase 1 trains.
    num::ParamList params() const;
    /// Parameters phase 2 must leave untouched.
    num::ParamList frozen_params() const;

    std::vector<Example> examples(const world::ParallelCorpus& corpus) const;

    /// Source-branch node embeddings: a learned affine of the source vectors.
    NodeEmbeddings embed_source(const GraphBatch& batch, const emb::CrossLingualSpace& space) const;

    dec::Vocabulary vocab_x;
    dec::Vocabulary vocab_y;
    hgm::Hgm hgm;
    num::Linear x_input;
    enc::Encoder enc_x;
    enc::Encoder enc_y;
    dec::Decoder dec_x;
    dec::Decoder dec_y;
    KlProjection kl;

private:
    ModelConfig config_;
    std::size_t d_c_;
};

struct Phase1Losses {
    num::Tensor xe;        // summed over tokens and both branches, averaged over the batch
    num::Tensor kl;        // empty unless requested
    std::size_t tokens = 0;
};

Phase1Losses phase1_losses(const Phase1Model& model, const std::vector<const Example*>& batch,
                           const emb::CrossLingualSpace& space, bool with_kl);

struct Phase1Report {
    std::vector<double> step_xe_per_token;
    std::vector<double> epoch_xe_per_token;
    std::vector<double> epoch_kl;
    double final_kl = 0.0;
};

struct Phase1Hooks {
    /// Called after every epoch with the epoch index; used for checkpointing.
    std::function<void(std::size_t epoch)> on_epoch;
    /// Early stop once an epoch's mean per-token cross-entropy falls below this.
    std::optional<double> stop_below;
};

/// Throws NumericError naming the epoch and step when the loss diverges.
Phase1Report train_phase1(Phase1Model& model, const std::vector<Example>& data, const emb::CrossLingualSpace& space,
                          const Phase1Config& config, std::uint64_t seed, const Phase1Hooks& hooks = {});

/// Mean KL objective over the examples (batches of `batch`), no gradients.
double evaluate_kl(const Phase1Model& model, const std::vector<Example>& data, const emb::CrossLingualSpace& space,
                   std::size_t batch);

// ---------------------------------------------------------------------------

class Phase2Model {
public:
    Phase2Model(std::size_t dim, const Phase2Config& config, std::uint64_t seed);

    num::ParamList generator_params() const;
    num::ParamList discriminator_params() const;
    num::ParamList params() const;

    std::array<Mapper, 3> to_sentence;
    std::array<Mapper, 3> to_image;
    std::array<Discriminator, 3> disc_sentence;
    std::array<Discriminator, 3> disc_image;
};

/// Encoded y-side node features of many graphs, pooled by type.
struct FeaturePools {
    std::array<num::Tensor, 3> rows;
};

/// HGM -> y encoder for every graph; the distortion, when given, models the
/// image modality and is applied to every encoded row.
FeaturePools encode_pools(const Phase1Model& model, const std::vector<sg::SceneGraph>& graphs,
                          const emb::CrossLingualSpace& space, const world::Distortion* distortion);

struct Phase2Report {
    std::uint64_t frozen_checksum_before = 0;
    std::uint64_t frozen_checksum_after = 0;
    bool checksum_constant = true;
    std::vector<double> cycle;          // per logged step
    std::vector<double> disc_value;
    std::array<double, 3> final_cycle_per_dim{};
};

Phase2Report train_phase2(const Phase1Model& frozen, Phase2Model& cmm, const FeaturePools& image,
                          const FeaturePools& sentence, const Phase2Config& config, std::uint64_t seed);

/// Cycle loss over whole pools divided by the feature width, per type.
std::array<double, 3> cycle_per_dim(const Phase2Model& cmm, const FeaturePools& image, const FeaturePools& sentence);

// ---------------------------------------------------------------------------

struct InferenceOptions {
    std::size_t beam = 5;
    const Phase2Model* cmm = nullptr;
    const world::Distortion* distortion = nullptr;
};

/// Map -> encode (y) -> [distort] -> [image-to-sentence mappers] -> beam decode (y).
std::vector<sg::Tokens> infer_captions(const Phase1Model& model, const std::vector<sg::SceneGraph>& graphs,
                                       const emb::CrossLingualSpace& space, const InferenceOptions& options);
sg::Tokens infer_caption(const Phase1Model& model, const sg::SceneGraph& graph, const emb::CrossLingualSpace& space,
                         const InferenceOptions& options);

/// Greedy decodes of both branches for each example, EOS stripped.
struct Reconstructions {
    std::vector<std::vector<std::size_t>> x;
    std::vector<std::vector<std::size_t>> y;
};
Reconstructions greedy_reconstruct(const Phase1Model& model, const std::vector<Example>& data,
                                   const emb::CrossLingualSpace& space);

}  // namespace unison::train
