// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: cross-lingual distribution alignment (exponentiated
// KL over projected, batch-averaged feature distributions), the adversarial
// value and generator losses, and the L1 cycle-reconstruction loss. The
// per-token cross-entropy lives in Decoder::nll.

#pragma once

#include <array>
#include <functional>
#include <string>

#include "unison/numerics/nn.hpp"

namespace unison::train {

enum class GanVariant { minimax, non_saturating };
const char* to_string(GanVariant v);
GanVariant gan_variant_from_string(const std::string& s);

/// exp(KL(mean_rows(p) || mean_rows(q))) for row-stochastic p, q (B x c).
num::Tensor exp_kl(const num::Tensor& p, const num::Tensor& q);

/// Per-type projection to d_c followed by a softmax.
struct KlProjection {
    std::array<num::Linear, 3> proj;

    KlProjection() = default;
    KlProjection(std::size_t dim, std::size_t d_c, Rng& rng);
    void collect(num::ParamList& out, const std::string& prefix) const;
};

/// Sum over types of exp_kl(softmax(P_p x_p), softmax(P_p y_p)). Rows of
/// x_p / y_p are mean-pooled per-sentence features; a type with no rows on
/// either side contributes exactly 1.
num::Tensor kl_loss(const std::array<num::Tensor, 3>& x, const std::array<num::Tensor, 3>& y, const KlProjection& projection);

/// linear -> leaky_relu(0.2) -> linear(1); probability is sigmoid(logit).
struct Discriminator {
    num::Linear hidden;
    num::Linear out;

    Discriminator() = default;
    Discriminator(std::size_t dim, std::size_t width, Rng& rng);
    num::Tensor logits(const num::Tensor& x) const;
    void collect(num::ParamList& out, const std::string& prefix) const;
};

/// x + MLP(x) with two relu hidden layers; the last layer starts at zero so
/// the mapper starts as the identity.
struct Mapper {
    num::Mlp body;

    Mapper() = default;
    Mapper(std::size_t dim, std::size_t hidden, Rng& rng);
    num::Tensor operator()(const num::Tensor& x) const;
    void collect(num::ParamList& out, const std::string& prefix) const;
};

struct GanLosses {
    /// Adversarial value E[log D(real)] + E[log(1 - D(fake))]; D maximizes it.
    num::Tensor value;
    /// Generator objective to minimize under the chosen variant.
    num::Tensor generator;
};

/// Both expectations from discriminator logits on real and mapped rows.
GanLosses gan_losses_from_logits(const num::Tensor& real_logits, const num::Tensor& fake_logits, GanVariant variant);
GanLosses gan_losses(const num::Tensor& real, const num::Tensor& fake, const Discriminator& d, GanVariant variant);

using MapFn = std::function<num::Tensor(const num::Tensor&)>;

/// Mean row-wise L1 of g_back(g_fwd(a)) - a plus the same for b the other way.
num::Tensor cycle_loss(const num::Tensor& image, const num::Tensor& sentence, const MapFn& to_sentence, const MapFn& to_image);

}  // namespace unison::train
