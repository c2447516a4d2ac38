// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/training/losses.hpp"

#include "unison/errors.hpp"

namespace unison::train {

using num::Tensor;

const char* to_string(GanVariant v) { return v == GanVariant::minimax ? "minimax" : "non_saturating"; }

GanVariant gan_variant_from_string(const std::string& s) {
    if (s == "minimax") return GanVariant::minimax;
    if (s == "non_saturating") return GanVariant::non_saturating;
    throw ContractError("unknown gan variant '" + s + "' (minimax, non_saturating)");
}

Tensor exp_kl(const Tensor& p, const Tensor& q) {
    if (p.cols() != q.cols()) throw DimensionError("exp_kl: distribution widths differ");
    const Tensor pm = num::mean_rows(p);
    const Tensor qm = num::mean_rows(q);
    return num::exp(num::sum(num::mul(pm, num::sub(num::log(pm), num::log(qm)))));
}

KlProjection::KlProjection(std::size_t dim, std::size_t d_c, Rng& rng) {
    if (d_c < 2) throw ContractError("KL projection width must be >= 2");
    for (num::Linear& l : proj) l = num::Linear(dim, d_c, rng);
}

void KlProjection::collect(num::ParamList& out, const std::string& prefix) const {
    static const char* names[] = {"object", "relation", "attribute"};
    for (std::size_t p = 0; p < 3; ++p) proj[p].collect(out, prefix + "." + names[p]);
}

Tensor kl_loss(const std::array<Tensor, 3>& x, const std::array<Tensor, 3>& y, const KlProjection& projection) {
    Tensor total;
    std::size_t empty = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        if (x[p].rows() == 0 || y[p].rows() == 0) {
            ++empty;
            continue;
        }
        const Tensor term = exp_kl(num::softmax(projection.proj[p](x[p])), num::softmax(projection.proj[p](y[p])));
        total = total.empty() ? term : num::add(total, term);
    }
    if (total.empty()) return Tensor::scalar(static_cast<double>(empty));
    return empty == 0 ? total : num::add(total, Tensor::scalar(static_cast<double>(empty)));
}

Discriminator::Discriminator(std::size_t dim, std::size_t width, Rng& rng) : hidden(dim, width, rng), out(width, 1, rng) {}

Tensor Discriminator::logits(const Tensor& x) const { return out(num::leaky_relu(hidden(x), 0.2)); }

void Discriminator::collect(num::ParamList& list, const std::string& prefix) const {
    hidden.collect(list, prefix + ".hidden");
    out.collect(list, prefix + ".out");
}

Mapper::Mapper(std::size_t dim, std::size_t hidden, Rng& rng) : body({dim, hidden, hidden, dim}, rng) {
    num::Linear& last = body.layers.back();
    std::fill(last.weight.mutable_data().begin(), last.weight.mutable_data().end(), 0.0);
    std::fill(last.bias.mutable_data().begin(), last.bias.mutable_data().end(), 0.0);
}

Tensor Mapper::operator()(const Tensor& x) const { return num::add(x, body(x)); }

void Mapper::collect(num::ParamList& out, const std::string& prefix) const { body.collect(out, prefix); }

GanLosses gan_losses_from_logits(const Tensor& real_logits, const Tensor& fake_logits, GanVariant variant) {
    if (real_logits.rows() == 0 || fake_logits.rows() == 0) throw ContractError("gan_losses: empty batch");
    GanLosses out;
    // log(1 - sigmoid(l)) = log_sigmoid(-l)
    const Tensor log_fake_rejected = num::mean(num::log_sigmoid(num::scale(fake_logits, -1.0)));
    out.value = num::add(num::mean(num::log_sigmoid(real_logits)), log_fake_rejected);
    out.generator = variant == GanVariant::minimax ? log_fake_rejected
                                                   : num::scale(num::mean(num::log_sigmoid(fake_logits)), -1.0);
    return out;
}

GanLosses gan_losses(const Tensor& real, const Tensor& fake, const Discriminator& d, GanVariant variant) {
    return gan_losses_from_logits(d.logits(real), d.logits(fake), variant);
}

Tensor cycle_loss(const Tensor& image, const Tensor& sentence, const MapFn& to_sentence, const MapFn& to_image) {
    if (image.rows() == 0 || sentence.rows() == 0) throw ContractError("cycle_loss: empty batch");
    const Tensor back_image = to_image(to_sentence(image));
    const Tensor back_sentence = to_sentence(to_image(sentence));
    return num::add(num::mean(num::l1_distance(back_image, image)), num::mean(num::l1_distance(back_sentence, sentence)));
}

}  // namespace unison::train
