// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. Probabilities entering a log are clamped to
// [1e-7, 1 - 1e-7].

#ifndef PHRED_LOSSES_HPP
#define PHRED_LOSSES_HPP

#include <span>
#include <vector>

#include "phred/corpus.hpp"
#include "phred/tensor.hpp"

namespace phred {

inline constexpr real kProbFloor = static_cast<real>(1e-7);

// Mean token cross-entropy over the positions where mask (N x 1) is 1.
// Throws std::invalid_argument when nothing is unmasked.
Tensor mle_loss(const Tensor& logits, std::span<const int> targets, const Tensor& mask);
// Per-position logits against a padded gold matrix.
Tensor mle_loss(const std::vector<Tensor>& logits, const TokenMatrix& gold);

// Masked mean of log(p) (complement: log(1 - p)) over an (N x 1) column.
Tensor masked_mean_log(const Tensor& probs, const Tensor& mask, bool complement = false);

struct AdversarialLoss {
    Tensor discriminator;  // -[mean log p_gt + mean log(1 - p_gen)]
    Tensor generator;      // -mean log p_gen
};

AdversarialLoss adv_loss(const Tensor& gt_probs, const Tensor& gt_mask, const Tensor& gen_probs,
                         const Tensor& gen_mask);
// Attribute-conditioned and unconditioned discriminators share the arithmetic;
// the difference lies in how the probabilities were produced.
inline AdversarialLoss adv_loss_a(const Tensor& gt_probs, const Tensor& gt_mask, const Tensor& gen_probs,
                                  const Tensor& gen_mask) {
    return adv_loss(gt_probs, gt_mask, gen_probs, gen_mask);
}
inline AdversarialLoss adv_loss_d(const Tensor& gt_probs, const Tensor& gt_mask, const Tensor& gen_probs,
                                  const Tensor& gen_mask) {
    return adv_loss(gt_probs, gt_mask, gen_probs, gen_mask);
}

struct AttributeLoss {
    Tensor discriminator;  // -mean log p_gt(c)
    Tensor generator;      // -mean log p_gen(c)
};

// Distributions are (rows x Vc); `targets` holds c_{i+1} per row.
AttributeLoss att_loss(const Tensor& gt_distribution, const Tensor& gen_distribution, std::span<const int> targets);

}  // namespace phred

#endif  // PHRED_LOSSES_HPP
