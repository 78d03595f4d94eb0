// SPDX-License-Identifier: Apache-2.0

#include "phred/losses.hpp"

#include <numeric>
#include <stdexcept>

namespace phred {

namespace {

double mask_count(const Tensor& mask) {
    auto m = mask.values();
    return std::accumulate(m.begin(), m.end(), 0.0);
}

Tensor negative_mean_log_pick(const Tensor& distribution, std::span<const int> targets) {
    if (distribution.rows() != static_cast<int>(targets.size())) {
        throw ShapeError("att_loss: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(distribution.rows()) + " rows");
    }
    return scale(mean(log(clamp(pick(distribution, targets), kProbFloor, 1 - kProbFloor))), -1);
}

}  // namespace

Tensor mle_loss(const Tensor& logits, std::span<const int> targets, const Tensor& mask) {
    const double n = mask_count(mask);
    if (n <= 0) throw std::invalid_argument("mle_loss: every position is masked");
    return scale(sum(mul(cross_entropy(logits, targets), mask)), static_cast<real>(1.0 / n));
}

Tensor mle_loss(const std::vector<Tensor>& logits, const TokenMatrix& gold) {
    if (static_cast<int>(logits.size()) != gold.cols) throw ShapeError("mle_loss: one logit block per gold position");
    std::vector<int> targets;
    std::vector<Tensor> masks;
    for (int t = 0; t < gold.cols; ++t) {
        const auto col = gold.column(t);
        targets.insert(targets.end(), col.begin(), col.end());
        masks.push_back(gold.mask_column(t));
    }
    return mle_loss(concat_rows(logits), targets, concat_rows(masks));
}

Tensor masked_mean_log(const Tensor& probs, const Tensor& mask, bool complement) {
    const double n = mask_count(mask);
    if (n <= 0) throw std::invalid_argument("adversarial loss: every position is masked");
    const Tensor p = clamp(complement ? one_minus(probs) : probs, kProbFloor, 1 - kProbFloor);
    return scale(sum(mul(log(p), mask)), static_cast<real>(1.0 / n));
}

AdversarialLoss adv_loss(const Tensor& gt_probs, const Tensor& gt_mask, const Tensor& gen_probs,
                         const Tensor& gen_mask) {
    const Tensor gen_log = masked_mean_log(gen_probs, gen_mask);
    AdversarialLoss out;
    out.discriminator =
        scale(add(masked_mean_log(gt_probs, gt_mask), masked_mean_log(gen_probs, gen_mask, true)), -1);
    out.generator = scale(gen_log, -1);
    return out;
}

AttributeLoss att_loss(const Tensor& gt_distribution, const Tensor& gen_distribution, std::span<const int> targets) {
    return {negative_mean_log_pick(gt_distribution, targets), negative_mean_log_pick(gen_distribution, targets)};
}

}  // namespace phred
