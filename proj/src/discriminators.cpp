// SPDX-License-Identifier: Apache-2.0

#include "phred/discriminators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phred {

Tensor WordProbs::mask_for_rows(int begin, int end) const {
    auto m = mask.values();
    std::vector<real> out(m.begin(), m.end());
    for (int t = 0; t < steps; ++t) {
        for (int r = 0; r < rows; ++r) {
            if (r < begin || r >= end) out[static_cast<std::size_t>(t * rows + r)] = 0;
        }
    }
    return Tensor::from(mask.shape(), std::move(out));
}

std::vector<double> WordProbs::mean_log_per_row() const {
    std::vector<double> sums(static_cast<std::size_t>(rows), 0.0), counts(static_cast<std::size_t>(rows), 0.0);
    auto p = probs.values();
    auto m = mask.values();
    for (int t = 0; t < steps; ++t) {
        for (int r = 0; r < rows; ++r) {
            const auto i = static_cast<std::size_t>(t * rows + r);
            if (m[i] == 0) continue;
            sums[static_cast<std::size_t>(r)] += std::log(std::clamp(static_cast<double>(p[i]), 1e-7, 1.0 - 1e-7));
            counts[static_cast<std::size_t>(r)] += 1;
        }
    }
    for (std::size_t r = 0; r < sums.size(); ++r) sums[r] = counts[r] > 0 ? sums[r] / counts[r] : 0.0;
    return sums;
}

// ---- D_adv --------------------------------------------------------------------

AdvDiscriminator AdvDiscriminator::create(ParameterStore& store, const ModelShape& shape, bool conditioned,
                                          CounterRng& rng) {
    if (conditioned && !shape.attributes) throw std::invalid_argument("conditioned discriminator needs attributes");
    AdvDiscriminator d;
    d.conditioned_ = conditioned;
    const int in = shape.embedding_size + (conditioned ? shape.attribute_size : 0);
    auto r = rng.fork(21);
    d.rnn_ = BiGru::create(store, "adv_discriminator.rnn", in, shape.hidden_size, shape.layers,
                           ParamGroup::adv_discriminator, r);
    r = rng.fork(22);
    d.head_ = Linear::create(store, "adv_discriminator.head", 2 * shape.hidden_size, 1, ParamGroup::adv_discriminator, r);
    return d;
}

WordProbs AdvDiscriminator::word_probs(const SharedEncoder& shared, const std::vector<Tensor>& context,
                                       const TokenMatrix& utterance, std::span<const int> target_attributes) const {
    if (conditioned_ != !target_attributes.empty()) {
        throw std::invalid_argument(conditioned_ ? "adversarial discriminator needs the target attribute"
                                                 : "unconditioned adversarial discriminator takes no attribute");
    }
    if (utterance.cols < 1) throw std::invalid_argument("adversarial discriminator: empty utterance");
    Tensor attr;
    if (conditioned_) attr = shared.embed_attributes(target_attributes);
    std::vector<Tensor> inputs, masks;
    for (int t = 0; t < utterance.cols; ++t) {
        Tensor words = shared.embed_words(utterance.column(t));
        inputs.push_back(conditioned_ ? concat({words, attr}) : words);
        masks.push_back(utterance.mask_column(t));
    }
    const auto out = rnn_.run(inputs, masks, context);
    WordProbs wp;
    wp.rows = utterance.rows;
    wp.steps = utterance.cols;
    wp.probs = sigmoid(head_(concat_rows(out.top)));
    wp.mask = concat_rows(masks);
    return wp;
}

// ---- D_att --------------------------------------------------------------------

AttDiscriminator AttDiscriminator::create(ParameterStore& store, const ModelShape& shape, CounterRng& rng) {
    if (!shape.attributes) throw std::invalid_argument("attribute discriminator needs attributes");
    AttDiscriminator d;
    auto r = rng.fork(31);
    d.rnn_ = StackedGru::create(store, "att_discriminator.rnn", shape.embedding_size, shape.hidden_size, shape.layers,
                                ParamGroup::att_discriminator, r);
    r = rng.fork(32);
    d.head_ = Linear::create(store, "att_discriminator.head", shape.hidden_size, shape.attribute_count,
                             ParamGroup::att_discriminator, r);
    return d;
}

Tensor AttDiscriminator::logits(const SharedEncoder& shared, const std::vector<Tensor>& context,
                                const TokenMatrix& utterance) const {
    if (utterance.cols < 1) throw std::invalid_argument("attribute discriminator: empty utterance");
    std::vector<Tensor> hidden = context;
    for (int t = 0; t < utterance.cols; ++t) {
        hidden = rnn_.step(shared.embed_words(utterance.column(t)), hidden, utterance.mask_column(t));
    }
    return head_(hidden.back());
}

// ---- accuracy -------------------------------------------------------------------

double adv_accuracy(std::span<const double> ground_truth, std::span<const double> generated) {
    const std::size_t total = ground_truth.size() + generated.size();
    if (total == 0) throw std::invalid_argument("adv_accuracy: no words to classify");
    std::size_t correct = 0;
    for (double p : ground_truth) correct += p > 0.5 ? 1 : 0;
    for (double p : generated) correct += p < 0.5 ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(total);
}

double adv_accuracy(const WordProbs& probs, int gt_begin, int gt_end, int gen_begin, int gen_end) {
    std::vector<double> gt, gen;
    auto p = probs.probs.values();
    auto m = probs.mask.values();
    for (int t = 0; t < probs.steps; ++t) {
        for (int r = 0; r < probs.rows; ++r) {
            const auto i = static_cast<std::size_t>(t * probs.rows + r);
            if (m[i] == 0) continue;
            if (r >= gt_begin && r < gt_end) gt.push_back(p[i]);
            if (r >= gen_begin && r < gen_end) gen.push_back(p[i]);
        }
    }
    return adv_accuracy(gt, gen);
}

}  // namespace phred
