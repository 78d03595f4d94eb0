// SPDX-License-Identifier: Apache-2.0
//
// Word-level adversarial discriminator D_adv and utterance-level attribute
// discriminator D_att. Both read the shared word embedding and start their
// recurrences from the context state h_i.

#ifndef PHRED_DISCRIMINATORS_HPP
#define PHRED_DISCRIMINATORS_HPP

#include <span>
#include <vector>

#include "phred/generator.hpp"

namespace phred {

// Per-word outputs flattened position-major: entry t * rows + r is word t of row r.
struct WordProbs {
    Tensor probs;  // (T*rows x 1) in (0, 1)
    Tensor mask;   // (T*rows x 1) constant, 1 on real words
    int rows = 0;
    int steps = 0;

    // Mask restricted to rows [begin, end).
    Tensor mask_for_rows(int begin, int end) const;
    // Mean log-probability over the real words of each row.
    std::vector<double> mean_log_per_row() const;
};

class AdvDiscriminator {
public:
    // `conditioned`: each word input also carries the target attribute embedding.
    static AdvDiscriminator create(ParameterStore& store, const ModelShape& shape, bool conditioned, CounterRng& rng);

    bool conditioned() const { return conditioned_; }
    // `target_attributes` must be given iff the discriminator is conditioned.
    WordProbs word_probs(const SharedEncoder& shared, const std::vector<Tensor>& context, const TokenMatrix& utterance,
                         std::span<const int> target_attributes = {}) const;
    Linear& head() { return head_; }

private:
    bool conditioned_ = false;
    BiGru rnn_;
    Linear head_;
};

class AttDiscriminator {
public:
    static AttDiscriminator create(ParameterStore& store, const ModelShape& shape, CounterRng& rng);

    // Unnormalised scores over attributes, (rows x Vc).
    Tensor logits(const SharedEncoder& shared, const std::vector<Tensor>& context, const TokenMatrix& utterance) const;
    Tensor probabilities(const SharedEncoder& shared, const std::vector<Tensor>& context,
                         const TokenMatrix& utterance) const {
        return softmax(logits(shared, context, utterance));
    }
    Linear& head() { return head_; }

private:
    StackedGru rnn_;
    Linear head_;
};

// Fraction of real words classified correctly: ground truth needs p > 0.5,
// generated needs p < 0.5; p == 0.5 is always wrong.
double adv_accuracy(std::span<const double> ground_truth, std::span<const double> generated);
// Same, reading the masked entries of two row ranges of one WordProbs.
double adv_accuracy(const WordProbs& probs, int gt_begin, int gt_end, int gen_begin, int gen_end);

}  // namespace phred

#endif  // PHRED_DISCRIMINATORS_HPP
