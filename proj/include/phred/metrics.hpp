// SPDX-License-Identifier: Apache-2.0
//
// Automatic response metrics over tokenised hypotheses and references, and
// the aggregation of human rank judgements.

#ifndef PHRED_METRICS_HPP
#define PHRED_METRICS_HPP

#include <string>
#include <vector>

namespace phred {

using Sentence = std::vector<std::string>;

// Corpus-level BLEU up to order n with clipped counts, uniform weights and the
// brevity penalty exp(1 - r/c) when c < r. A zero clipped count contributes
// 1e-9 instead of zero. Throws std::invalid_argument on misaligned inputs.
double bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references, int n);

// Bigram F1 with matches, hypothesis bigrams and reference bigrams summed over
// the corpus (clipped multiset overlap). 0 when either side has no bigrams.
double rouge2_f1(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);

// Unique n-grams / total n-grams across all hypotheses (0 if there are none).
double distinct_n(const std::vector<Sentence>& hypotheses, int n);

// Mean of |hyp| / |ref|. Throws on an empty reference.
double nasl(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);

// exp(total negative log-likelihood / token count).
double perplexity_from_nll(double total_nll, double tokens);

struct HumanEvalScore {
    double mean = 0;
    double std_error = 0;
};

// ranks[sample][judge][model] in 0..N-1 (N-1 = best), each judge's row a
// permutation. Score = rank / (N - 1), averaged over samples and judges;
// stderr = sqrt(sum over samples of the between-judge variance / samples^2)
// using the population variance.
std::vector<HumanEvalScore> human_eval_aggregate(const std::vector<std::vector<std::vector<int>>>& ranks);

}  // namespace phred

#endif  // PHRED_METRICS_HPP
