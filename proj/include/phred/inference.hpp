// SPDX-License-Identifier: Apache-2.0
//
// Noise-driven greedy generation, discriminator ranking and the linear search
// over the inference noise level.

#ifndef PHRED_INFERENCE_HPP
#define PHRED_INFERENCE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "phred/model.hpp"

namespace phred {

struct GenerationRequest {
    std::vector<Turn> context;  // oldest first; only the last max_turns are used
    int target_attribute = 0;
    int num_candidates = 1;
    int max_len = 20;
    double alpha = 1.0;  // noise std at inference
    std::uint64_t seed = 0;
};

struct GenerationCandidate {
    std::vector<int> tokens;  // ends with EOS unless max_len was reached
    std::string text;
    std::vector<double> word_probs;
    double adv_score = 0;                     // mean log D_adv over the words
    std::optional<double> att_log_confidence; // log D_att(c | .), phredgan_d
    double rank_score = 0;
};

// phred and hredgan/phredgan_a: the adversarial mean log-probability;
// phredgan_d: 0.5 * (adv_score + att_log_confidence / length).
double rank_score(Variant variant, double adv_score, std::optional<double> att_log_confidence, std::size_t length);

// Encodes the (capped) context into a single-row state.
ContextState encode_context(const PhredModel& model, const std::vector<Turn>& context);

// Returns candidates sorted by rank score, best first (stable on ties). For
// phred, a single noiseless greedy decode with score 0.
std::vector<GenerationCandidate> generate(const PhredModel& model, const GenerationRequest& request);

// Greedy decode of every row of `state` with the given noise draws.
std::vector<std::vector<int>> greedy_decode(const PhredModel& model, const ContextState& state,
                                            const std::vector<int>& target_attributes,
                                            const std::vector<Tensor>& noise, int max_len);

struct AlphaSearchResult {
    std::vector<std::pair<double, double>> table;  // (alpha, mean -log D_adv per generated word)
    double best_alpha = 0;
    double best_score = 0;
};

// Mean over generated words of -log D_adv when decoding every validation turn
// once (L = 1) at noise level alpha. The same seed reuses the same standard
// normal draws for every alpha.
double alpha_score(const PhredModel& model, const std::vector<Conversation>& validation, double alpha,
                   std::uint64_t seed);
// Index of the smallest score; ties go to the earlier (smaller) alpha.
std::size_t select_alpha(const std::vector<std::pair<double, double>>& table);
AlphaSearchResult alpha_search(const PhredModel& model, const std::vector<Conversation>& validation,
                               const std::vector<double>& grid, std::uint64_t seed);
std::vector<double> default_alpha_grid();

}  // namespace phred

#endif  // PHRED_INFERENCE_HPP
