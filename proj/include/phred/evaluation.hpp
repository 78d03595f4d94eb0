// SPDX-License-Identifier: Apache-2.0
//
// Model-level evaluation: teacher-forced perplexity, attribute discriminator
// accuracy and the text metrics report.

#ifndef PHRED_EVALUATION_HPP
#define PHRED_EVALUATION_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phred/inference.hpp"
#include "phred/metrics.hpp"

namespace phred {

struct PerplexityResult {
    double total_nll = 0;
    double tokens = 0;
    double perplexity = 0;
};

// Every response turn of every conversation, full softmax, noise drawn from
// `noise` with the given seed.
PerplexityResult teacher_forced_perplexity(const PhredModel& model, const std::vector<Conversation>& conversations,
                                           const NoiseSpec& noise, std::uint64_t seed);

// Fraction of ground-truth responses whose D_att argmax is the true c_{i+1}.
double attribute_accuracy(const PhredModel& model, const std::vector<Conversation>& conversations);

struct EvalReport {
    std::optional<double> perplexity;
    double bleu2 = 0, bleu4 = 0, rouge2_f1 = 0, distinct1 = 0, distinct2 = 0, nasl = 0;
    std::size_t samples = 0;

    nlohmann::ordered_json to_json() const;
};

EvalReport evaluate_text(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);

struct HypothesisRecord {
    std::string context_id;
    std::string hypothesis;
    std::string reference;
};

std::vector<HypothesisRecord> read_hypothesis_file(const std::filesystem::path& path);
void write_hypothesis_file(const std::filesystem::path& path, const std::vector<HypothesisRecord>& records);

// Top-ranked response for every response turn (context = all earlier turns).
std::vector<HypothesisRecord> generate_responses(const PhredModel& model, const std::vector<Conversation>& conversations,
                                                 int num_candidates, double alpha, std::uint64_t seed);

}  // namespace phred

#endif  // PHRED_EVALUATION_HPP
