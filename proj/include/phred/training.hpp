// SPDX-License-Identifier: Apache-2.0
//
// Gated adversarial training. Each step encodes a mini-batch of conversations
// turn by turn, scores teacher-forced responses, samples generated responses,
// measures the word-level discriminator accuracy and then decides which
// updates run:
//   accuracy <  acc_d_threshold  -> discriminator update
//   accuracy <  acc_g_threshold  -> generator update with the MLE term only
//   otherwise                    -> generator update with every term

#ifndef PHRED_TRAINING_HPP
#define PHRED_TRAINING_HPP

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phred/corpus.hpp"
#include "phred/model.hpp"

namespace phred {

enum class GeneratorMode { mle_only, full, none };
const char* to_string(GeneratorMode mode);

struct UpdateDecision {
    bool update_discriminator = false;
    GeneratorMode generator = GeneratorMode::mle_only;
};

// phred has no discriminator and always trains on the MLE term alone.
UpdateDecision decide_updates(Variant variant, double accuracy, double acc_d_threshold, double acc_g_threshold);

// Losses of one mini-batch, all sharing one graph.
struct BatchLosses {
    Tensor mle;
    Tensor d_adv, g_adv;  // undefined for phred
    Tensor d_att, g_att;  // phredgan_d only
    double accuracy = -1;  // D_adv word accuracy; -1 when there is no discriminator
    std::size_t response_tokens = 0;
};

BatchLosses compute_batch_losses(const PhredModel& model, const Batch& batch, const NoiseSpec& noise, CounterRng& rng);

// lambda_m * MLE, plus lambda_g_adv * g_adv + lambda_g_att * g_att in full mode.
Tensor generator_objective(const BatchLosses& losses, const Config& config, GeneratorMode mode);
// d_adv (+ d_att for phredgan_d).
Tensor discriminator_objective(const BatchLosses& losses);

struct StepRecord {
    int epoch = 0;
    long step = 0;
    double mle = 0;
    double d_adv = 0, g_adv = 0;
    double d_att = 0, g_att = 0;
    double accuracy = -1;
    bool d_updated = false;
    GeneratorMode g_mode = GeneratorMode::none;
    double d_grad_norm = 0, g_grad_norm = 0;

    nlohmann::ordered_json to_json() const;
};

struct TrainReport {
    std::vector<StepRecord> steps;
    std::vector<std::filesystem::path> checkpoints;
    double wall_seconds = 0;
    int epochs_completed = 0;
    bool aborted = false;
    std::string abort_reason;
};

struct TrainOptions {
    // Checkpoints and the JSON-lines step log go here; empty disables both.
    std::filesystem::path out_dir;
    // Replaces the measured accuracy in the gating decision (scripted runs).
    std::function<std::optional<double>(long step)> accuracy_override;
    std::function<void(const StepRecord&)> on_step;
    // Called after every epoch; returning false stops training.
    std::function<bool(int epoch)> on_epoch;
    long max_steps = 0;  // 0 = no limit
};

TrainReport train(PhredModel& model, const std::vector<Conversation>& conversations, const TrainOptions& options = {});

}  // namespace phred

#endif  // PHRED_TRAINING_HPP
