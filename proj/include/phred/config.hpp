// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. On disk it is a flat JSON object; every key is optional
// and unknown keys are rejected by name.

#ifndef PHRED_CONFIG_HPP
#define PHRED_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace phred {

enum class Variant { phred, hredgan, phredgan_a, phredgan_d };

const char* to_string(Variant variant);
// Throws ConfigError listing the valid names.
Variant parse_variant(std::string_view name);
inline constexpr const char* kVariantNames = "phred, hredgan, phredgan_a, phredgan_d";

// Whether the variant has the word-level adversarial discriminator / the
// attribute discriminator / attribute embeddings at all.
bool has_adv_discriminator(Variant v);
bool has_att_discriminator(Variant v);
bool uses_attributes(Variant v);

enum class NoiseMode { utterance, word };
const char* to_string(NoiseMode mode);

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Config {
    Variant variant = Variant::phredgan_d;

    // corpus and batching
    int vocab_size = 2000;
    int max_len = 20;
    int max_turns = 5;
    int batch_size = 32;

    // model dimensions
    int layers = 2;
    int hidden_size = 64;
    int embedding_size = 32;  // also the noise width d_z
    int attribute_size = 32;
    int attention_size = 64;

    // noise
    NoiseMode noise_mode = NoiseMode::utterance;
    double noise_std = 1.0;

    // objective
    double lambda_g_adv = 1.0;
    double lambda_g_att = 1.0;  // forced to 0 unless variant is phredgan_d
    double lambda_m = 1.0;
    double acc_d_threshold = 0.99;
    double acc_g_threshold = 0.75;

    // optimisation
    double learning_rate = 0.5;
    double clip_norm = 5.0;
    int epochs = 10;
    std::uint64_t seed = 1;
    int checkpoint_every = 0;  // steps; 0 = only at the end
    int log_every = 50;

    // Defaults for a variant (lambda_g_att is 1 for phredgan_d, 0 otherwise).
    static Config for_variant(Variant v);

    // Checks ranges and cross-field rules; throws ConfigError.
    void validate() const;
    nlohmann::ordered_json to_json() const;
    static Config from_json(const nlohmann::json& j);
    static Config load(const std::filesystem::path& path);
};

}  // namespace phred

#endif  // PHRED_CONFIG_HPP
