// SPDX-License-Identifier: Apache-2.0
//
// A complete model for one variant: vocabularies, parameter store, generator
// and whichever discriminators the variant has.

#ifndef PHRED_MODEL_HPP
#define PHRED_MODEL_HPP

#include <optional>

#include "phred/config.hpp"
#include "phred/discriminators.hpp"
#include "phred/generator.hpp"
#include "phred/text.hpp"

namespace phred {

class PhredModel {
public:
    // Parameters are initialised from config.seed.
    PhredModel(Config config, Vocabulary vocabulary, AttributeVocabulary attributes);

    PhredModel(const PhredModel&) = delete;
    PhredModel& operator=(const PhredModel&) = delete;
    PhredModel(PhredModel&&) = default;
    PhredModel& operator=(PhredModel&&) = default;

    const Config& config() const { return config_; }
    Variant variant() const { return config_.variant; }
    const Vocabulary& vocabulary() const { return vocabulary_; }
    const AttributeVocabulary& attributes() const { return attributes_; }
    const ModelShape& shape() const { return shape_; }

    ParameterStore& parameters() { return store_; }
    const ParameterStore& parameters() const { return store_; }
    const Generator& generator() const { return generator_; }
    const SharedEncoder& shared() const { return generator_.shared(); }
    const AdvDiscriminator* adv() const { return adv_ ? &*adv_ : nullptr; }
    const AttDiscriminator* att() const { return att_ ? &*att_ : nullptr; }
    AdvDiscriminator* adv() { return adv_ ? &*adv_ : nullptr; }
    AttDiscriminator* att() { return att_ ? &*att_ : nullptr; }

    // Noise at the given std; phred has no noise input (always zeros).
    NoiseSpec noise(double std_dev) const;
    NoiseSpec training_noise() const { return noise(config_.noise_std); }

private:
    Config config_;
    Vocabulary vocabulary_;
    AttributeVocabulary attributes_;
    ModelShape shape_;
    ParameterStore store_;
    Generator generator_;
    std::optional<AdvDiscriminator> adv_;
    std::optional<AttDiscriminator> att_;
};

}  // namespace phred

#endif  // PHRED_MODEL_HPP
