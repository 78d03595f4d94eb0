// SPDX-License-Identifier: Apache-2.0

#include "phred/model.hpp"

namespace phred {

PhredModel::PhredModel(Config config, Vocabulary vocabulary, AttributeVocabulary attributes)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)), attributes_(std::move(attributes)) {
    config_.validate();
    shape_ = ModelShape::from_config(config_, vocabulary_.size(), attributes_.size());
    CounterRng rng(config_.seed, 0x1a17);
    generator_ = Generator::create(store_, shape_, rng);
    if (has_adv_discriminator(config_.variant)) {
        adv_ = AdvDiscriminator::create(store_, shape_, config_.variant == Variant::phredgan_a, rng);
    }
    if (has_att_discriminator(config_.variant)) att_ = AttDiscriminator::create(store_, shape_, rng);
}

NoiseSpec PhredModel::noise(double std_dev) const {
    NoiseSpec spec;
    spec.mode = config_.noise_mode;
    spec.std_dev = config_.variant == Variant::phred ? 0.0 : std_dev;
    spec.dim = shape_.noise_size();
    return spec;
}

}  // namespace phred
