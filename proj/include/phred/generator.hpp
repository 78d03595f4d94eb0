// SPDX-License-Identifier: Apache-2.0
//
// Persona HRED generator: bidirectional utterance encoder (eRNN), context RNN
// (cRNN) fed with the source attribute, and a decoder (dRNN) conditioned on
// the target attribute, a noise sample and additive attention over the
// previous utterance.

#ifndef PHRED_GENERATOR_HPP
#define PHRED_GENERATOR_HPP

#include <span>
#include <vector>

#include "phred/config.hpp"
#include "phred/corpus.hpp"
#include "phred/nn.hpp"

namespace phred {

struct ModelShape {
    int vocab_size = 0;
    int attribute_count = 0;
    int layers = 0;
    int hidden_size = 0;
    int embedding_size = 0;
    int attribute_size = 0;
    int attention_size = 0;
    bool attributes = true;  // false for hredgan: no attribute embedding anywhere

    static ModelShape from_config(const Config& config, int vocab_size, int attribute_count);
    int noise_size() const { return embedding_size; }
};

// Parameters shared by the generator and both discriminators.
struct SharedEncoder {
    Tensor word_embedding;       // (V x d_emb)
    Tensor attribute_embedding;  // (Vc x d_attr), undefined without attributes
    BiGru utterance_rnn;
    Linear summary_projection;   // 2H -> H
    StackedGru context_rnn;

    static SharedEncoder create(ParameterStore& store, const ModelShape& shape, CounterRng& rng);
    Tensor embed_words(std::span<const int> ids) const;
    // Throws std::invalid_argument on an out-of-range attribute index.
    Tensor embed_attributes(std::span<const int> ids) const;
    bool has_attributes() const { return attribute_embedding.defined(); }
};

// Dialogue state after encoding turns 1..i.
struct ContextState {
    std::vector<Tensor> hidden;        // h_i per layer, (rows x H)
    std::vector<Tensor> memory;        // eRNN top outputs of turn i per position, (rows x 2H)
    std::vector<Tensor> memory_keys;   // memory projected by the attention key weights
    Tensor memory_bias;                // (rows x T) attention mask bias
    int turn = 0;

    static ContextState initial(int rows, int layers, int hidden_size);
    int rows() const { return hidden.front().rows(); }
    bool has_memory() const { return !memory.empty(); }
    // Tiles every row block `times` times (rows become rows * times).
    ContextState repeat(int times) const;
};

struct NoiseSpec {
    NoiseMode mode = NoiseMode::utterance;
    double std_dev = 1.0;
    int dim = 0;
};

// One (rows x dim) draw for utterance mode, `length` draws for word mode.
// std_dev == 0 gives exact zeros.
std::vector<Tensor> sample_noise(const NoiseSpec& spec, int rows, int length, CounterRng& rng);

struct DecodeResult {
    Tensor logits;               // (rows x V)
    std::vector<Tensor> hidden;  // decoder state per layer
};

class Generator {
public:
    static Generator create(ParameterStore& store, const ModelShape& shape, CounterRng& rng);

    const SharedEncoder& shared() const { return shared_; }
    SharedEncoder& shared() { return shared_; }
    const ModelShape& shape() const { return shape_; }

    ContextState encode_turn(const ContextState& state, const TokenMatrix& tokens,
                             std::span<const int> source_attributes) const;
    DecodeResult decode_step(const ContextState& state, std::span<const int> previous_tokens,
                             std::span<const int> target_attributes, const Tensor& noise,
                             const std::vector<Tensor>& hidden) const;
    // One logit row block per gold position; step j reads gold token j-1 (BOS first).
    // `noise` holds one draw (reused at every step) or one per position.
    std::vector<Tensor> teacher_forced_logits(const ContextState& state, const TokenMatrix& gold,
                                              std::span<const int> target_attributes,
                                              const std::vector<Tensor>& noise) const;

private:
    ModelShape shape_;
    SharedEncoder shared_;
    StackedGru decoder_rnn_;
    AttentionParams attention_;
    Linear output_;
};

}  // namespace phred

#endif  // PHRED_GENERATOR_HPP
