// SPDX-License-Identifier: Apache-2.0

#include "phred/generator.hpp"

#include <stdexcept>

namespace phred {

ModelShape ModelShape::from_config(const Config& config, int vocab_size, int attribute_count) {
    ModelShape s;
    s.vocab_size = vocab_size;
    s.attribute_count = attribute_count;
    s.layers = config.layers;
    s.hidden_size = config.hidden_size;
    s.embedding_size = config.embedding_size;
    s.attribute_size = config.attribute_size;
    s.attention_size = config.attention_size;
    s.attributes = uses_attributes(config.variant);
    if (s.attributes && attribute_count < 1) throw std::invalid_argument("model needs at least one attribute");
    return s;
}

// ---- shared encoder -------------------------------------------------------

SharedEncoder SharedEncoder::create(ParameterStore& store, const ModelShape& shape, CounterRng& rng) {
    SharedEncoder e;
    const int H = shape.hidden_size;
    auto r = rng.fork(1);
    e.word_embedding = store.add_xavier("shared.word_embedding", {shape.vocab_size, shape.embedding_size},
                                        ParamGroup::shared, r);
    r = rng.fork(2);
    e.utterance_rnn = BiGru::create(store, "shared.utterance_rnn", shape.embedding_size, H, shape.layers,
                                    ParamGroup::shared, r);
    r = rng.fork(3);
    e.summary_projection = Linear::create(store, "shared.summary_projection", 2 * H, H, ParamGroup::shared, r);
    r = rng.fork(4);
    const int context_in = H + (shape.attributes ? shape.attribute_size : 0);
    e.context_rnn = StackedGru::create(store, "shared.context_rnn", context_in, H, shape.layers, ParamGroup::shared, r);
    if (shape.attributes) {
        r = rng.fork(5);
        e.attribute_embedding = store.add_xavier("shared.attribute_embedding",
                                                 {shape.attribute_count, shape.attribute_size}, ParamGroup::shared, r);
    }
    return e;
}

Tensor SharedEncoder::embed_words(std::span<const int> ids) const { return embedding(word_embedding, ids); }

Tensor SharedEncoder::embed_attributes(std::span<const int> ids) const {
    if (!has_attributes()) throw std::logic_error("model has no attribute embedding");
    const int n = attribute_embedding.rows();
    for (int id : ids) {
        if (id < 0 || id >= n) {
            throw std::invalid_argument("invalid attribute index " + std::to_string(id) + " (have " +
                                        std::to_string(n) + ")");
        }
    }
    return embedding(attribute_embedding, ids);
}

// ---- context state ----------------------------------------------------------

ContextState ContextState::initial(int rows, int layers, int hidden_size) {
    ContextState s;
    for (int l = 0; l < layers; ++l) s.hidden.push_back(Tensor::zeros({rows, hidden_size}));
    return s;
}

ContextState ContextState::repeat(int times) const {
    ContextState s;
    s.turn = turn;
    for (const auto& h : hidden) s.hidden.push_back(repeat_rows(h, times));
    for (const auto& m : memory) s.memory.push_back(repeat_rows(m, times));
    for (const auto& k : memory_keys) s.memory_keys.push_back(repeat_rows(k, times));
    if (memory_bias.defined()) s.memory_bias = repeat_rows(memory_bias, times);
    return s;
}

std::vector<Tensor> sample_noise(const NoiseSpec& spec, int rows, int length, CounterRng& rng) {
    if (length < 1) throw std::invalid_argument("sample_noise: length must be at least 1");
    if (spec.std_dev < 0) throw std::invalid_argument("sample_noise: negative standard deviation");
    const int draws = spec.mode == NoiseMode::utterance ? 1 : length;
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(draws));
    for (int i = 0; i < draws; ++i) {
        if (spec.std_dev == 0) {
            out.push_back(Tensor::zeros({rows, spec.dim}));
        } else {
            out.push_back(random_normal({rows, spec.dim}, static_cast<real>(spec.std_dev), rng));
        }
    }
    return out;
}

// ---- generator --------------------------------------------------------------

Generator Generator::create(ParameterStore& store, const ModelShape& shape, CounterRng& rng) {
    Generator g;
    g.shape_ = shape;
    g.shared_ = SharedEncoder::create(store, shape, rng);
    const int H = shape.hidden_size;
    const int decoder_in =
        shape.embedding_size + 2 * H + (shape.attributes ? shape.attribute_size : 0) + shape.noise_size();
    auto r = rng.fork(11);
    g.decoder_rnn_ = StackedGru::create(store, "generator.decoder_rnn", decoder_in, H, shape.layers,
                                        ParamGroup::generator, r);
    r = rng.fork(12);
    g.attention_ = AttentionParams::create(store, "generator.attention", H, 2 * H, shape.attention_size,
                                           ParamGroup::generator, r);
    r = rng.fork(13);
    g.output_ = Linear::create(store, "generator.output", H, shape.vocab_size, ParamGroup::generator, r);
    return g;
}

ContextState Generator::encode_turn(const ContextState& state, const TokenMatrix& tokens,
                                    std::span<const int> source_attributes) const {
    if (tokens.rows != state.rows()) throw ShapeError("encode_turn: batch rows disagree with the context state");
    for (int len : tokens.lengths) {
        if (len < 1) throw std::invalid_argument("encode_turn: empty utterance");
    }
    std::vector<Tensor> inputs, masks;
    for (int t = 0; t < tokens.cols; ++t) {
        inputs.push_back(shared_.embed_words(tokens.column(t)));
        masks.push_back(tokens.mask_column(t));
    }
    const auto encoded = shared_.utterance_rnn.run(inputs, masks);
    Tensor summary = shared_.summary_projection(concat({encoded.final_forward.back(), encoded.final_backward.back()}));
    if (shape_.attributes) {
        if (static_cast<int>(source_attributes.size()) != tokens.rows) {
            throw ShapeError("encode_turn: one source attribute per row required");
        }
        summary = concat({summary, shared_.embed_attributes(source_attributes)});
    }
    ContextState next;
    next.turn = state.turn + 1;
    next.hidden = shared_.context_rnn.step(summary, state.hidden);
    next.memory = encoded.top;
    next.memory_keys = project_keys(attention_, next.memory);
    next.memory_bias = tokens.mask_bias();
    return next;
}

DecodeResult Generator::decode_step(const ContextState& state, std::span<const int> previous_tokens,
                                    std::span<const int> target_attributes, const Tensor& noise,
                                    const std::vector<Tensor>& hidden) const {
    if (!state.has_memory()) throw std::logic_error("decode_step: no encoded utterance to attend over");
    if (noise.cols() != shape_.noise_size()) {
        throw ShapeError("decode_step: noise width " + std::to_string(noise.cols()) + ", expected " +
                         std::to_string(shape_.noise_size()));
    }
    const auto attended = attend(attention_, hidden.back(), state.memory_keys, state.memory, state.memory_bias);
    std::vector<Tensor> parts{shared_.embed_words(previous_tokens), attended.context};
    if (shape_.attributes) parts.push_back(shared_.embed_attributes(target_attributes));
    parts.push_back(noise);
    DecodeResult out;
    out.hidden = decoder_rnn_.step(concat(parts), hidden);
    out.logits = output_(out.hidden.back());
    return out;
}

std::vector<Tensor> Generator::teacher_forced_logits(const ContextState& state, const TokenMatrix& gold,
                                                     std::span<const int> target_attributes,
                                                     const std::vector<Tensor>& noise) const {
    if (gold.cols < 1) throw std::invalid_argument("teacher_forced_logits: empty response");
    if (noise.empty()) throw std::invalid_argument("teacher_forced_logits: no noise sample");
    std::vector<Tensor> logits;
    logits.reserve(static_cast<std::size_t>(gold.cols));
    std::vector<Tensor> hidden = state.hidden;
    std::vector<int> previous(static_cast<std::size_t>(gold.rows), Vocabulary::bos);
    for (int j = 0; j < gold.cols; ++j) {
        const Tensor& z = noise[std::min(static_cast<std::size_t>(j), noise.size() - 1)];
        auto step = decode_step(state, previous, target_attributes, z, hidden);
        logits.push_back(step.logits);
        hidden = std::move(step.hidden);
        previous = gold.column(j);
    }
    return logits;
}

}  // namespace phred
