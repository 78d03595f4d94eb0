// SPDX-License-Identifier: Apache-2.0

#include "phred/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phred {

const char* to_string(ParamGroup group) {
    switch (group) {
        case ParamGroup::shared: return "shared";
        case ParamGroup::generator: return "generator";
        case ParamGroup::adv_discriminator: return "adv_discriminator";
        case ParamGroup::att_discriminator: return "att_discriminator";
    }
    return "unknown";
}

// ---- ParameterStore -----------------------------------------------------

Tensor ParameterStore::add(const std::string& name, Tensor tensor, ParamGroup group) {
    if (contains(name)) throw std::invalid_argument("parameter store: duplicate name '" + name + "'");
    entries_.push_back({name, tensor, group});
    return tensor;
}

Tensor ParameterStore::add_xavier(const std::string& name, const Shape& shape, ParamGroup group, CounterRng& rng) {
    const double fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
    const double fan_out = shape.back();
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<real> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<real>((2.0 * rng.uniform() - 1.0) * limit);
    return add(name, Tensor::from(shape, std::move(values), true), group);
}

Tensor ParameterStore::add_zeros(const std::string& name, const Shape& shape, ParamGroup group) {
    return add(name, Tensor::zeros(shape, true), group);
}

const Tensor& ParameterStore::get(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.tensor;
    }
    throw std::out_of_range("parameter store: no parameter named '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

void ParameterStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

std::size_t ParameterStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

// ---- layers -------------------------------------------------------------

Linear Linear::create(ParameterStore& store, const std::string& name, int in, int out, ParamGroup group,
                      CounterRng& rng) {
    return {store.add_xavier(name + ".weight", {in, out}, group, rng), store.add_zeros(name + ".bias", {1, out}, group)};
}

GruCellParams GruCellParams::create(ParameterStore& store, const std::string& name, int input_size, int hidden_size,
                                    ParamGroup group, CounterRng& rng) {
    GruCellParams p;
    p.input_weight = store.add_xavier(name + ".input_weight", {input_size, 3 * hidden_size}, group, rng);
    p.input_bias = store.add_zeros(name + ".input_bias", {1, 3 * hidden_size}, group);
    p.gate_weight = store.add_xavier(name + ".gate_weight", {hidden_size, 2 * hidden_size}, group, rng);
    p.candidate_weight = store.add_xavier(name + ".candidate_weight", {hidden_size, hidden_size}, group, rng);
    return p;
}

Tensor gru_cell_step(const Tensor& input, const Tensor& hidden, const GruCellParams& params) {
    const int h = params.hidden_size();
    if (input.cols() != params.input_size()) {
        throw ShapeError("gru_cell_step: input width " + std::to_string(input.cols()) + " does not match cell input size " +
                         std::to_string(params.input_size()));
    }
    if (hidden.cols() != h || hidden.rows() != input.rows()) {
        throw ShapeError("gru_cell_step: hidden " + shape_to_string(hidden.shape()) + " does not match input " +
                         shape_to_string(input.shape()) + " with hidden size " + std::to_string(h));
    }
    const Tensor x_proj = add(matmul(input, params.input_weight), params.input_bias);
    const Tensor h_proj = matmul(hidden, params.gate_weight);
    const Tensor update = sigmoid(add(slice(x_proj, 0, h), slice(h_proj, 0, h)));
    const Tensor reset = sigmoid(add(slice(x_proj, h, 2 * h), slice(h_proj, h, 2 * h)));
    const Tensor candidate = tanh(add(slice(x_proj, 2 * h, 3 * h), matmul(mul(reset, hidden), params.candidate_weight)));
    // u * h + (1 - u) * n  ==  n + u * (h - n)
    return add(candidate, mul(update, sub(hidden, candidate)));
}

Tensor mask_blend(const Tensor& next, const Tensor& previous, const Tensor& mask) {
    return add(previous, mul(sub(next, previous), mask));
}

StackedGru StackedGru::create(ParameterStore& store, const std::string& name, int input_size, int hidden_size,
                              int num_layers, ParamGroup group, CounterRng& rng) {
    StackedGru g;
    for (int l = 0; l < num_layers; ++l) {
        g.layers.push_back(GruCellParams::create(store, name + ".l" + std::to_string(l), l == 0 ? input_size : hidden_size,
                                                 hidden_size, group, rng));
    }
    return g;
}

std::vector<Tensor> StackedGru::step(const Tensor& input, const std::vector<Tensor>& hidden, const Tensor& mask) const {
    if (hidden.size() != layers.size()) throw ShapeError("stacked gru: wrong number of layer states");
    std::vector<Tensor> next;
    next.reserve(layers.size());
    Tensor x = input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Tensor h = gru_cell_step(x, hidden[l], layers[l]);
        if (mask.defined()) h = mask_blend(h, hidden[l], mask);
        next.push_back(h);
        x = h;
    }
    return next;
}

BiGru BiGru::create(ParameterStore& store, const std::string& name, int input_size, int hidden_size, int num_layers,
                    ParamGroup group, CounterRng& rng) {
    BiGru g;
    for (int l = 0; l < num_layers; ++l) {
        const int in = l == 0 ? input_size : 2 * hidden_size;
        g.forward.push_back(GruCellParams::create(store, name + ".fw.l" + std::to_string(l), in, hidden_size, group, rng));
        g.backward.push_back(GruCellParams::create(store, name + ".bw.l" + std::to_string(l), in, hidden_size, group, rng));
    }
    return g;
}

BiGru::Output BiGru::run(const std::vector<Tensor>& inputs, const std::vector<Tensor>& masks,
                         const std::vector<Tensor>& initial) const {
    if (inputs.empty() || inputs.size() != masks.size()) throw ShapeError("bigru: inputs and masks must be non-empty and aligned");
    const int rows = inputs.front().rows();
    const std::size_t steps = inputs.size();
    if (!initial.empty() && initial.size() != forward.size()) throw ShapeError("bigru: wrong number of initial states");

    Output out;
    std::vector<Tensor> layer_in = inputs;
    for (std::size_t l = 0; l < forward.size(); ++l) {
        const Tensor start = initial.empty() ? Tensor::zeros({rows, hidden_size()}) : initial[l];
        std::vector<Tensor> fw(steps), bw(steps);
        Tensor h = start;
        for (std::size_t t = 0; t < steps; ++t) {
            h = mask_blend(gru_cell_step(layer_in[t], h, forward[l]), h, masks[t]);
            fw[t] = h;
        }
        out.final_forward.push_back(h);
        h = start;
        for (std::size_t t = steps; t-- > 0;) {
            h = mask_blend(gru_cell_step(layer_in[t], h, backward[l]), h, masks[t]);
            bw[t] = h;
        }
        out.final_backward.push_back(h);
        for (std::size_t t = 0; t < steps; ++t) layer_in[t] = concat({fw[t], bw[t]});
    }
    out.top = std::move(layer_in);
    return out;
}

// ---- attention ----------------------------------------------------------

AttentionParams AttentionParams::create(ParameterStore& store, const std::string& name, int query_size, int key_size,
                                        int attention_size, ParamGroup group, CounterRng& rng) {
    AttentionParams p;
    p.query_weight = store.add_xavier(name + ".query_weight", {query_size, attention_size}, group, rng);
    p.key_weight = store.add_xavier(name + ".key_weight", {key_size, attention_size}, group, rng);
    p.bias = store.add_zeros(name + ".bias", {1, attention_size}, group);
    p.score_vector = store.add_xavier(name + ".score_vector", {attention_size, 1}, group, rng);
    return p;
}

std::vector<Tensor> project_keys(const AttentionParams& params, const std::vector<Tensor>& keys) {
    std::vector<Tensor> projected;
    projected.reserve(keys.size());
    for (const auto& k : keys) projected.push_back(add(matmul(k, params.key_weight), params.bias));
    return projected;
}

AttentionResult attend(const AttentionParams& params, const Tensor& query, const std::vector<Tensor>& projected_keys,
                       const std::vector<Tensor>& values, const Tensor& mask_bias) {
    if (projected_keys.empty()) throw std::invalid_argument("additive_attention: empty key sequence");
    if (projected_keys.size() != values.size()) {
        throw ShapeError("additive_attention: " + std::to_string(projected_keys.size()) + " keys but " +
                         std::to_string(values.size()) + " values");
    }
    const Tensor q = matmul(query, params.query_weight);
    std::vector<Tensor> scores;
    scores.reserve(projected_keys.size());
    for (const auto& k : projected_keys) scores.push_back(matmul(tanh(add(q, k)), params.score_vector));
    Tensor logits = scores.size() == 1 ? scores.front() : concat(scores);
    if (mask_bias.defined()) logits = add(logits, mask_bias);
    const Tensor weights = softmax(logits);
    Tensor context;
    for (std::size_t t = 0; t < values.size(); ++t) {
        const Tensor term = mul(values[t], slice(weights, static_cast<int>(t), static_cast<int>(t) + 1));
        context = context.defined() ? add(context, term) : term;
    }
    return {context, weights};
}

AttentionResult additive_attention(const AttentionParams& params, const Tensor& query, const std::vector<Tensor>& keys,
                                   const std::vector<Tensor>& values, const Tensor& mask_bias) {
    if (keys.empty()) throw std::invalid_argument("additive_attention: empty key sequence");
    return attend(params, query, project_keys(params, keys), values, mask_bias);
}

// ---- optimiser ----------------------------------------------------------

double sgd_step(const std::vector<Tensor>& params, const std::vector<std::vector<real>>& grads, real learning_rate,
                real max_norm) {
    if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: parameter and gradient counts differ");
    double squared = 0.0;
    for (const auto& g : grads) {
        for (real v : g) squared += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(squared);
    const double factor = (max_norm > 0 && norm > max_norm) ? max_norm / norm : 1.0;
    const real step = static_cast<real>(learning_rate * factor);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor p = params[k];
        auto values = p.mutable_values();
        const auto& g = grads[k];
        for (std::size_t i = 0; i < values.size(); ++i) values[i] -= step * g[i];
    }
    return norm;
}

}  // namespace phred
