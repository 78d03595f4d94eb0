// SPDX-License-Identifier: Apache-2.0
//
// Parameter storage and the recurrent / attention building blocks shared by
// the generator and the discriminators.

#ifndef PHRED_NN_HPP
#define PHRED_NN_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "phred/rng.hpp"
#include "phred/tensor.hpp"

namespace phred {

// Which optimiser update a parameter belongs to. Shared parameters (embeddings,
// utterance encoder, context RNN) are updated by every loss that reaches them.
enum class ParamGroup { shared, generator, adv_discriminator, att_discriminator };

const char* to_string(ParamGroup group);

class ParameterStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        ParamGroup group;
    };

    // Xavier-uniform initialised matrix (or zeros for bias-like tensors).
    Tensor add_xavier(const std::string& name, const Shape& shape, ParamGroup group, CounterRng& rng);
    Tensor add_zeros(const std::string& name, const Shape& shape, ParamGroup group);

    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    void zero_grad();
    std::size_t parameter_count() const;

private:
    Tensor add(const std::string& name, Tensor tensor, ParamGroup group);

    std::vector<Entry> entries_;
};

struct Linear {
    Tensor weight;  // (in x out)
    Tensor bias;    // (1 x out)

    static Linear create(ParameterStore& store, const std::string& name, int in, int out, ParamGroup group,
                         CounterRng& rng);
    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
    int in_features() const { return weight.shape()[0]; }
    int out_features() const { return weight.shape()[1]; }
};

// Gated recurrent unit, update/reset/candidate formulation:
//   u  = sigmoid(x W_u + h U_u + b_u)
//   r  = sigmoid(x W_r + h U_r + b_r)
//   n  = tanh(x W_n + (r * h) U_n + b_n)
//   h' = u * h + (1 - u) * n
// The input weights of the three gates are fused column-wise in that order.
struct GruCellParams {
    Tensor input_weight;      // (in x 3H)   [update | reset | candidate]
    Tensor input_bias;        // (1 x 3H)
    Tensor gate_weight;       // (H x 2H)    [update | reset]
    Tensor candidate_weight;  // (H x H)

    static GruCellParams create(ParameterStore& store, const std::string& name, int input_size, int hidden_size,
                                ParamGroup group, CounterRng& rng);
    int input_size() const { return input_weight.shape()[0]; }
    int hidden_size() const { return candidate_weight.shape()[0]; }
};

Tensor gru_cell_step(const Tensor& input, const Tensor& hidden, const GruCellParams& params);

// Keeps `previous` where mask is 0 and takes `next` where it is 1 (mask: rows x 1 constant).
Tensor mask_blend(const Tensor& next, const Tensor& previous, const Tensor& mask);

// Stack of GRU layers; layer l > 0 consumes the output of layer l - 1.
struct StackedGru {
    std::vector<GruCellParams> layers;

    static StackedGru create(ParameterStore& store, const std::string& name, int input_size, int hidden_size,
                             int num_layers, ParamGroup group, CounterRng& rng);
    int hidden_size() const { return layers.front().hidden_size(); }
    int num_layers() const { return static_cast<int>(layers.size()); }

    // One time step through every layer. `mask` may be undefined (all rows active).
    std::vector<Tensor> step(const Tensor& input, const std::vector<Tensor>& hidden, const Tensor& mask = {}) const;
};

// Bidirectional multi-layer GRU over a padded sequence. Each direction has its
// own stack; layer l > 0 of both directions reads concat(forward, backward) of
// layer l - 1.
struct BiGru {
    std::vector<GruCellParams> forward;
    std::vector<GruCellParams> backward;

    static BiGru create(ParameterStore& store, const std::string& name, int input_size, int hidden_size,
                        int num_layers, ParamGroup group, CounterRng& rng);
    int hidden_size() const { return forward.front().hidden_size(); }
    int num_layers() const { return static_cast<int>(forward.size()); }

    struct Output {
        std::vector<Tensor> top;               // per position: (rows x 2H) = [forward | backward]
        std::vector<Tensor> final_forward;     // per layer, state after the last valid position
        std::vector<Tensor> final_backward;    // per layer, state after position 0
    };

    // `masks[t]` is a (rows x 1) constant; `initial` supplies per-layer starting
    // states for both directions (empty means zeros).
    Output run(const std::vector<Tensor>& inputs, const std::vector<Tensor>& masks,
               const std::vector<Tensor>& initial = {}) const;
};

// Additive (Bahdanau) attention: score_t = v . tanh(q W_q + k_t W_k + b).
struct AttentionParams {
    Tensor query_weight;  // (Hq x A)
    Tensor key_weight;    // (Dk x A)
    Tensor bias;          // (1 x A)
    Tensor score_vector;  // (A x 1)

    static AttentionParams create(ParameterStore& store, const std::string& name, int query_size, int key_size,
                                  int attention_size, ParamGroup group, CounterRng& rng);
};

struct AttentionResult {
    Tensor context;  // (rows x Dv)
    Tensor weights;  // (rows x T), each row a softmax
};

// Keys projected once per sequence, reused by every query.
std::vector<Tensor> project_keys(const AttentionParams& params, const std::vector<Tensor>& keys);

// `mask_bias` (rows x T constant) adds 0 for valid positions and a large
// negative value for padding; undefined means every position is valid.
AttentionResult attend(const AttentionParams& params, const Tensor& query, const std::vector<Tensor>& projected_keys,
                       const std::vector<Tensor>& values, const Tensor& mask_bias = {});

AttentionResult additive_attention(const AttentionParams& params, const Tensor& query,
                                   const std::vector<Tensor>& keys, const std::vector<Tensor>& values,
                                   const Tensor& mask_bias = {});

// Clips the joint L2 norm of the gradients to `max_norm`, then applies one SGD
// step. Returns the pre-clip norm.
double sgd_step(const std::vector<Tensor>& params, const std::vector<std::vector<real>>& grads,
                real learning_rate, real max_norm);

}  // namespace phred

#endif  // PHRED_NN_HPP
