// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with reverse-mode gradients.
//
// Every op that has at least one gradient-carrying input records a node that
// points back at its inputs. backward() collects the nodes reachable from a
// scalar loss, orders them by creation sequence and replays them in reverse,
// so each op is visited exactly once. Leaf gradients accumulate until they are
// cleared explicitly; a given loss may be back-propagated only once.

#ifndef PHRED_TENSOR_HPP
#define PHRED_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#ifndef PHRED_REAL
#define PHRED_REAL float
#endif

namespace phred {

using real = PHRED_REAL;
using Shape = std::vector<int>;

class CounterRng;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GradientError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;
    ~Node();
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, real fill, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::vector<real> values, bool requires_grad = false);
    static Tensor scalar(real value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    std::size_t numel() const { return node().value.size(); }
    // Matrix view: last extent is the column count, everything else folds into rows.
    int cols() const;
    int rows() const;

    std::span<const real> values() const { return node().value; }
    std::span<real> mutable_values() { return node().value; }
    real item() const;
    real at(int row, int col) const;

    bool requires_grad() const { return node().requires_grad; }
    bool has_grad() const { return !node().grad.empty(); }
    std::span<const real> grad() const { return node().grad; }
    std::span<real> mutable_grad() { return node().grad; }
    void zero_grad();

    // Identity of the stored array, for checking shared ownership.
    const void* id() const noexcept { return node_.get(); }
    bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

    // A new constant tensor holding a copy of the values, cut off from any graph.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& handle() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    detail::Node& node() const;

    std::shared_ptr<detail::Node> node_;

    friend Tensor make_result(const Shape&, std::vector<real>, std::initializer_list<Tensor>);
    friend Tensor make_result(const Shape&, std::vector<real>, const std::vector<Tensor>&);
};

// Disables graph recording on the current thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Runs reverse accumulation from a scalar loss. Throws GradientError when the
// loss is not scalar, was not produced by a recorded op, or was already used.
void backward(const Tensor& loss);

// ---- forward ops --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// b may equal a's shape or be a single row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// b may equal a's shape or be a single column broadcast over a's columns.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);
Tensor one_minus(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// Gradient passes through inside [lo, hi] and is zero where the value was clipped.
Tensor clamp(const Tensor& a, real lo, real hi);

Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);

// Concatenation and slicing along the last axis.
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, int begin, int end);
// Concatenation and slicing along rows (2-D only).
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int begin, int end);
Tensor repeat_rows(const Tensor& a, int times);

// Row lookup: result row k is table row ids[k].
Tensor embedding(const Tensor& table, std::span<const int> ids);
// Per-row pick: result[k] = a[k, ids[k]], shape (rows x 1).
Tensor pick(const Tensor& a, std::span<const int> ids);
// Per-row token cross-entropy from logits, shape (rows x 1).
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Constant N(0, std^2) draws, Box-Muller over the given engine.
Tensor random_normal(const Shape& shape, real std_dev, CounterRng& rng);

}  // namespace phred

#endif  // PHRED_TENSOR_HPP
