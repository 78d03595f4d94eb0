// SPDX-License-Identifier: Apache-2.0

#include "phred/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "phred/rng.hpp"

namespace phred {

using RowMatrix = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

namespace {

std::atomic<std::uint64_t> g_sequence{1};
thread_local bool t_grad_enabled = true;

using detail::Node;

void check_shape(const Shape& shape) {
    for (int extent : shape) {
        if (extent <= 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape));
    }
}

int cols_of(const Shape& shape) { return shape.empty() ? 1 : shape.back(); }
int rows_of(const Shape& shape) { return static_cast<int>(shape_numel(shape) / static_cast<std::size_t>(cols_of(shape))); }

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " + shape_to_string(b));
}

// Gradient buffer of input k, or nullptr when that input does not need one.
real* input_grad(Node& self, std::size_t k) {
    Node& in = *self.inputs[k];
    return in.requires_grad ? in.grad.data() : nullptr;
}

const std::vector<real>& input_value(const Node& self, std::size_t k) { return self.inputs[k]->value; }

}  // namespace

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ')';
    return out.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int extent : shape) n *= static_cast<std::size_t>(extent);
    return n;
}

namespace detail {

Node::~Node() {
    // Long recurrent chains would otherwise recurse once per node on release.
    std::vector<std::shared_ptr<Node>> pending = std::move(inputs);
    while (!pending.empty()) {
        std::shared_ptr<Node> next = std::move(pending.back());
        pending.pop_back();
        if (next && next.use_count() == 1) {
            for (auto& child : next->inputs) pending.push_back(std::move(child));
            next->inputs.clear();
        }
    }
}

}  // namespace detail

Tensor make_result(const Shape& shape, std::vector<real> values, const std::vector<Tensor>& inputs) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(values);
    bool needs_grad = false;
    if (t_grad_enabled) {
        for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->is_leaf = false;
        node->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.handle());
    }
    return Tensor(std::move(node));
}

Tensor make_result(const Shape& shape, std::vector<real> values, std::initializer_list<Tensor> inputs) {
    return make_result(shape, std::move(values), std::vector<Tensor>(inputs));
}

namespace {

template <class Fn>
void on_backward(Tensor& result, Fn&& fn) {
    if (result.requires_grad()) result.handle()->backward_fn = std::forward<Fn>(fn);
}

}  // namespace

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, real(0), requires_grad); }

Tensor Tensor::full(const Shape& shape, real fill, bool requires_grad) {
    return from(shape, std::vector<real>(shape_numel(shape), fill), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<real> values, bool requires_grad) {
    check_shape(shape);
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                         shape_to_string(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->value.size(), real(0));
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(real value, bool requires_grad) { return from(Shape{}, {value}, requires_grad); }

detail::Node& Tensor::node() const {
    if (!node_) throw std::logic_error("tensor: use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }
int Tensor::cols() const { return cols_of(shape()); }
int Tensor::rows() const { return rows_of(shape()); }

real Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_to_string(shape()) + " is not a scalar");
    return node().value[0];
}

real Tensor::at(int row, int col) const {
    return node().value[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(col)];
}

void Tensor::zero_grad() {
    auto& n = node();
    std::fill(n.grad.begin(), n.grad.end(), real(0));
}

Tensor Tensor::detach() const { return from(shape(), node().value, false); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- backward -----------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined()) throw GradientError("backward: undefined loss");
    if (loss.numel() != 1) {
        throw GradientError("backward: loss must be a scalar, got shape " + shape_to_string(loss.shape()));
    }
    Node& root = *loss.handle();
    if (root.is_leaf || !root.requires_grad) throw GradientError("backward: loss was not produced by a recorded op");
    if (root.consumed) throw GradientError("backward: this loss has already been back-propagated");

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{&root};
    seen.insert(&root);
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& in : n->inputs) {
            if (in->requires_grad && !in->is_leaf && seen.insert(in.get()).second) stack.push_back(in.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });
    for (Node* n : order) n->grad.assign(n->value.size(), real(0));
    root.grad[0] = real(1);
    for (Node* n : order) {
        if (n->backward_fn) n->backward_fn(*n);
    }
    root.consumed = true;
}

// ---- linear algebra -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) mismatch("matmul", a.shape(), b.shape());
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<real> out(static_cast<std::size_t>(m) * n);
    MatrixMap(out.data(), m, n).noalias() =
        ConstMatrixMap(a.values().data(), m, k) * ConstMatrixMap(b.values().data(), k, n);
    Tensor result = make_result({m, n}, std::move(out), {a, b});
    on_backward(result, [m, k, n](Node& self) {
        ConstMatrixMap g(self.grad.data(), m, n);
        if (real* ga = input_grad(self, 0)) {
            MatrixMap(ga, m, k).noalias() += g * ConstMatrixMap(input_value(self, 1).data(), k, n).transpose();
        }
        if (real* gb = input_grad(self, 1)) {
            MatrixMap(gb, k, n).noalias() += ConstMatrixMap(input_value(self, 0).data(), m, k).transpose() * g;
        }
    });
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const bool row_broadcast = !same && b.rows() == 1 && b.cols() == a.cols() && a.rank() >= 1;
    if (!same && !row_broadcast) mismatch("add", a.shape(), b.shape());
    const int cols = a.cols();
    std::vector<real> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    if (same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cols];
    }
    Tensor result = make_result(a.shape(), std::move(out), {a, b});
    on_backward(result, [same, cols](Node& self) {
        const auto& g = self.grad;
        if (real* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (real* gb = input_grad(self, 1)) {
            if (same) {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
            }
        }
    });
    return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) mismatch("sub", a.shape(), b.shape());
    std::vector<real> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    Tensor result = make_result(a.shape(), std::move(out), {a, b});
    on_backward(result, [](Node& self) {
        const auto& g = self.grad;
        if (real* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (real* gb = input_grad(self, 1)) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const bool col_broadcast = !same && b.cols() == 1 && b.rows() == a.rows();
    if (!same && !col_broadcast) mismatch("mul", a.shape(), b.shape());
    const int cols = a.cols();
    auto av = a.values();
    auto bv = b.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[same ? i : i / cols];
    Tensor result = make_result(a.shape(), std::move(out), {a, b});
    on_backward(result, [same, cols](Node& self) {
        const auto& g = self.grad;
        const auto& va = input_value(self, 0);
        const auto& vb = input_value(self, 1);
        if (real* ga = input_grad(self, 0)) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[same ? i : i / cols];
        }
        if (real* gb = input_grad(self, 1)) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[same ? i : i / cols] += g[i] * va[i];
        }
    });
    return result;
}

namespace {

// Elementwise map whose derivative is expressed through input x and output y.
template <class Forward, class Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
    auto av = a.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
    Tensor result = make_result(a.shape(), std::move(out), {a});
    on_backward(result, [df](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        const auto& x = input_value(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * df(x[i], self.value[i]);
    });
    return result;
}

}  // namespace

Tensor scale(const Tensor& a, real factor) {
    return unary(a, [factor](real x) { return x * factor; }, [factor](real, real) { return factor; });
}

Tensor one_minus(const Tensor& a) {
    return unary(a, [](real x) { return real(1) - x; }, [](real, real) { return real(-1); });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](real x) { return std::tanh(x); }, [](real, real y) { return real(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](real x) {
            if (x >= 0) return real(1) / (real(1) + std::exp(-x));
            const real e = std::exp(x);
            return e / (real(1) + e);
        },
        [](real, real y) { return y * (real(1) - y); });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](real x) { return x > 0 ? x : real(0); }, [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](real x) { return std::exp(x); }, [](real, real y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, [](real x) { return std::log(x); }, [](real x, real) { return real(1) / x; });
}

Tensor clamp(const Tensor& a, real lo, real hi) {
    return unary(
        a, [lo, hi](real x) { return std::clamp(x, lo, hi); },
        [lo, hi](real x, real) { return (x >= lo && x <= hi) ? real(1) : real(0); });
}

// ---- normalisation ------------------------------------------------------

Tensor softmax(const Tensor& a) {
    const int rows = a.rows(), cols = a.cols();
    auto av = a.values();
    std::vector<real> out(av.size());
    for (int r = 0; r < rows; ++r) {
        const real* x = av.data() + static_cast<std::size_t>(r) * cols;
        real* y = out.data() + static_cast<std::size_t>(r) * cols;
        const real peak = *std::max_element(x, x + cols);
        double total = 0.0;
        for (int c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - peak);
            total += y[c];
        }
        for (int c = 0; c < cols; ++c) y[c] = static_cast<real>(y[c] / total);
    }
    Tensor result = make_result(a.shape(), std::move(out), {a});
    on_backward(result, [rows, cols](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        for (int r = 0; r < rows; ++r) {
            const std::size_t base = static_cast<std::size_t>(r) * cols;
            double dot = 0.0;
            for (int c = 0; c < cols; ++c) dot += self.grad[base + c] * self.value[base + c];
            for (int c = 0; c < cols; ++c) {
                ga[base + c] += self.value[base + c] * static_cast<real>(self.grad[base + c] - dot);
            }
        }
    });
    return result;
}

namespace {

double row_logsumexp(const real* x, int cols) {
    const real peak = *std::max_element(x, x + cols);
    double total = 0.0;
    for (int c = 0; c < cols; ++c) total += std::exp(static_cast<double>(x[c] - peak));
    return static_cast<double>(peak) + std::log(total);
}

}  // namespace

Tensor log_softmax(const Tensor& a) {
    const int rows = a.rows(), cols = a.cols();
    auto av = a.values();
    std::vector<real> out(av.size());
    for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        const double lse = row_logsumexp(av.data() + base, cols);
        for (int c = 0; c < cols; ++c) out[base + c] = static_cast<real>(av[base + c] - lse);
    }
    Tensor result = make_result(a.shape(), std::move(out), {a});
    on_backward(result, [rows, cols](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        for (int r = 0; r < rows; ++r) {
            const std::size_t base = static_cast<std::size_t>(r) * cols;
            double total = 0.0;
            for (int c = 0; c < cols; ++c) total += self.grad[base + c];
            for (int c = 0; c < cols; ++c) {
                ga[base + c] += self.grad[base + c] - static_cast<real>(std::exp(self.value[base + c]) * total);
            }
        }
    });
    return result;
}

// ---- structural ---------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int rows = parts[0].rows();
    std::vector<int> widths;
    int total = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) mismatch("concat", parts[0].shape(), p.shape());
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<real> out(static_cast<std::size_t>(rows) * total);
    int offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto v = parts[k].values();
        for (int r = 0; r < rows; ++r) {
            std::copy_n(v.data() + static_cast<std::size_t>(r) * widths[k], widths[k],
                        out.data() + static_cast<std::size_t>(r) * total + offset);
        }
        offset += widths[k];
    }
    Shape shape = parts[0].rank() >= 2 ? parts[0].shape() : Shape{rows, total};
    shape.back() = total;
    Tensor result = make_result(shape, std::move(out), parts);
    on_backward(result, [rows, total, widths](Node& self) {
        int offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (real* gk = input_grad(self, k)) {
                for (int r = 0; r < rows; ++r) {
                    const real* src = self.grad.data() + static_cast<std::size_t>(r) * total + offset;
                    real* dst = gk + static_cast<std::size_t>(r) * widths[k];
                    for (int c = 0; c < widths[k]; ++c) dst[c] += src[c];
                }
            }
            offset += widths[k];
        }
    });
    return result;
}

Tensor slice(const Tensor& a, int begin, int end) {
    const int cols = a.cols(), rows = a.rows();
    if (begin < 0 || end > cols || begin >= end) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside last axis of " + shape_to_string(a.shape()));
    }
    const int width = end - begin;
    auto av = a.values();
    std::vector<real> out(static_cast<std::size_t>(rows) * width);
    for (int r = 0; r < rows; ++r) {
        std::copy_n(av.data() + static_cast<std::size_t>(r) * cols + begin, width,
                    out.data() + static_cast<std::size_t>(r) * width);
    }
    Shape shape = a.rank() >= 1 ? a.shape() : Shape{1};
    shape.back() = width;
    Tensor result = make_result(shape, std::move(out), {a});
    on_backward(result, [rows, cols, begin, width](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < width; ++c) {
                ga[static_cast<std::size_t>(r) * cols + begin + c] += self.grad[static_cast<std::size_t>(r) * width + c];
            }
        }
    });
    return result;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const int cols = parts[0].cols();
    std::vector<int> heights;
    std::vector<real> out;
    int total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.cols() != cols) mismatch("concat_rows", parts[0].shape(), p.shape());
        heights.push_back(p.rows());
        total += p.rows();
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    Tensor result = make_result({total, cols}, std::move(out), parts);
    on_backward(result, [cols, heights](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < heights.size(); ++k) {
            const std::size_t count = static_cast<std::size_t>(heights[k]) * cols;
            if (real* gk = input_grad(self, k)) {
                for (std::size_t i = 0; i < count; ++i) gk[i] += self.grad[offset + i];
            }
            offset += count;
        }
    });
    return result;
}

Tensor slice_rows(const Tensor& a, int begin, int end) {
    if (a.rank() != 2 || begin < 0 || end > a.rows() || begin >= end) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside rows of " + shape_to_string(a.shape()));
    }
    const int cols = a.cols();
    auto av = a.values();
    std::vector<real> out(av.begin() + static_cast<std::ptrdiff_t>(begin) * cols,
                          av.begin() + static_cast<std::ptrdiff_t>(end) * cols);
    Tensor result = make_result({end - begin, cols}, std::move(out), {a});
    on_backward(result, [begin, cols](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        const std::size_t offset = static_cast<std::size_t>(begin) * cols;
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[offset + i] += self.grad[i];
    });
    return result;
}

Tensor repeat_rows(const Tensor& a, int times) {
    if (a.rank() != 2 || times < 1) throw ShapeError("repeat_rows: needs a matrix and times >= 1, got " + shape_to_string(a.shape()));
    auto av = a.values();
    std::vector<real> out;
    out.reserve(av.size() * static_cast<std::size_t>(times));
    for (int t = 0; t < times; ++t) out.insert(out.end(), av.begin(), av.end());
    Tensor result = make_result({a.rows() * times, a.cols()}, std::move(out), {a});
    on_backward(result, [](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        const std::size_t block = self.inputs[0]->value.size();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i % block] += self.grad[i];
    });
    return result;
}

// ---- lookups and losses -------------------------------------------------

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be a matrix, got " + shape_to_string(table.shape()));
    if (ids.empty()) throw ShapeError("embedding: empty id list");
    const int vocab = table.rows(), dim = table.cols();
    auto tv = table.values();
    std::vector<real> out(ids.size() * static_cast<std::size_t>(dim));
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || ids[k] >= vocab) {
            throw std::out_of_range("embedding: id " + std::to_string(ids[k]) + " outside table of " +
                                    std::to_string(vocab) + " rows");
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(ids[k]) * dim, dim, out.data() + k * dim);
    }
    Tensor result = make_result({static_cast<int>(ids.size()), dim}, std::move(out), {table});
    on_backward(result, [dim, rows = std::vector<int>(ids.begin(), ids.end())](Node& self) {
        real* gt = input_grad(self, 0);
        if (!gt) return;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            real* dst = gt + static_cast<std::size_t>(rows[k]) * dim;
            const real* src = self.grad.data() + k * dim;
            for (int c = 0; c < dim; ++c) dst[c] += src[c];
        }
    });
    return result;
}

Tensor pick(const Tensor& a, std::span<const int> ids) {
    const int rows = a.rows(), cols = a.cols();
    if (static_cast<int>(ids.size()) != rows) {
        throw ShapeError("pick: " + std::to_string(ids.size()) + " ids for " + shape_to_string(a.shape()));
    }
    std::vector<real> out(rows);
    for (int r = 0; r < rows; ++r) {
        if (ids[r] < 0 || ids[r] >= cols) throw std::out_of_range("pick: id " + std::to_string(ids[r]) + " out of range");
        out[r] = a.values()[static_cast<std::size_t>(r) * cols + ids[r]];
    }
    Tensor result = make_result({rows, 1}, std::move(out), {a});
    on_backward(result, [cols, idx = std::vector<int>(ids.begin(), ids.end())](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        for (std::size_t r = 0; r < idx.size(); ++r) ga[r * cols + idx[r]] += self.grad[r];
    });
    return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    const int rows = logits.rows(), cols = logits.cols();
    if (static_cast<int>(targets.size()) != rows) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_to_string(logits.shape()));
    }
    auto lv = logits.values();
    std::vector<real> out(rows);
    for (int r = 0; r < rows; ++r) {
        if (targets[r] < 0 || targets[r] >= cols) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) + " out of range");
        }
        const real* x = lv.data() + static_cast<std::size_t>(r) * cols;
        out[r] = static_cast<real>(row_logsumexp(x, cols) - static_cast<double>(x[targets[r]]));
    }
    Tensor result = make_result({rows, 1}, std::move(out), {logits});
    on_backward(result, [rows, cols, idx = std::vector<int>(targets.begin(), targets.end())](Node& self) {
        real* gl = input_grad(self, 0);
        if (!gl) return;
        const auto& x = input_value(self, 0);
        for (int r = 0; r < rows; ++r) {
            const std::size_t base = static_cast<std::size_t>(r) * cols;
            const double lse = row_logsumexp(x.data() + base, cols);
            const real g = self.grad[r];
            for (int c = 0; c < cols; ++c) {
                const real p = static_cast<real>(std::exp(static_cast<double>(x[base + c]) - lse));
                gl[base + c] += g * (p - (c == idx[r] ? real(1) : real(0)));
            }
        }
    });
    return result;
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (real v : a.values()) total += v;
    Tensor result = make_result(Shape{}, {static_cast<real>(total)}, {a});
    on_backward(result, [](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        const std::size_t n = self.inputs[0]->value.size();
        for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
    });
    return result;
}

Tensor mean(const Tensor& a) {
    double total = 0.0;
    for (real v : a.values()) total += v;
    const double n = static_cast<double>(a.numel());
    Tensor result = make_result(Shape{}, {static_cast<real>(total / n)}, {a});
    on_backward(result, [](Node& self) {
        real* ga = input_grad(self, 0);
        if (!ga) return;
        const std::size_t n = self.inputs[0]->value.size();
        const real g = self.grad[0] / static_cast<real>(n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
    return result;
}

Tensor random_normal(const Shape& shape, real std_dev, CounterRng& rng) {
    check_shape(shape);
    std::vector<real> out(shape_numel(shape));
    for (auto& v : out) v = static_cast<real>(rng.normal() * static_cast<double>(std_dev));
    return Tensor::from(shape, std::move(out), false);
}

}  // namespace phred
