#pragma once

// Reverse-mode autodiff on dense row-major tensors, sized for small MLP-style
// models. A TapeT records every op; backward() walks the record in reverse and
// deposits gradients into the leaf tensors that asked for them.
//
// Conventions:
//   - rank 1 or 2 only; a batch is always the leading dimension
//   - training storage is float; grad_check instantiates the double engine
//   - sum/mean/l2 norms accumulate in double regardless of storage type;
//     matmul accumulates in storage precision (matches common training stacks)
//   - ops are single-threaded and evaluate in a fixed order, so identical
//     seeds give bitwise identical values and gradients

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "genda/errors.hpp"

namespace genda {

using Shape = std::vector<int>;

inline size_t numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class T>
struct TensorT {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // filled by Tape::backward when requires_grad

    TensorT() = default;
    TensorT(Shape s, std::vector<T> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        if (data.size() != numel(shape))
            throw ShapeError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static TensorT zeros(Shape s, bool rg = false) {
        size_t n = numel(s);
        return TensorT(std::move(s), std::vector<T>(n, T(0)), rg);
    }
    static TensorT full(Shape s, T v, bool rg = false) {
        size_t n = numel(s);
        return TensorT(std::move(s), std::vector<T>(n, v), rg);
    }

    size_t size() const { return data.size(); }
    void zero_grad() { grad.assign(data.size(), T(0)); }

    template <class U>
    TensorT<U> cast() const {
        std::vector<U> d(data.begin(), data.end());
        return TensorT<U>(shape, std::move(d), requires_grad);
    }
};

using Tensor = TensorT<float>;

enum class OpKind {
    leaf,
    matmul,
    add,
    sub,
    mul_elem,
    scale,
    leaky_relu,
    tanh,
    sigmoid,
    log_sigmoid,
    mean,
    sum,
    l2_normalize,
    broadcast_add,
    remap,  // index gather; carries spatial augmentation
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul_elem: return "mul_elem";
        case OpKind::scale: return "scale";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::log_sigmoid: return "log_sigmoid";
        case OpKind::mean: return "mean";
        case OpKind::sum: return "sum";
        case OpKind::l2_normalize: return "l2_normalize";
        case OpKind::broadcast_add: return "broadcast_add";
        case OpKind::remap: return "remap";
    }
    return "?";
}

namespace detail {

template <class T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

// log(sigmoid(x)) = -softplus(-x), safe against exp overflow
template <class T>
T stable_log_sigmoid(T x) {
    if (x >= T(0)) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

}  // namespace detail

template <class T>
class TapeT {
  public:
    struct Node {
        OpKind kind = OpKind::leaf;
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;
        std::array<int, 2> in{-1, -1};
        double aux = 0.0;             // scale factor / leaky slope
        std::vector<T> saved;         // per-row norms for l2_normalize
        std::vector<int32_t> idx;     // gather table for remap
        bool needs_grad = false;
        TensorT<T>* leaf_out = nullptr;  // grad writeback target
    };

    // --- leaf registration ---

    // Parameter or input leaf. If t.requires_grad, backward() writes d(loss)/dt
    // into t.grad. The tensor must outlive the tape.
    int leaf(TensorT<T>& t) {
        check_finite(t.data, "leaf");
        Node n;
        n.kind = OpKind::leaf;
        n.shape = t.shape;
        n.value = t.data;
        n.needs_grad = t.requires_grad;
        n.leaf_out = t.requires_grad ? &t : nullptr;
        return push(std::move(n));
    }

    // Constant leaf: participates in values only, never in gradients.
    int constant(const TensorT<T>& t) {
        check_finite(t.data, "constant");
        Node n;
        n.kind = OpKind::leaf;
        n.shape = t.shape;
        n.value = t.data;
        return push(std::move(n));
    }

    int constant(Shape shape, std::vector<T> data) {
        if (data.size() != numel(shape))
            throw ShapeError("constant data size does not match shape " + shape_str(shape));
        check_finite(data, "constant");
        Node n;
        n.kind = OpKind::leaf;
        n.shape = std::move(shape);
        n.value = std::move(data);
        return push(std::move(n));
    }

    // --- ops ---

    int matmul(int a, int b) {
        const Node& na = at(a);
        const Node& nb = at(b);
        if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
            bad_shapes("matmul", na.shape, nb.shape);
        int m = na.shape[0], k = na.shape[1], n = nb.shape[1];
        Node out = make(OpKind::matmul, {m, n}, a, b);
        const T* A = na.value.data();
        const T* B = nb.value.data();
        T* C = out.value.data();
        for (int i = 0; i < m; ++i) {
            T* ci = C + static_cast<size_t>(i) * n;
            for (int kk = 0; kk < k; ++kk) {
                T aik = A[static_cast<size_t>(i) * k + kk];
                const T* bk = B + static_cast<size_t>(kk) * n;
                for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
            }
        }
        return commit(std::move(out));
    }

    int add(int a, int b) { return elementwise(OpKind::add, a, b); }
    int sub(int a, int b) { return elementwise(OpKind::sub, a, b); }
    int mul_elem(int a, int b) { return elementwise(OpKind::mul_elem, a, b); }

    int scale(int a, double c) {
        const Node& na = at(a);
        Node out = make(OpKind::scale, na.shape, a);
        out.aux = c;
        for (size_t i = 0; i < na.value.size(); ++i) out.value[i] = static_cast<T>(na.value[i] * c);
        return commit(std::move(out));
    }

    int leaky_relu(int a, double slope = 0.2) {
        const Node& na = at(a);
        Node out = make(OpKind::leaky_relu, na.shape, a);
        out.aux = slope;
        for (size_t i = 0; i < na.value.size(); ++i) {
            T x = na.value[i];
            out.value[i] = x > T(0) ? x : static_cast<T>(x * slope);
        }
        return commit(std::move(out));
    }

    int tanh(int a) {
        const Node& na = at(a);
        Node out = make(OpKind::tanh, na.shape, a);
        for (size_t i = 0; i < na.value.size(); ++i) out.value[i] = std::tanh(na.value[i]);
        return commit(std::move(out));
    }

    int sigmoid(int a) {
        const Node& na = at(a);
        Node out = make(OpKind::sigmoid, na.shape, a);
        for (size_t i = 0; i < na.value.size(); ++i)
            out.value[i] = detail::stable_sigmoid(na.value[i]);
        return commit(std::move(out));
    }

    int log_sigmoid(int a) {
        const Node& na = at(a);
        Node out = make(OpKind::log_sigmoid, na.shape, a);
        for (size_t i = 0; i < na.value.size(); ++i)
            out.value[i] = detail::stable_log_sigmoid(na.value[i]);
        return commit(std::move(out));
    }

    int mean(int a) { return reduce(OpKind::mean, a); }
    int sum(int a) { return reduce(OpKind::sum, a); }

    // Rows of a rank-2 tensor (or the whole rank-1 tensor) scaled to unit norm.
    int l2_normalize(int a) {
        const Node& na = at(a);
        auto [rows, cols] = rows_cols(na.shape);
        Node out = make(OpKind::l2_normalize, na.shape, a);
        out.saved.resize(rows);
        for (int r = 0; r < rows; ++r) {
            const T* x = na.value.data() + static_cast<size_t>(r) * cols;
            double ss = 0.0;
            for (int j = 0; j < cols; ++j) ss += double(x[j]) * double(x[j]);
            T norm = static_cast<T>(std::sqrt(ss));
            if (!(norm > T(0))) norm = std::numeric_limits<T>::min();
            out.saved[r] = norm;
            T* y = out.value.data() + static_cast<size_t>(r) * cols;
            for (int j = 0; j < cols; ++j) y[j] = x[j] / norm;
        }
        return commit(std::move(out));
    }

    // [B,D] + [D] (or [1,D]), the vector added to every row
    int broadcast_add(int a, int b) {
        const Node& na = at(a);
        const Node& nb = at(b);
        int cols = row_vector_cols(nb.shape);
        if (na.shape.size() != 2 || cols < 0 || na.shape[1] != cols)
            bad_shapes("broadcast_add", na.shape, nb.shape);
        int rows = na.shape[0];
        Node out = make(OpKind::broadcast_add, na.shape, a, b);
        for (int r = 0; r < rows; ++r) {
            const T* x = na.value.data() + static_cast<size_t>(r) * cols;
            T* y = out.value.data() + static_cast<size_t>(r) * cols;
            for (int j = 0; j < cols; ++j) y[j] = x[j] + nb.value[j];
        }
        return commit(std::move(out));
    }

    // out[i] = in[idx[i]]; idx.size() == numel(in). Gradient scatter-adds
    // through the table, which is exactly index-remapped backprop.
    int remap(int a, std::vector<int32_t> idx) {
        const Node& na = at(a);
        if (idx.size() != na.value.size())
            throw ShapeError(std::string("remap: index table size ") + std::to_string(idx.size()) +
                             " does not match input " + shape_str(na.shape));
        size_t n = na.value.size();
        for (size_t i = 0; i < n; ++i)
            if (idx[i] < 0 || static_cast<size_t>(idx[i]) >= n)
                throw ShapeError("remap: index out of range");
        Node out = make(OpKind::remap, na.shape, a);
        out.idx = std::move(idx);
        for (size_t i = 0; i < n; ++i) out.value[i] = na.value[out.idx[i]];
        return commit(std::move(out));
    }

    // Generic dispatcher over the op table; unary/binary arity per kind.
    int apply(OpKind k, const std::vector<int>& in, double aux = 0.0) {
        auto unary = [&](int) {
            if (in.size() != 1) throw ShapeError(std::string(op_name(k)) + ": expected 1 input");
        };
        auto binary = [&]() {
            if (in.size() != 2) throw ShapeError(std::string(op_name(k)) + ": expected 2 inputs");
        };
        switch (k) {
            case OpKind::matmul: binary(); return matmul(in[0], in[1]);
            case OpKind::add: binary(); return add(in[0], in[1]);
            case OpKind::sub: binary(); return sub(in[0], in[1]);
            case OpKind::mul_elem: binary(); return mul_elem(in[0], in[1]);
            case OpKind::scale: unary(0); return scale(in[0], aux);
            case OpKind::leaky_relu: unary(0); return leaky_relu(in[0], aux);
            case OpKind::tanh: unary(0); return tanh(in[0]);
            case OpKind::sigmoid: unary(0); return sigmoid(in[0]);
            case OpKind::log_sigmoid: unary(0); return log_sigmoid(in[0]);
            case OpKind::mean: unary(0); return mean(in[0]);
            case OpKind::sum: unary(0); return sum(in[0]);
            case OpKind::l2_normalize: unary(0); return l2_normalize(in[0]);
            case OpKind::broadcast_add: binary(); return broadcast_add(in[0], in[1]);
            default: throw ShapeError(std::string("apply: ") + op_name(k) + " is not applicable");
        }
    }

    // --- access ---

    const std::vector<T>& value(int id) const { return at(id).value; }
    const Shape& shape(int id) const { return at(id).shape; }
    T scalar(int id) const {
        const Node& n = at(id);
        if (n.value.size() != 1) throw ShapeError("scalar: node is not scalar");
        return n.value[0];
    }
    const std::vector<T>& grad(int id) const {
        if (!backward_done_) throw Error("grad: backward has not run");
        return at(id).grad;
    }
    size_t node_count() const { return nodes_.size(); }

    // --- backward ---

    // Fills grad buffers of all requires_grad leaves with d(loss)/d(leaf).
    // One shot per tape: the recording is consumed.
    void backward(int loss) {
        if (backward_done_) throw Error("backward: tape already consumed");
        Node& ln = nodes_.at(static_cast<size_t>(loss));
        if (ln.value.size() != 1) throw ShapeError("backward: loss must be scalar");
        backward_done_ = true;
        ln.grad.assign(1, T(1));
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.needs_grad || n.grad.empty()) continue;
            pull(n);
            if (n.leaf_out) n.leaf_out->grad = n.grad;
        }
    }

  private:
    std::vector<Node> nodes_;
    bool backward_done_ = false;

    const Node& at(int id) const { return nodes_.at(static_cast<size_t>(id)); }

    Node make(OpKind k, Shape shape, int a, int b = -1) {
        Node n;
        n.kind = k;
        n.shape = std::move(shape);
        n.value.assign(numel(n.shape), T(0));
        n.in = {a, b};
        n.needs_grad = at(a).needs_grad || (b >= 0 && at(b).needs_grad);
        return n;
    }

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int commit(Node n) {
        check_finite(n.value, op_name(n.kind));
        return push(std::move(n));
    }

    void check_finite(const std::vector<T>& v, const char* where) const {
        for (T x : v)
            if (!std::isfinite(x))
                throw NonFiniteError(std::string("non-finite value in ") + where);
    }

    [[noreturn]] void bad_shapes(const char* op, const Shape& a, const Shape& b) const {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
    }

    static std::pair<int, int> rows_cols(const Shape& s) {
        if (s.size() == 1) return {1, s[0]};
        if (s.size() == 2) return {s[0], s[1]};
        throw ShapeError("expected rank 1 or 2, got " + shape_str(s));
    }

    // cols if s is [D] or [1,D], else -1
    static int row_vector_cols(const Shape& s) {
        if (s.size() == 1) return s[0];
        if (s.size() == 2 && s[0] == 1) return s[1];
        return -1;
    }

    // add/sub/mul_elem over equal shapes, or [B,D] against a [D] row vector
    // on either side
    int elementwise(OpKind k, int a, int b) {
        const Node& na = at(a);
        const Node& nb = at(b);
        bool bcast_b = false, bcast_a = false;
        Shape out_shape;
        if (na.shape == nb.shape) {
            out_shape = na.shape;
        } else if (na.shape.size() == 2 && row_vector_cols(nb.shape) == na.shape[1]) {
            out_shape = na.shape;
            bcast_b = true;
        } else if (nb.shape.size() == 2 && row_vector_cols(na.shape) == nb.shape[1]) {
            out_shape = nb.shape;
            bcast_a = true;
        } else {
            bad_shapes(op_name(k), na.shape, nb.shape);
        }
        Node out = make(k, out_shape, a, b);
        auto [rows, cols] = rows_cols(out_shape);
        for (int r = 0; r < rows; ++r) {
            size_t ro = static_cast<size_t>(r) * cols;
            const T* xa = na.value.data() + (bcast_a ? 0 : ro);
            const T* xb = nb.value.data() + (bcast_b ? 0 : ro);
            T* y = out.value.data() + ro;
            switch (k) {
                case OpKind::add:
                    for (int j = 0; j < cols; ++j) y[j] = xa[j] + xb[j];
                    break;
                case OpKind::sub:
                    for (int j = 0; j < cols; ++j) y[j] = xa[j] - xb[j];
                    break;
                default:
                    for (int j = 0; j < cols; ++j) y[j] = xa[j] * xb[j];
            }
        }
        return commit(std::move(out));
    }

    int reduce(OpKind k, int a) {
        const Node& na = at(a);
        Node out = make(k, {1}, a);
        double acc = 0.0;
        for (T x : na.value) acc += double(x);
        if (k == OpKind::mean) acc /= double(na.value.size());
        out.value[0] = static_cast<T>(acc);
        return commit(std::move(out));
    }

    void add_grad(int id, const std::vector<T>& g) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad) return;
        if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
        for (size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }

    // route n.grad into n's inputs
    void pull(Node& n) {
        const std::vector<T>& go = n.grad;
        switch (n.kind) {
            case OpKind::leaf:
                return;
            case OpKind::matmul: {
                const Node& na = at(n.in[0]);
                const Node& nb = at(n.in[1]);
                int m = na.shape[0], k = na.shape[1], cols = nb.shape[1];
                if (at(n.in[0]).needs_grad) {
                    std::vector<T> ga(na.value.size(), T(0));
                    // dA[i,k] = dot(dC[i,:], B[k,:])
                    for (int i = 0; i < m; ++i) {
                        const T* gi = go.data() + static_cast<size_t>(i) * cols;
                        for (int kk = 0; kk < k; ++kk) {
                            const T* bk = nb.value.data() + static_cast<size_t>(kk) * cols;
                            T acc = T(0);
                            for (int j = 0; j < cols; ++j) acc += gi[j] * bk[j];
                            ga[static_cast<size_t>(i) * k + kk] = acc;
                        }
                    }
                    add_grad(n.in[0], ga);
                }
                if (at(n.in[1]).needs_grad) {
                    std::vector<T> gb(nb.value.size(), T(0));
                    // dB[k,:] += A[i,k] * dC[i,:]
                    for (int i = 0; i < m; ++i) {
                        const T* gi = go.data() + static_cast<size_t>(i) * cols;
                        for (int kk = 0; kk < k; ++kk) {
                            T aik = na.value[static_cast<size_t>(i) * k + kk];
                            T* gk = gb.data() + static_cast<size_t>(kk) * cols;
                            for (int j = 0; j < cols; ++j) gk[j] += aik * gi[j];
                        }
                    }
                    add_grad(n.in[1], gb);
                }
                return;
            }
            case OpKind::add:
            case OpKind::sub:
            case OpKind::mul_elem: {
                const Node& na = at(n.in[0]);
                const Node& nb = at(n.in[1]);
                auto [rows, cols] = rows_cols(n.shape);
                bool bcast_a = na.shape != n.shape;
                bool bcast_b = nb.shape != n.shape;
                if (na.needs_grad) {
                    std::vector<T> ga(na.value.size(), T(0));
                    for (int r = 0; r < rows; ++r) {
                        size_t ro = static_cast<size_t>(r) * cols;
                        const T* g = go.data() + ro;
                        T* dst = ga.data() + (bcast_a ? 0 : ro);
                        if (n.kind == OpKind::mul_elem) {
                            const T* xb = nb.value.data() + (bcast_b ? 0 : ro);
                            for (int j = 0; j < cols; ++j) dst[j] += g[j] * xb[j];
                        } else {
                            for (int j = 0; j < cols; ++j) dst[j] += g[j];
                        }
                    }
                    add_grad(n.in[0], ga);
                }
                if (nb.needs_grad) {
                    std::vector<T> gb(nb.value.size(), T(0));
                    T sign = n.kind == OpKind::sub ? T(-1) : T(1);
                    for (int r = 0; r < rows; ++r) {
                        size_t ro = static_cast<size_t>(r) * cols;
                        const T* g = go.data() + ro;
                        T* dst = gb.data() + (bcast_b ? 0 : ro);
                        if (n.kind == OpKind::mul_elem) {
                            const T* xa = na.value.data() + (bcast_a ? 0 : ro);
                            for (int j = 0; j < cols; ++j) dst[j] += g[j] * xa[j];
                        } else {
                            for (int j = 0; j < cols; ++j) dst[j] += sign * g[j];
                        }
                    }
                    add_grad(n.in[1], gb);
                }
                return;
            }
            case OpKind::scale: {
                std::vector<T> ga(go.size());
                for (size_t i = 0; i < go.size(); ++i) ga[i] = static_cast<T>(go[i] * n.aux);
                add_grad(n.in[0], ga);
                return;
            }
            case OpKind::leaky_relu: {
                const Node& na = at(n.in[0]);
                std::vector<T> ga(go.size());
                for (size_t i = 0; i < go.size(); ++i)
                    ga[i] = na.value[i] > T(0) ? go[i] : static_cast<T>(go[i] * n.aux);
                add_grad(n.in[0], ga);
                return;
            }
            case OpKind::tanh: {
                std::vector<T> ga(go.size());
                for (size_t i = 0; i < go.size(); ++i)
                    ga[i] = go[i] * (T(1) - n.value[i] * n.value[i]);
                add_grad(n.in[0], ga);
                return;
            }
            case OpKind::sigmoid: {
                std::vector<T> ga(go.size());
                for (size_t i = 0; i < go.size(); ++i)
                    ga[i] = go[i] * n.value[i] * (T(1) - n.value[i]);
                add_grad(n.in[0], ga);
                return;
            }
            case OpKind::log_sigmoid: {
                const Node& na = at(n.in[0]);
                std::vector<T> ga(go.size());
                for (size_t i = 0; i < go.size(); ++i)
                    ga[i] = go[i] * detail::stable_sigmoid(-na.value[i]);
                add_grad(n.in[0], ga);
                return;
            }
            case OpKind::mean:
            case OpKind::sum: {
                const Node& na = at(n.in[0]);
                T g = go[0];
                if (n.kind == OpKind::mean) g = static_cast<T>(double(g) / double(na.value.size()));
                std::vector<T> ga(na.value.size(), g);
                add_grad(n.in[0], ga);
                return;
            }
            case OpKind::l2_normalize: {
                const Node& na = at(n.in[0]);
                auto [rows, cols] = rows_cols(n.shape);
                std::vector<T> ga(na.value.size());
                for (int r = 0; r < rows; ++r) {
                    size_t ro = static_cast<size_t>(r) * cols;
                    const T* y = n.value.data() + ro;
                    const T* g = go.data() + ro;
                    double dot = 0.0;
                    for (int j = 0; j < cols; ++j) dot += double(y[j]) * double(g[j]);
                    T norm = n.saved[static_cast<size_t>(r)];
                    for (int j = 0; j < cols; ++j)
                        ga[ro + j] = static_cast<T>((double(g[j]) - dot * double(y[j])) / double(norm));
                }
                add_grad(n.in[0], ga);
                return;
            }
            case OpKind::broadcast_add: {
                const Node& nb = at(n.in[1]);
                auto [rows, cols] = rows_cols(n.shape);
                if (at(n.in[0]).needs_grad) add_grad(n.in[0], go);
                if (nb.needs_grad) {
                    std::vector<T> gb(nb.value.size(), T(0));
                    for (int r = 0; r < rows; ++r)
                        for (int j = 0; j < cols; ++j)
                            gb[static_cast<size_t>(j)] += go[static_cast<size_t>(r) * cols + j];
                    add_grad(n.in[1], gb);
                }
                return;
            }
            case OpKind::remap: {
                const Node& na = at(n.in[0]);
                std::vector<T> ga(na.value.size(), T(0));
                for (size_t i = 0; i < go.size(); ++i) ga[static_cast<size_t>(n.idx[i])] += go[i];
                add_grad(n.in[0], ga);
                return;
            }
        }
    }
};

using Tape = TapeT<float>;

// ---------------------------------------------------------------------------
// gradient checking (always in double)

// f builds a scalar loss on the given tape from the registered input node and
// returns its node id. Returns the max relative error between analytic and
// central-difference gradients; +inf if anything went non-finite.
template <class F>
double grad_check(F&& f, const TensorT<double>& x0, double eps = 1e-5) {
    auto eval = [&](const std::vector<double>& xs) {
        TensorT<double> x(x0.shape, xs, false);
        TapeT<double> tape;
        int in = tape.leaf(x);
        int loss = f(tape, in);
        return double(tape.scalar(loss));
    };

    std::vector<double> analytic;
    try {
        TensorT<double> x(x0.shape, x0.data, true);
        TapeT<double> tape;
        int in = tape.leaf(x);
        int loss = f(tape, in);
        tape.backward(loss);
        analytic = x.grad;
        if (analytic.empty()) analytic.assign(x0.size(), 0.0);

        double worst = 0.0;
        std::vector<double> xs = x0.data;
        for (size_t i = 0; i < xs.size(); ++i) {
            double keep = xs[i];
            xs[i] = keep + eps;
            double fp = eval(xs);
            xs[i] = keep - eps;
            double fm = eval(xs);
            xs[i] = keep;
            double numeric = (fp - fm) / (2.0 * eps);
            if (!std::isfinite(numeric)) return std::numeric_limits<double>::infinity();
            double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
            worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
        }
        return worst;
    } catch (const NonFiniteError&) {
        return std::numeric_limits<double>::infinity();
    }
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.0;   // momentum off by default, per the training recipe
    double beta2 = 0.99;
    double eps = 1e-8;
};

template <class T>
struct AdamState {
    int64_t step = 0;
    std::vector<T> m, v;
};

// One bias-corrected Adam update of p from p.grad.
template <class T>
void adam_step(TensorT<T>& p, AdamState<T>& s, const AdamConfig& c) {
    if (p.grad.size() != p.data.size())
        throw ShapeError("adam_step: grad buffer missing or mis-sized");
    if (s.m.empty()) {
        s.m.assign(p.data.size(), T(0));
        s.v.assign(p.data.size(), T(0));
    }
    s.step += 1;
    double bc1 = 1.0 - std::pow(c.beta1, double(s.step));
    double bc2 = 1.0 - std::pow(c.beta2, double(s.step));
    for (size_t i = 0; i < p.data.size(); ++i) {
        double g = double(p.grad[i]);
        double m = c.beta1 * double(s.m[i]) + (1.0 - c.beta1) * g;
        double v = c.beta2 * double(s.v[i]) + (1.0 - c.beta2) * g * g;
        s.m[i] = static_cast<T>(m);
        s.v[i] = static_cast<T>(v);
        double update = c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
        p.data[i] = static_cast<T>(double(p.data[i]) - update);
    }
}

// Adam over a fixed parameter group sharing one config.
template <class T>
class AdamOpt {
  public:
    AdamOpt() = default;
    AdamOpt(std::vector<TensorT<T>*> params, AdamConfig cfg)
        : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

    void step() {
        for (size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i], cfg_);
    }

    void zero_grads() {
        for (auto* p : params_) p->zero_grad();
    }

    const AdamConfig& config() const { return cfg_; }
    const std::vector<TensorT<T>*>& params() const { return params_; }
    std::vector<AdamState<T>>& states() { return states_; }

  private:
    std::vector<TensorT<T>*> params_;
    std::vector<AdamState<T>> states_;
    AdamConfig cfg_;
};

}  // namespace genda
