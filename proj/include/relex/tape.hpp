// Reverse-mode differentiation over a dynamically recorded tape of rank<=2
// tensors. Values are computed eagerly at node creation; backward walks the
// tape in reverse creation order, which is a reverse topological order
// because parents always precede children.
//
// The tape is parameterized on its scalar type: training and inference run
// on double, the finite-difference checker re-evaluates losses on long
// double where the difference quotient is not drowned by rounding at the
// tolerance the checks demand.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "relex/matrix.hpp"
#include "relex/rng.hpp"

namespace relex {

enum class OpTag {
    leaf,
    matmul,
    add,
    concat,       // axis 0 stacks rows, axis 1 stacks columns
    tanh_op,
    sigmoid_op,
    softmax,
    mul,          // elementwise
    row_lookup,
    dot,
    scale,
    cross_entropy // -log softmax(logits)[gold], fused for stability
};

inline const char* op_name(OpTag t) {
    switch (t) {
        case OpTag::leaf: return "leaf";
        case OpTag::matmul: return "matmul";
        case OpTag::add: return "add";
        case OpTag::concat: return "concat";
        case OpTag::tanh_op: return "tanh";
        case OpTag::sigmoid_op: return "sigmoid";
        case OpTag::softmax: return "softmax";
        case OpTag::mul: return "elementwise-mul";
        case OpTag::row_lookup: return "row-lookup";
        case OpTag::dot: return "dot";
        case OpTag::scale: return "scale";
        case OpTag::cross_entropy: return "cross-entropy";
    }
    return "?";
}

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

template <typename S>
class TapeT {
public:
    using Scalar = S;

    explicit TapeT(uint64_t seed = 0) : seed_(seed), rng_(seed) {}

    uint64_t seed() const { return seed_; }
    size_t size() const { return nodes_.size(); }

    // ---- leaves ----

    Var constant(const Mat& v) {
        Node n;
        n.op = OpTag::leaf;
        n.value = from_mat(v);
        return push(std::move(n));
    }

    Var scalar(double v) {
        Node n;
        n.op = OpTag::leaf;
        n.value = TMat(1, 1);
        n.value.a[0] = static_cast<S>(v);
        return push(std::move(n));
    }

    // Leaf bound to external parameter storage. Binding the same Mat twice
    // returns the original node so gradients accumulate in one place.
    Var param(const Mat& external) {
        auto it = bound_.find(&external);
        if (it != bound_.end()) return Var{it->second};
        Node n;
        n.op = OpTag::leaf;
        n.value = from_mat(external);
        Var v = push(std::move(n));
        bound_[&external] = v.idx;
        return v;
    }

    // ---- ops ----

    Var matmul(Var a, Var b) {
        const TMat& A = val(a);
        const TMat& B = val(b);
        if (A.cols != B.rows) fail(OpTag::matmul, A, B);
        Node n = binop(OpTag::matmul, a, b, TMat(A.rows, B.cols));
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < B.cols; ++j) {
                KahanSumT<S> s;
                for (int k = 0; k < A.cols; ++k) s.add(A(i, k) * B(k, j));
                n.value(i, j) = s.value();
            }
        return push(std::move(n));
    }

    Var add(Var a, Var b) {
        const TMat& A = val(a);
        const TMat& B = val(b);
        if (!A.same_shape(B)) fail(OpTag::add, A, B);
        Node n = binop(OpTag::add, a, b, TMat(A.rows, A.cols));
        for (size_t i = 0; i < A.a.size(); ++i) n.value.a[i] = A.a[i] + B.a[i];
        return push(std::move(n));
    }

    Var mul(Var a, Var b) {
        const TMat& A = val(a);
        const TMat& B = val(b);
        if (!A.same_shape(B)) fail(OpTag::mul, A, B);
        Node n = binop(OpTag::mul, a, b, TMat(A.rows, A.cols));
        for (size_t i = 0; i < A.a.size(); ++i) n.value.a[i] = A.a[i] * B.a[i];
        return push(std::move(n));
    }

    // Stack column vectors (axis 0) or glue equal-height columns (axis 1).
    Var concat(std::span<const Var> parts, int axis) {
        if (parts.empty()) throw std::runtime_error("concat: no parts");
        Node n;
        n.op = OpTag::concat;
        n.aux = axis;
        int total = 0;
        const TMat& first = val(parts[0]);
        for (Var p : parts) {
            const TMat& m = val(p);
            if (axis == 0) {
                if (m.cols != first.cols) fail(OpTag::concat, first, m);
                total += m.rows;
            } else {
                if (m.rows != first.rows) fail(OpTag::concat, first, m);
                total += m.cols;
            }
            n.parents.push_back(p.idx);
        }
        if (axis == 0) {
            n.value = TMat(total, first.cols);
            int r0 = 0;
            for (Var p : parts) {
                const TMat& m = val(p);
                for (int r = 0; r < m.rows; ++r)
                    for (int c = 0; c < m.cols; ++c) n.value(r0 + r, c) = m(r, c);
                r0 += m.rows;
            }
        } else {
            n.value = TMat(first.rows, total);
            int c0 = 0;
            for (Var p : parts) {
                const TMat& m = val(p);
                for (int r = 0; r < m.rows; ++r)
                    for (int c = 0; c < m.cols; ++c) n.value(r, c0 + c) = m(r, c);
                c0 += m.cols;
            }
        }
        return push(std::move(n));
    }

    Var concat_rows(std::span<const Var> parts) { return concat(parts, 0); }
    Var concat_cols(std::span<const Var> parts) { return concat(parts, 1); }

    Var tanh(Var a) {
        const TMat& A = val(a);
        Node n = unop(OpTag::tanh_op, a, TMat(A.rows, A.cols));
        for (size_t i = 0; i < A.a.size(); ++i) n.value.a[i] = std::tanh(A.a[i]);
        return push(std::move(n));
    }

    Var sigmoid(Var a) {
        const TMat& A = val(a);
        Node n = unop(OpTag::sigmoid_op, a, TMat(A.rows, A.cols));
        for (size_t i = 0; i < A.a.size(); ++i)
            n.value.a[i] = S(1) / (S(1) + std::exp(-A.a[i]));
        return push(std::move(n));
    }

    // Column-vector softmax with max subtraction.
    Var softmax(Var a) {
        const TMat& A = val(a);
        if (A.cols != 1) fail(OpTag::softmax, A, A);
        Node n = unop(OpTag::softmax, a, TMat(A.rows, 1));
        n.value.a = stable_softmax_t<S>(A.a);
        return push(std::move(n));
    }

    Var row_lookup(Var table, int row) {
        const TMat& T = val(table);
        if (row < 0 || row >= T.rows)
            throw std::runtime_error(std::string("row-lookup: row ") +
                                     std::to_string(row) + " outside table " +
                                     T.shape_str());
        Node n = unop(OpTag::row_lookup, table, TMat(T.cols, 1));
        n.aux = row;
        for (int c = 0; c < T.cols; ++c) n.value.a[c] = T(row, c);
        return push(std::move(n));
    }

    Var dot(Var a, Var b) {
        const TMat& A = val(a);
        const TMat& B = val(b);
        if (!A.same_shape(B) || A.cols != 1) fail(OpTag::dot, A, B);
        Node n = binop(OpTag::dot, a, b, TMat(1, 1));
        KahanSumT<S> s;
        for (size_t i = 0; i < A.a.size(); ++i) s.add(A.a[i] * B.a[i]);
        n.value.a[0] = s.value();
        return push(std::move(n));
    }

    Var scale(Var a, double c) {
        const TMat& A = val(a);
        Node n = unop(OpTag::scale, a, TMat(A.rows, A.cols));
        n.factor = static_cast<S>(c);
        for (size_t i = 0; i < A.a.size(); ++i) n.value.a[i] = n.factor * A.a[i];
        return push(std::move(n));
    }

    // -log softmax(logits)[gold]; caches the softmax for backward.
    Var cross_entropy(Var logits, int gold) {
        const TMat& Z = val(logits);
        if (Z.cols != 1) fail(OpTag::cross_entropy, Z, Z);
        if (gold < 0 || gold >= Z.rows)
            throw std::runtime_error("cross-entropy: gold index " +
                                     std::to_string(gold) + " outside logits " +
                                     Z.shape_str());
        Node n = unop(OpTag::cross_entropy, logits, TMat(1, 1));
        n.aux = gold;
        n.cache = TMat(Z.rows, 1);
        n.cache.a = stable_softmax_t<S>(Z.a);
        S m = Z.a[0];
        for (S x : Z.a) m = std::max(m, x);
        KahanSumT<S> lse;
        for (S x : Z.a) lse.add(std::exp(x - m));
        n.value.a[0] = -(Z.a[gold] - m - std::log(lse.value()));
        return push(std::move(n));
    }

    // Inverted dropout recorded as an elementwise-mul with a mask drawn from
    // the tape's own RNG, so forward and backward see the same mask.
    Var dropout(Var a, double rate) {
        if (rate <= 0.0) return a;
        if (rate >= 1.0) throw std::runtime_error("dropout: rate must be < 1");
        const TMat& A = val(a);
        Mat mask(A.rows, A.cols);
        double keep = 1.0 - rate;
        for (int i = 0; i < mask.size(); ++i)
            mask.a[i] = rng_.bernoulli(rate) ? 0.0 : 1.0 / keep;
        return mul(a, constant(mask));
    }

    // ---- evaluation ----

    Mat value(Var v) const { return to_mat(val(v)); }

    // exact scalar in the tape's own precision
    S scalar_value(Var v) const {
        const TMat& m = val(v);
        if (m.rows != 1 || m.cols != 1)
            throw std::runtime_error("scalar_value: node is " + m.shape_str());
        return m.a[0];
    }

    // Forward values are cached at construction; this validates and returns.
    Mat eval_graph(Var root) const { return to_mat(val(root)); }

    void backward(Var loss) {
        const TMat& L = val(loss);
        if (L.rows != 1 || L.cols != 1)
            throw std::runtime_error("backward: loss must be scalar, got " +
                                     L.shape_str());
        for (auto& n : nodes_) n.adjoint = TMat();
        nodes_[loss.idx].adjoint = TMat(1, 1);
        nodes_[loss.idx].adjoint.a[0] = S(1);
        for (int i = loss.idx; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.adjoint.a.empty() || n.op == OpTag::leaf) continue;
            scatter(n);
        }
    }

    Mat adjoint(Var v) const {
        if (nodes_[v.idx].adjoint.a.empty()) return Mat();
        return to_mat(nodes_[v.idx].adjoint);
    }

    // Gradient for an external parameter; zeros when the parameter never
    // entered this graph (unreachable leaves report zero).
    Mat gradient(const Mat& external) const {
        auto it = bound_.find(&external);
        if (it == bound_.end() || nodes_[it->second].adjoint.a.empty())
            return Mat::zeros(external.rows, external.cols);
        return to_mat(nodes_[it->second].adjoint);
    }

private:
    struct TMat {
        int rows = 0, cols = 0;
        std::vector<S> a;
        TMat() = default;
        TMat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, S(0)) {}
        S& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
        S operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
        bool same_shape(const TMat& o) const { return rows == o.rows && cols == o.cols; }
        std::string shape_str() const {
            return std::to_string(rows) + "x" + std::to_string(cols);
        }
    };

    struct Node {
        TMat value;
        TMat adjoint;
        TMat cache; // softmax of logits for cross_entropy
        OpTag op = OpTag::leaf;
        std::vector<int> parents;
        int aux = -1;    // concat axis / lookup row / gold index
        S factor = S(1); // scale
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Mat*, int> bound_;
    uint64_t seed_;
    Rng rng_;

    static TMat from_mat(const Mat& m) {
        TMat t(m.rows, m.cols);
        for (size_t i = 0; i < m.a.size(); ++i) t.a[i] = static_cast<S>(m.a[i]);
        return t;
    }

    static Mat to_mat(const TMat& t) {
        Mat m(t.rows, t.cols);
        for (size_t i = 0; i < t.a.size(); ++i) m.a[i] = static_cast<double>(t.a[i]);
        return m;
    }

    const TMat& val(Var v) const {
        if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
            throw std::runtime_error("tape: invalid node handle");
        return nodes_[v.idx].value;
    }

    [[noreturn]] void fail(OpTag t, const TMat& a, const TMat& b) const {
        throw std::runtime_error(std::string(op_name(t)) + ": shape mismatch " +
                                 a.shape_str() + " vs " + b.shape_str());
    }

    Node unop(OpTag t, Var a, TMat out) {
        Node n;
        n.op = t;
        n.parents = {a.idx};
        n.value = std::move(out);
        return n;
    }

    Node binop(OpTag t, Var a, Var b, TMat out) {
        Node n;
        n.op = t;
        n.parents = {a.idx, b.idx};
        n.value = std::move(out);
        return n;
    }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    TMat& adj(int idx, const TMat& like) {
        Node& p = nodes_[idx];
        if (p.adjoint.a.empty()) p.adjoint = TMat(like.rows, like.cols);
        return p.adjoint;
    }

    void scatter(Node& n) {
        const TMat& d = n.adjoint;
        switch (n.op) {
            case OpTag::matmul: {
                const TMat& A = nodes_[n.parents[0]].value;
                const TMat& B = nodes_[n.parents[1]].value;
                TMat& dA = adj(n.parents[0], A);
                TMat& dB = adj(n.parents[1], B);
                // dA += d * B^T ; dB += A^T * d
                for (int i = 0; i < A.rows; ++i)
                    for (int k = 0; k < A.cols; ++k) {
                        S s = S(0);
                        for (int j = 0; j < B.cols; ++j) s += d(i, j) * B(k, j);
                        dA(i, k) += s;
                    }
                for (int k = 0; k < B.rows; ++k)
                    for (int j = 0; j < B.cols; ++j) {
                        S s = S(0);
                        for (int i = 0; i < A.rows; ++i) s += A(i, k) * d(i, j);
                        dB(k, j) += s;
                    }
                break;
            }
            case OpTag::add: {
                for (int pi : n.parents) {
                    TMat& dP = adj(pi, nodes_[pi].value);
                    for (size_t i = 0; i < d.a.size(); ++i) dP.a[i] += d.a[i];
                }
                break;
            }
            case OpTag::mul: {
                const TMat& A = nodes_[n.parents[0]].value;
                const TMat& B = nodes_[n.parents[1]].value;
                TMat& dA = adj(n.parents[0], A);
                TMat& dB = adj(n.parents[1], B);
                for (size_t i = 0; i < d.a.size(); ++i) {
                    dA.a[i] += d.a[i] * B.a[i];
                    dB.a[i] += d.a[i] * A.a[i];
                }
                break;
            }
            case OpTag::concat: {
                int off = 0;
                for (int pi : n.parents) {
                    const TMat& P = nodes_[pi].value;
                    TMat& dP = adj(pi, P);
                    if (n.aux == 0) {
                        for (int r = 0; r < P.rows; ++r)
                            for (int c = 0; c < P.cols; ++c)
                                dP(r, c) += d(off + r, c);
                        off += P.rows;
                    } else {
                        for (int r = 0; r < P.rows; ++r)
                            for (int c = 0; c < P.cols; ++c)
                                dP(r, c) += d(r, off + c);
                        off += P.cols;
                    }
                }
                break;
            }
            case OpTag::tanh_op: {
                TMat& dA = adj(n.parents[0], n.value);
                for (size_t i = 0; i < d.a.size(); ++i) {
                    S y = n.value.a[i];
                    dA.a[i] += d.a[i] * (S(1) - y * y);
                }
                break;
            }
            case OpTag::sigmoid_op: {
                TMat& dA = adj(n.parents[0], n.value);
                for (size_t i = 0; i < d.a.size(); ++i) {
                    S y = n.value.a[i];
                    dA.a[i] += d.a[i] * y * (S(1) - y);
                }
                break;
            }
            case OpTag::softmax: {
                TMat& dA = adj(n.parents[0], n.value);
                S inner = S(0);
                for (size_t i = 0; i < d.a.size(); ++i) inner += d.a[i] * n.value.a[i];
                for (size_t i = 0; i < d.a.size(); ++i)
                    dA.a[i] += n.value.a[i] * (d.a[i] - inner);
                break;
            }
            case OpTag::row_lookup: {
                const TMat& T = nodes_[n.parents[0]].value;
                TMat& dT = adj(n.parents[0], T);
                for (int c = 0; c < T.cols; ++c) dT(n.aux, c) += d.a[c];
                break;
            }
            case OpTag::dot: {
                const TMat& A = nodes_[n.parents[0]].value;
                const TMat& B = nodes_[n.parents[1]].value;
                TMat& dA = adj(n.parents[0], A);
                TMat& dB = adj(n.parents[1], B);
                S s = d.a[0];
                for (size_t i = 0; i < A.a.size(); ++i) {
                    dA.a[i] += s * B.a[i];
                    dB.a[i] += s * A.a[i];
                }
                break;
            }
            case OpTag::scale: {
                TMat& dA = adj(n.parents[0], n.value);
                for (size_t i = 0; i < d.a.size(); ++i) dA.a[i] += n.factor * d.a[i];
                break;
            }
            case OpTag::cross_entropy: {
                const TMat& Z = nodes_[n.parents[0]].value;
                TMat& dZ = adj(n.parents[0], Z);
                S s = d.a[0];
                for (int i = 0; i < Z.rows; ++i) {
                    S g = n.cache.a[i] - (i == n.aux ? S(1) : S(0));
                    dZ.a[i] += s * g;
                }
                break;
            }
            case OpTag::leaf:
                break;
        }
    }
};

using Tape = TapeT<double>;

// Named handle to external parameter storage, shared by the optimizer,
// checkpointing and the gradient checker.
struct NamedParam {
    std::string name;
    Mat* value = nullptr;
    bool freeze_row0 = false; // PAD row of embedding tables
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
};

// Central-difference gradient check against the double-precision backward
// pass. Losses at the perturbed points are evaluated on a long double tape
// and combined on a five-point stencil,
//   g ~ [L(-2e) - 8 L(-e) + 8 L(+e) - L(+2e)] / (12 e):
// at eps = 1e-4 a plain double two-point quotient carries about 1 ulp of
// loss rounding, which alone exceeds the tolerance for parameters whose
// gradient sits under the denominator floor of the error formula. The
// builder must construct the loss on the tape it is given from the current
// parameter values; it is re-invoked per perturbation (tapes are rebuilt,
// seeds fixed, so any recorded masks repeat).
template <typename Builder>
GradCheckReport finite_diff_check(Builder&& build_loss,
                                  std::span<const NamedParam> params, double eps) {
    if (eps <= 0.0) throw std::runtime_error("finite_diff_check: eps must be > 0");

    Tape base(0);
    Var loss = build_loss(base);
    base.backward(loss);
    if (!std::isfinite(base.scalar_value(loss)))
        throw std::runtime_error("finite_diff_check: non-finite loss at base point");

    std::vector<Mat> bp;
    bp.reserve(params.size());
    for (const auto& p : params) bp.push_back(base.gradient(*p.value));

    auto eval = [&](const NamedParam& p, int i) -> long double {
        TapeT<long double> t(0);
        long double v = t.scalar_value(build_loss(t));
        if (!std::isfinite(static_cast<double>(v)))
            throw std::runtime_error(
                "finite_diff_check: non-finite loss at perturbed parameter " + p.name +
                "[" + std::to_string(i) + "]");
        return v;
    };

    GradCheckReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Mat& P = *params[pi].value;
        for (int i = 0; i < P.size(); ++i) {
            double save = P.a[i];
            auto at = [&](double offset) {
                P.a[i] = save + offset;
                long double v = eval(params[pi], i);
                P.a[i] = save;
                return v;
            };
            long double g5 = (at(-2 * eps) - 8.0L * at(-eps) + 8.0L * at(eps) -
                              at(2 * eps)) /
                             (12.0L * static_cast<long double>(eps));
            double g_fd = static_cast<double>(g5);
            double g_bp = bp[pi].a[i];
            double rel = std::fabs(g_bp - g_fd) /
                         std::max(1e-8, std::fabs(g_bp) + std::fabs(g_fd));
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = params[pi].name;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

} // namespace relex
