#include "partfield/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace partfield::ad {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

CMatMap cmap(const Tensor& t) { return CMatMap(t.data(), t.rows(), t.cols()); }
MatMap map(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }

enum class Broadcast { none, row, scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Broadcast::none;
    if (b.is_scalar()) return Broadcast::scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " vs " + b.shape_str());
}

void same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": vars from different tapes");
}

// Reduce an (m,n)-shaped gradient onto operand b's shape (row or scalar broadcast).
void reduce_into(Tape& t, Var b, const Tensor& g, Broadcast bc) {
    if (bc == Broadcast::none) {
        t.accumulate_grad(b, g);
        return;
    }
    Tensor& gb = t.grad_buffer(b);
    const int m = g.rows(), n = g.cols();
    if (bc == Broadcast::scalar) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
        gb[0] += s;
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) gb[j] += g.at(i, j);
    }
}

template <class F>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, Broadcast bc, F f) {
    Tensor out({a.rows(), a.cols()});
    const int m = a.rows(), n = a.cols();
    if (bc == Broadcast::none) {
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    } else if (bc == Broadcast::scalar) {
        const double bv = b[0];
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], bv);
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(i, j) = f(a.at(i, j), b[j]);
    }
    return out;
}

template <class F>
Tensor elementwise_unary(const Tensor& a, F f) {
    Tensor out({a.rows(), a.cols()});
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

}  // namespace

const Tensor Tape::empty_{};

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.leaf = true;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_node(Tensor value, bool requires_grad, BackwardFn back) {
    if (check_finite_) value.require_finite("tape op");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor({n.value.rows(), n.value.cols()});
    return n.grad;
}

void Tape::accumulate_grad(Var v, const Tensor& contribution) {
    Tensor& g = grad_buffer(v);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

void Tape::accumulate_grad_scaled(Var v, double s, const Tensor& contribution) {
    Tensor& g = grad_buffer(v);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * contribution[i];
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.grad.empty() ? empty_ : n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss from another tape");
    Node& ln = nodes_[loss.id];
    if (!ln.value.is_scalar()) throw std::invalid_argument("backward: loss must be scalar");
    ln.value.require_finite("loss");

    grad_buffer(loss)[0] += 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.requires_grad) continue;
        if (n.back) n.back(*this, n.grad);
        if (n.leaf) n.grad.require_finite("backward (leaf gradient)");
    }
}

void Tape::clear() { nodes_.clear(); }

// ---- ops -------------------------------------------------------------

Var add(Var a, Var b) {
    same_tape(a, b, "add");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    Broadcast bc = broadcast_kind(av, bv, "add");
    Tensor out = elementwise_binary(av, bv, bc, [](double x, double y) { return x + y; });
    bool rg = t.requires_grad(a) || t.requires_grad(b);
    bool ra = t.requires_grad(a), rb = t.requires_grad(b);
    return t.make_node(std::move(out), rg, [a, b, bc, ra, rb](Tape& tp, const Tensor& g) {
        if (ra) tp.accumulate_grad(a, g);
        if (rb) reduce_into(tp, b, g, bc);
    });
}

Var sub(Var a, Var b) {
    same_tape(a, b, "sub");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    Broadcast bc = broadcast_kind(av, bv, "sub");
    Tensor out = elementwise_binary(av, bv, bc, [](double x, double y) { return x - y; });
    bool ra = t.requires_grad(a), rb = t.requires_grad(b);
    return t.make_node(std::move(out), ra || rb, [a, b, bc, ra, rb](Tape& tp, const Tensor& g) {
        if (ra) tp.accumulate_grad(a, g);
        if (rb) {
            Tensor ng({g.rows(), g.cols()});
            for (std::size_t i = 0; i < g.size(); ++i) ng[i] = -g[i];
            reduce_into(tp, b, ng, bc);
        }
    });
}

Var mul(Var a, Var b) {
    same_tape(a, b, "mul");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    Broadcast bc = broadcast_kind(av, bv, "mul");
    Tensor out = elementwise_binary(av, bv, bc, [](double x, double y) { return x * y; });
    bool ra = t.requires_grad(a), rb = t.requires_grad(b);
    return t.make_node(std::move(out), ra || rb, [a, b, bc, ra, rb](Tape& tp, const Tensor& g) {
        const Tensor &av = a.value(), &bv = b.value();
        const int m = g.rows(), n = g.cols();
        if (ra) {
            Tensor ga({m, n});
            if (bc == Broadcast::none)
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
            else if (bc == Broadcast::scalar)
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[0];
            else
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) ga.at(i, j) = g.at(i, j) * bv[j];
            tp.accumulate_grad(a, ga);
        }
        if (rb) {
            Tensor gb({m, n});
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
            reduce_into(tp, b, gb, bc);
        }
    });
}

Var matmul(Var a, Var b) {
    same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    if (av.cols() != bv.rows())
        throw std::invalid_argument("matmul: inner dimensions mismatch " + av.shape_str() + " x " +
                                    bv.shape_str());
    Tensor out({av.rows(), bv.cols()});
    map(out).noalias() = cmap(av) * cmap(bv);
    bool ra = t.requires_grad(a), rb = t.requires_grad(b);
    return t.make_node(std::move(out), ra || rb, [a, b, ra, rb](Tape& tp, const Tensor& g) {
        const Tensor &av = a.value(), &bv = b.value();
        if (ra) {
            Tensor ga({av.rows(), av.cols()});
            map(ga).noalias() = cmap(g) * cmap(bv).transpose();
            tp.accumulate_grad(a, ga);
        }
        if (rb) {
            Tensor gb({bv.rows(), bv.cols()});
            map(gb).noalias() = cmap(av).transpose() * cmap(g);
            tp.accumulate_grad(b, gb);
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    Tensor out = elementwise_unary(a.value(), [s](double x) { return s * x; });
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra, [a, s](Tape& tp, const Tensor& g) {
        tp.accumulate_grad_scaled(a, s, g);
    });
}

Var offset(Var a, double c) {
    Tape& t = *a.tape;
    Tensor out = elementwise_unary(a.value(), [c](double x) { return x + c; });
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra,
                       [a](Tape& tp, const Tensor& g) { tp.accumulate_grad(a, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

namespace {
template <class F, class DF>
Var unary_op(Var a, F f, DF df) {
    Tape& t = *a.tape;
    Tensor out = elementwise_unary(a.value(), f);
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra, [a, df](Tape& tp, const Tensor& g) {
        const Tensor& av = a.value();
        Tensor ga({g.rows(), g.cols()});
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * df(av[i]);
        tp.accumulate_grad(a, ga);
    });
}
}  // namespace

Var sin(Var a) {
    return unary_op(a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}
Var cos(Var a) {
    return unary_op(a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}
Var exp(Var a) {
    return unary_op(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}
Var log(Var a) {
    return unary_op(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}
Var sqrt(Var a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double x) { return 0.5 / std::sqrt(std::max(x, 1e-300)); });
}
Var abs(Var a) {
    return unary_op(a, [](double x) { return std::abs(x); },
                    [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}
Var sigmoid(Var a) {
    return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](double x) {
                        double s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 - s);
                    });
}
Var leaky_relu(Var a, double slope) {
    return unary_op(a, [slope](double x) { return x > 0 ? x : slope * x; },
                    [slope](double x) { return x > 0 ? 1.0 : slope; });
}
Var clamp(Var a, double lo, double hi) {
    return unary_op(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                    [lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    bool ra = t.requires_grad(a);
    return t.make_node(Tensor::scalar(s), ra, [a](Tape& tp, const Tensor& g) {
        Tensor& gb = tp.grad_buffer(a);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[0];
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const int m = av.rows(), n = av.cols();
    Tensor out({m, 1});
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += av.at(i, j);
        out[i] = s;
    }
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra, [a, m, n](Tape& tp, const Tensor& g) {
        Tensor& gb = tp.grad_buffer(a);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) gb.at(i, j) += g[i];
    });
}

Var row_l2norm(Var a) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const int m = av.rows(), n = av.cols();
    Tensor out({m, 1});
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += av.at(i, j) * av.at(i, j);
        out[i] = std::sqrt(s);
    }
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra, [a, m, n](Tape& tp, const Tensor& g) {
        const Tensor& av = a.value();
        Tensor& gb = tp.grad_buffer(a);
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += av.at(i, j) * av.at(i, j);
            double inv = 1.0 / std::max(std::sqrt(s), 1e-12);
            for (int j = 0; j < n; ++j) gb.at(i, j) += g[i] * av.at(i, j) * inv;
        }
    });
}

Var dot_rows(Var a, Var b) {
    same_tape(a, b, "dot_rows");
    Tape& t = *a.tape;
    const Tensor &av = a.value(), &bv = b.value();
    if (!av.same_shape(bv)) throw std::invalid_argument("dot_rows: shape mismatch");
    const int m = av.rows(), n = av.cols();
    Tensor out({m, 1});
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += av.at(i, j) * bv.at(i, j);
        out[i] = s;
    }
    bool ra = t.requires_grad(a), rb = t.requires_grad(b);
    return t.make_node(std::move(out), ra || rb, [a, b, m, n, ra, rb](Tape& tp, const Tensor& g) {
        const Tensor &av = a.value(), &bv = b.value();
        if (ra) {
            Tensor& ga = tp.grad_buffer(a);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) ga.at(i, j) += g[i] * bv.at(i, j);
        }
        if (rb) {
            Tensor& gb = tp.grad_buffer(b);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gb.at(i, j) += g[i] * av.at(i, j);
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Tape& t = *parts[0].tape;
    const int m = parts[0].value().rows();
    int total = 0;
    bool rg = false;
    for (const Var& p : parts) {
        same_tape(parts[0], p, "concat_cols");
        if (p.value().rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.value().cols();
        rg = rg || t.requires_grad(p);
    }
    Tensor out({m, total});
    int off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        const int n = pv.cols();
        for (int i = 0; i < m; ++i)
            std::memcpy(&out.at(i, off), pv.data() + static_cast<std::size_t>(i) * n, sizeof(double) * n);
        off += n;
    }
    std::vector<Var> held(parts.begin(), parts.end());
    return t.make_node(std::move(out), rg, [held, m, total](Tape& tp, const Tensor& g) {
        int off = 0;
        for (const Var& p : held) {
            const int n = p.value().cols();
            if (tp.requires_grad(p)) {
                Tensor& gb = tp.grad_buffer(p);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) gb.at(i, j) += g.at(i, off + j);
            }
            off += n;
        }
        (void)total;
    });
}

Var slice_cols(Var a, int begin, int len) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const int m = av.rows(), n = av.cols();
    if (begin < 0 || len < 0 || begin + len > n) throw std::out_of_range("slice_cols: range");
    Tensor out({m, len});
    for (int i = 0; i < m; ++i)
        std::memcpy(&out.at(i, 0), av.data() + static_cast<std::size_t>(i) * n + begin, sizeof(double) * len);
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra, [a, begin, len, m](Tape& tp, const Tensor& g) {
        Tensor& gb = tp.grad_buffer(a);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < len; ++j) gb.at(i, begin + j) += g.at(i, j);
    });
}

Var row(Var a, int r) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const int n = av.cols();
    if (r < 0 || r >= av.rows()) throw std::out_of_range("row: index");
    Tensor out({1, n});
    std::memcpy(out.data(), av.data() + static_cast<std::size_t>(r) * n, sizeof(double) * n);
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra, [a, r, n](Tape& tp, const Tensor& g) {
        Tensor& gb = tp.grad_buffer(a);
        for (int j = 0; j < n; ++j) gb.at(r, j) += g[j];
    });
}

Var gather_rows(Var a, std::span<const int> idx) {
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const int n = av.cols(), m = av.rows();
    Tensor out({static_cast<int>(idx.size()), n});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= m) throw std::out_of_range("gather_rows: index");
        std::memcpy(&out.at(static_cast<int>(i), 0), av.data() + static_cast<std::size_t>(idx[i]) * n, sizeof(double) * n);
    }
    std::vector<int> held(idx.begin(), idx.end());
    bool ra = t.requires_grad(a);
    return t.make_node(std::move(out), ra, [a, held, n](Tape& tp, const Tensor& g) {
        Tensor& gb = tp.grad_buffer(a);
        for (std::size_t i = 0; i < held.size(); ++i)
            for (int j = 0; j < n; ++j) gb.at(held[i], j) += g.at(static_cast<int>(i), j);
    });
}

}  // namespace partfield::ad
