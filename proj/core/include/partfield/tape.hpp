#pragma once

#include <functional>
#include <span>
#include <vector>

#include "partfield/tensor.hpp"

namespace partfield::ad {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
};

/// Define-by-run reverse-mode tape. Values are computed eagerly as the
/// graph is built; backward() replays recorded ops in reverse creation
/// order, which is a valid topological order by construction.
///
/// A Tape is single-threaded and intended to live for one forward/backward
/// pass (rebuild per mini-batch). Leaves hold copies of the caller's
/// tensors; after backward() the caller reads grad() and applies updates
/// to its own master parameters.
class Tape {
public:
    /// check_finite=true scans every op output and throws on NaN/Inf.
    /// The loss fed to backward() is always checked.
    explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var constant(double v) { return leaf(Tensor::scalar(v), false); }

    /// Runs reverse accumulation from a scalar loss. Gradients of all
    /// requires_grad-reachable nodes are populated; leaves keep theirs
    /// until clear(). Throws on non-scalar or non-finite loss, and on
    /// non-finite gradients reaching any requires_grad leaf.
    void backward(Var loss);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    std::size_t size() const { return nodes_.size(); }
    void clear();

    // Low-level node construction; used by the op library and by modules
    // that add custom differentiable ops (e.g. grid sampling).
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;
    Var make_node(Tensor value, bool requires_grad, BackwardFn back);
    void accumulate_grad(Var v, const Tensor& contribution);
    /// Adds s * contribution into v's grad buffer without allocating.
    void accumulate_grad_scaled(Var v, double s, const Tensor& contribution);
    Tensor& grad_buffer(Var v);
    bool check_finite() const { return check_finite_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched by backward
        bool requires_grad = false;
        bool leaf = false;
        BackwardFn back;
    };

    std::vector<Node> nodes_;
    bool check_finite_ = false;
    static const Tensor empty_;
};

// ---- op library ------------------------------------------------------
// Binary elementwise ops broadcast the second operand when it is a
// (1,n) row vector against (m,n), or a (1,1) scalar.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);

Var scale(Var a, double s);
Var offset(Var a, double c);
Var neg(Var a);

Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var log(Var a);          // caller is responsible for positive input
Var sqrt(Var a);
Var abs(Var a);
Var sigmoid(Var a);
Var leaky_relu(Var a, double slope);
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);                   // (m,n) -> (m,1)
Var row_l2norm(Var a);                // (m,n) -> (m,1), safe gradient at 0
Var dot_rows(Var a, Var b);           // (m,n),(m,n) -> (m,1)

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, int begin, int len);
Var row(Var a, int r);                         // (m,n) -> (1,n)
Var gather_rows(Var a, std::span<const int> idx);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double c) { return offset(a, c); }
inline Var operator-(Var a, double c) { return offset(a, -c); }

}  // namespace partfield::ad
