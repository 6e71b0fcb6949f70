#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "contnet/tensor.hpp"

namespace contnet {

enum class OpKind {
    leaf,
    matmul,
    add,
    sub,
    scale,
    tanh,
    sum,
    mse,
    hadamard,
    add_bias,
    scale_by,
    select,
    cross_entropy,
};

const char* op_name(OpKind kind);

using NodeId = std::size_t;

/// Extra, non-differentiable operands of an operation.
struct OpArgs {
    double factor = 0.0;              // scale
    std::size_t index = 0;            // select
    std::vector<std::size_t> labels{};// cross_entropy
};

/// Reverse-mode differentiation tape.
///
/// Nodes are appended in construction order, so every node's parents precede
/// it and a single reverse sweep is a valid topological traversal. A tape is
/// built fresh for every forward pass.
class Tape {
public:
    /// Leaf that receives a gradient from backward().
    NodeId variable(Tensor value);
    /// Leaf that does not.
    NodeId constant(Tensor value);

    /// Appends `kind` applied to `inputs`. Throws ShapeError when the operand
    /// shapes do not conform and NumericError when the result is not finite.
    NodeId apply(OpKind kind, std::span<const NodeId> inputs, OpArgs args = {});

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
    std::span<const NodeId> parents(NodeId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradients of the scalar node `output` with respect to every variable
    /// leaf. Leaves that `output` does not depend on get a zero tensor.
    std::map<NodeId, Tensor> backward(NodeId output) const;
    /// Same, with an explicit cotangent for `output` (must match its shape).
    std::map<NodeId, Tensor> backward(NodeId output, const Tensor& seed) const;

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        std::vector<NodeId> parents;
        OpArgs args;
        Tensor value;
        bool variable = false;
    };

    std::vector<Node> nodes_;
};

/// Handle to a tape node; arithmetic on Vars records onto the tape.
class Var {
public:
    Var(Tape& tape, NodeId id) : tape_(&tape), id_(id) {}

    Tape& tape() const noexcept { return *tape_; }
    NodeId id() const noexcept { return id_; }
    const Tensor& value() const { return tape_->value(id_); }

private:
    Tape* tape_;
    NodeId id_;
};

Var variable(Tape& tape, Tensor value);
Var constant(Tape& tape, Tensor value);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var tanh(const Var& a);
Var matmul(const Var& a, const Var& b);
Var add_bias(const Var& h, const Var& bias);
Var scale_by(const Var& s, const Var& a);
Var select(const Var& a, std::size_t index);
Var sum(const Var& a);
Var mse(const Var& a, const Var& b);
Var cross_entropy(const Var& logits, std::span<const std::size_t> labels);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double factor, const Var& a) { return scale(a, factor); }

inline bool all_finite(const Var& v) { return v.value().all_finite(); }

/// Gradient of `output` with respect to `wrt`.
Tensor gradient(const Var& output, const Var& wrt);

using ScalarFn = std::function<Var(Tape&, const Var&)>;
using MultiScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct FiniteDiffReport {
    Tensor analytic;
    Tensor numeric;
    /// max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|)
    double max_rel_discrepancy = 0.0;
};

/// Compares backward() against central differences at `point`.
FiniteDiffReport finite_diff_check(const ScalarFn& fn, const Tensor& point, double step = 1e-6);

struct DirectionalReport {
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_discrepancy = 0.0;
};

/// Directional derivative of fn along `direction` (one tensor per input),
/// analytic via backward() versus a central difference of size `step`.
DirectionalReport directional_check(const MultiScalarFn& fn, const std::vector<Tensor>& point,
                                    const std::vector<Tensor>& direction, double step = 1e-6);

} // namespace contnet
