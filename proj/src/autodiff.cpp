#include "contnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace contnet {

namespace {

std::size_t arity(OpKind kind)
{
    switch (kind) {
    case OpKind::leaf:
        return 0;
    case OpKind::scale:
    case OpKind::tanh:
    case OpKind::sum:
    case OpKind::select:
    case OpKind::cross_entropy:
        return 1;
    default:
        return 2;
    }
}

Tensor forward_value(OpKind kind, const std::vector<const Tensor*>& in, const OpArgs& args)
{
    switch (kind) {
    case OpKind::matmul:
        return matmul(*in[0], *in[1]);
    case OpKind::add:
        return add(*in[0], *in[1]);
    case OpKind::sub:
        return sub(*in[0], *in[1]);
    case OpKind::scale:
        return scale(*in[0], args.factor);
    case OpKind::tanh:
        return tanh(*in[0]);
    case OpKind::sum:
        return sum(*in[0]);
    case OpKind::mse:
        return mse(*in[0], *in[1]);
    case OpKind::hadamard:
        return hadamard(*in[0], *in[1]);
    case OpKind::add_bias:
        return add_bias(*in[0], *in[1]);
    case OpKind::scale_by:
        return scale_by(*in[0], *in[1]);
    case OpKind::select:
        return select(*in[0], args.index);
    case OpKind::cross_entropy:
        return cross_entropy(*in[0], args.labels);
    case OpKind::leaf:
        break;
    }
    throw std::logic_error("tape: leaf nodes are created with variable() or constant()");
}

void accumulate(std::optional<Tensor>& slot, const Tensor& delta)
{
    if (!slot) {
        slot = delta;
        return;
    }
    auto dst = slot->data();
    auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

void accumulate_scaled(std::optional<Tensor>& slot, const Tensor& delta, double factor)
{
    if (!slot) {
        slot = scale(delta, factor);
        return;
    }
    auto dst = slot->data();
    auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += factor * src[i];
    }
}

// dA of C = A B, for B rank 1 or 2.
Tensor matmul_grad_lhs(const Tensor& g, const Tensor& b)
{
    if (b.rank() == 1) {
        return matmul(g.reshaped({g.size(), 1}), b.reshaped({1, b.size()}));
    }
    return matmul(g, transpose(b));
}

} // namespace

const char* op_name(OpKind kind)
{
    switch (kind) {
    case OpKind::leaf:
        return "leaf";
    case OpKind::matmul:
        return "matmul";
    case OpKind::add:
        return "add";
    case OpKind::sub:
        return "sub";
    case OpKind::scale:
        return "scale";
    case OpKind::tanh:
        return "tanh";
    case OpKind::sum:
        return "sum";
    case OpKind::mse:
        return "mean-squared-error";
    case OpKind::hadamard:
        return "elementwise-multiply";
    case OpKind::add_bias:
        return "add-bias";
    case OpKind::scale_by:
        return "scale-by";
    case OpKind::select:
        return "select";
    case OpKind::cross_entropy:
        return "cross-entropy";
    }
    return "unknown";
}

NodeId Tape::variable(Tensor value)
{
    nodes_.push_back(Node{OpKind::leaf, {}, {}, std::move(value), true});
    return nodes_.size() - 1;
}

NodeId Tape::constant(Tensor value)
{
    nodes_.push_back(Node{OpKind::leaf, {}, {}, std::move(value), false});
    return nodes_.size() - 1;
}

NodeId Tape::apply(OpKind kind, std::span<const NodeId> inputs, OpArgs args)
{
    if (kind == OpKind::leaf || inputs.size() != arity(kind)) {
        throw std::invalid_argument(std::string(op_name(kind)) + ": expected " +
                                    std::to_string(arity(kind)) + " inputs, got " +
                                    std::to_string(inputs.size()));
    }
    std::vector<const Tensor*> in;
    for (NodeId id : inputs) {
        if (id >= nodes_.size()) {
            throw std::out_of_range(std::string(op_name(kind)) + ": unknown node " + std::to_string(id));
        }
        in.push_back(&nodes_[id].value);
    }
    Tensor value = forward_value(kind, in, args);
    if (!value.all_finite()) {
        throw NumericError(std::string(op_name(kind)) + ": non-finite result");
    }
    nodes_.push_back(Node{kind, std::vector<NodeId>(inputs.begin(), inputs.end()), std::move(args),
                          std::move(value), false});
    return nodes_.size() - 1;
}

std::span<const NodeId> Tape::parents(NodeId id) const { return nodes_.at(id).parents; }

std::map<NodeId, Tensor> Tape::backward(NodeId output) const
{
    const Tensor& out = nodes_.at(output).value;
    if (out.size() != 1) {
        throw ShapeError("backward: output node has shape " + shape_string(out.shape()) +
                         ", expected a scalar");
    }
    return backward(output, Tensor::filled(out.shape(), 1.0));
}

std::map<NodeId, Tensor> Tape::backward(NodeId output, const Tensor& seed) const
{
    if (output >= nodes_.size()) {
        throw std::out_of_range("backward: unknown node " + std::to_string(output));
    }
    if (seed.shape() != nodes_[output].value.shape()) {
        throw ShapeError("backward: seed " + shape_string(seed.shape()) + " vs output " +
                         shape_string(nodes_[output].value.shape()));
    }

    std::vector<std::optional<Tensor>> grads(output + 1);
    grads[output] = seed;

    for (NodeId id = output + 1; id-- > 0;) {
        if (!grads[id]) {
            continue;
        }
        const Node& node = nodes_[id];
        const Tensor& g = *grads[id];
        const auto& p = node.parents;
        switch (node.kind) {
        case OpKind::leaf:
            break;
        case OpKind::matmul: {
            const Tensor& a = nodes_[p[0]].value;
            const Tensor& b = nodes_[p[1]].value;
            accumulate(grads[p[0]], matmul_grad_lhs(g, b));
            accumulate(grads[p[1]], matmul(transpose(a), g));
            break;
        }
        case OpKind::add:
            accumulate(grads[p[0]], g);
            accumulate(grads[p[1]], g);
            break;
        case OpKind::sub:
            accumulate(grads[p[0]], g);
            accumulate_scaled(grads[p[1]], g, -1.0);
            break;
        case OpKind::scale:
            accumulate_scaled(grads[p[0]], g, node.args.factor);
            break;
        case OpKind::tanh: {
            Tensor local(node.value.shape());
            for (std::size_t i = 0; i < local.size(); ++i) {
                const double y = node.value[i];
                local[i] = g[i] * (1.0 - y * y);
            }
            accumulate(grads[p[0]], local);
            break;
        }
        case OpKind::sum:
            accumulate(grads[p[0]], Tensor::filled(nodes_[p[0]].value.shape(), g[0]));
            break;
        case OpKind::mse: {
            const Tensor& a = nodes_[p[0]].value;
            const Tensor& b = nodes_[p[1]].value;
            const double factor = 2.0 * g[0] / static_cast<double>(a.size());
            Tensor diff = sub(a, b);
            accumulate_scaled(grads[p[0]], diff, factor);
            accumulate_scaled(grads[p[1]], diff, -factor);
            break;
        }
        case OpKind::hadamard:
            accumulate(grads[p[0]], hadamard(g, nodes_[p[1]].value));
            accumulate(grads[p[1]], hadamard(g, nodes_[p[0]].value));
            break;
        case OpKind::add_bias: {
            accumulate(grads[p[0]], g);
            const std::size_t rows = g.dim(0);
            const std::size_t cols = g.size() / rows;
            Tensor db({rows});
            for (std::size_t i = 0; i < rows; ++i) {
                double total = 0.0;
                for (std::size_t j = 0; j < cols; ++j) {
                    total += g[i * cols + j];
                }
                db[i] = total;
            }
            accumulate(grads[p[1]], db);
            break;
        }
        case OpKind::scale_by: {
            const Tensor& s = nodes_[p[0]].value;
            const Tensor& a = nodes_[p[1]].value;
            double ds = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                ds += g[i] * a[i];
            }
            accumulate(grads[p[0]], Tensor(s.shape(), {ds}));
            accumulate_scaled(grads[p[1]], g, s[0]);
            break;
        }
        case OpKind::select: {
            auto& slot = grads[p[0]];
            if (!slot) {
                slot = Tensor(nodes_[p[0]].value.shape());
            }
            const std::size_t stride = g.size();
            auto dst = slot->data().subspan(node.args.index * stride, stride);
            for (std::size_t i = 0; i < stride; ++i) {
                dst[i] += g[i];
            }
            break;
        }
        case OpKind::cross_entropy: {
            const Tensor& logits = nodes_[p[0]].value;
            const std::size_t classes = logits.dim(0);
            const std::size_t batch = logits.dim(1);
            Tensor dl(logits.shape());
            const double weight = g[0] / static_cast<double>(batch);
            for (std::size_t j = 0; j < batch; ++j) {
                double peak = logits.at(0, j);
                for (std::size_t c = 1; c < classes; ++c) {
                    peak = std::max(peak, logits.at(c, j));
                }
                double norm = 0.0;
                for (std::size_t c = 0; c < classes; ++c) {
                    norm += std::exp(logits.at(c, j) - peak);
                }
                for (std::size_t c = 0; c < classes; ++c) {
                    const double prob = std::exp(logits.at(c, j) - peak) / norm;
                    dl.at(c, j) = weight * (prob - (c == node.args.labels[j] ? 1.0 : 0.0));
                }
            }
            accumulate(grads[p[0]], dl);
            break;
        }
        }
    }

    std::map<NodeId, Tensor> result;
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        if (!nodes_[id].variable) {
            continue;
        }
        if (id < grads.size() && grads[id]) {
            result.emplace(id, *grads[id]);
        } else {
            result.emplace(id, Tensor(nodes_[id].value.shape()));
        }
    }
    return result;
}

Var variable(Tape& tape, Tensor value) { return {tape, tape.variable(std::move(value))}; }

Var constant(Tape& tape, Tensor value) { return {tape, tape.constant(std::move(value))}; }

namespace {

Var record(OpKind kind, std::initializer_list<Var> inputs, OpArgs args = {})
{
    Tape& tape = inputs.begin()->tape();
    std::vector<NodeId> ids;
    for (const Var& v : inputs) {
        if (&v.tape() != &tape) {
            throw std::invalid_argument(std::string(op_name(kind)) + ": operands live on different tapes");
        }
        ids.push_back(v.id());
    }
    return {tape, tape.apply(kind, ids, std::move(args))};
}

} // namespace

Var add(const Var& a, const Var& b) { return record(OpKind::add, {a, b}); }
Var sub(const Var& a, const Var& b) { return record(OpKind::sub, {a, b}); }
Var hadamard(const Var& a, const Var& b) { return record(OpKind::hadamard, {a, b}); }
Var scale(const Var& a, double factor) { return record(OpKind::scale, {a}, OpArgs{.factor = factor}); }
Var tanh(const Var& a) { return record(OpKind::tanh, {a}); }
Var matmul(const Var& a, const Var& b) { return record(OpKind::matmul, {a, b}); }
Var add_bias(const Var& h, const Var& bias) { return record(OpKind::add_bias, {h, bias}); }
Var scale_by(const Var& s, const Var& a) { return record(OpKind::scale_by, {s, a}); }
Var select(const Var& a, std::size_t index) { return record(OpKind::select, {a}, OpArgs{.index = index}); }
Var sum(const Var& a) { return record(OpKind::sum, {a}); }
Var mse(const Var& a, const Var& b) { return record(OpKind::mse, {a, b}); }

Var cross_entropy(const Var& logits, std::span<const std::size_t> labels)
{
    return record(OpKind::cross_entropy, {logits},
                  OpArgs{.labels = std::vector<std::size_t>(labels.begin(), labels.end())});
}

Tensor gradient(const Var& output, const Var& wrt)
{
    auto grads = output.tape().backward(output.id());
    auto it = grads.find(wrt.id());
    if (it == grads.end()) {
        throw std::invalid_argument("gradient: node " + std::to_string(wrt.id()) + " is not a variable leaf");
    }
    return it->second;
}

namespace {

double evaluate(const ScalarFn& fn, const Tensor& point)
{
    Tape tape;
    const double value = fn(tape, constant(tape, point)).value().item();
    if (!std::isfinite(value)) {
        throw NumericError("finite-difference check: non-finite function value");
    }
    return value;
}

double evaluate(const MultiScalarFn& fn, const std::vector<Tensor>& point)
{
    Tape tape;
    std::vector<Var> inputs;
    for (const Tensor& t : point) {
        inputs.push_back(constant(tape, t));
    }
    const double value = fn(tape, inputs).value().item();
    if (!std::isfinite(value)) {
        throw NumericError("finite-difference check: non-finite function value");
    }
    return value;
}

} // namespace

FiniteDiffReport finite_diff_check(const ScalarFn& fn, const Tensor& point, double step)
{
    if (!(step > 0.0)) {
        throw DomainError("finite-difference check: step must be positive");
    }
    FiniteDiffReport report;
    {
        Tape tape;
        Var x = variable(tape, point);
        Var y = fn(tape, x);
        if (!std::isfinite(y.value().item())) {
            throw NumericError("finite-difference check: non-finite function value");
        }
        report.analytic = gradient(y, x);
    }
    report.numeric = Tensor(point.shape());
    for (std::size_t i = 0; i < point.size(); ++i) {
        Tensor plus = point;
        Tensor minus = point;
        plus[i] += step;
        minus[i] -= step;
        report.numeric[i] = (evaluate(fn, plus) - evaluate(fn, minus)) / (2.0 * step);
        const double a = report.analytic[i];
        const double n = report.numeric[i];
        const double denom = std::max({1.0, std::abs(a), std::abs(n)});
        report.max_rel_discrepancy = std::max(report.max_rel_discrepancy, std::abs(a - n) / denom);
    }
    return report;
}

DirectionalReport directional_check(const MultiScalarFn& fn, const std::vector<Tensor>& point,
                                    const std::vector<Tensor>& direction, double step)
{
    if (point.size() != direction.size()) {
        throw ShapeError("directional check: " + std::to_string(point.size()) + " inputs vs " +
                         std::to_string(direction.size()) + " directions");
    }
    DirectionalReport report;
    {
        Tape tape;
        std::vector<Var> inputs;
        for (const Tensor& t : point) {
            inputs.push_back(variable(tape, t));
        }
        Var y = fn(tape, inputs);
        auto grads = tape.backward(y.id());
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const Tensor& g = grads.at(inputs[k].id());
            for (std::size_t i = 0; i < g.size(); ++i) {
                report.analytic += g[i] * direction[k][i];
            }
        }
    }
    std::vector<Tensor> plus = point;
    std::vector<Tensor> minus = point;
    for (std::size_t k = 0; k < point.size(); ++k) {
        plus[k] = add(point[k], scale(direction[k], step));
        minus[k] = sub(point[k], scale(direction[k], step));
    }
    report.numeric = (evaluate(fn, plus) - evaluate(fn, minus)) / (2.0 * step);
    const double denom = std::max({1e-6, std::abs(report.analytic), std::abs(report.numeric)});
    report.rel_discrepancy = std::abs(report.analytic - report.numeric) / denom;
    return report;
}

} // namespace contnet
