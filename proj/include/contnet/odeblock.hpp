#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contnet/autodiff.hpp"
#include "contnet/integrators.hpp"
#include "contnet/weight_basis.hpp"

namespace contnet {

enum class ModuleKind { tanh_mlp, dense_skip_init };

std::string_view module_kind_name(ModuleKind kind);
ModuleKind parse_module_kind(std::string_view name);

/// R(x, theta) = A tanh(W x + b), optionally scaled by a learned scalar s.
struct ResidualModuleSpec {
    ModuleKind kind = ModuleKind::tanh_mlp;
    std::size_t in = 1;
    std::size_t hidden = 1;
    std::size_t out = 1;

    /// {A: out x hidden, W: hidden x in, b: hidden} plus {s: 1} for dense_skip_init.
    ParamGroupSpec param_group() const;
    void validate() const;

    friend bool operator==(const ResidualModuleSpec&, const ResidualModuleSpec&) = default;
};

inline const Tensor& value_of(const Tensor& t) { return t; }
inline const Tensor& value_of(const Var& v) { return v.value(); }

namespace detail {

template <class V>
const V& theta_entry(const Named<V>& theta, const ResidualModuleSpec& module, const std::string& name)
{
    auto it = theta.find(name);
    if (it == theta.end()) {
        throw ShapeError("residual module: missing weight entry '" + name + "'");
    }
    const ParamGroupSpec group = module.param_group();
    const Shape& expected = group.entry(name).shape;
    if (value_of(it->second).shape() != expected) {
        throw ShapeError("residual module: entry '" + name + "' has shape " +
                         shape_string(value_of(it->second).shape()) + ", expected " + shape_string(expected));
    }
    return it->second;
}

} // namespace detail

/// Evaluates the residual module on a [in] or [in, B] state.
template <class V>
V residual_eval(const ResidualModuleSpec& module, const V& x, const Named<V>& theta)
{
    const Tensor& xv = value_of(x);
    if (xv.rank() < 1 || xv.rank() > 2 || xv.dim(0) != module.in) {
        throw ShapeError("residual module: state shape " + shape_string(xv.shape()) + " does not match input width " +
                         std::to_string(module.in));
    }
    const V& A = detail::theta_entry(theta, module, "A");
    const V& W = detail::theta_entry(theta, module, "W");
    const V& b = detail::theta_entry(theta, module, "b");
    V y = matmul(A, tanh(add_bias(matmul(W, x), b)));
    if (module.kind == ModuleKind::dense_skip_init) {
        return scale_by(detail::theta_entry(theta, module, "s"), y);
    }
    return y;
}

/// Continuous-in-depth block x' = epsilon R(x, theta(t)), t in [0, T].
struct OdeBlockSpec {
    ResidualModuleSpec module;
    WeightFunction weights;
    double epsilon = 1.0;

    double horizon() const { return weights.horizon(); }
    void validate() const;
};

/// The (scheme, Nt) pair that turns a block into a concrete discrete graph.
struct Manifestation {
    Scheme scheme = Scheme::euler;
    std::size_t nt = 1;

    void validate() const;
    friend bool operator==(const Manifestation&, const Manifestation&) = default;
};

/// Integrates the block from x_in over [0, T] with the manifested scheme.
/// `coefficients` are the weight-function blocks (Tensors, or Vars on a
/// tape for training); the basis interval is resolved at every stage time.
template <class V>
V odeblock_forward(const OdeBlockSpec& block, const Manifestation& mani, const V& x_in,
                   const Named<V>& coefficients)
{
    mani.validate();
    const ButcherTableau tab = tableau(mani.scheme);
    const TimeGrid grid{block.horizon(), mani.nt};
    const std::size_t basis = block.weights.basis_count();
    std::map<std::size_t, Named<V>> theta_cache;
    auto rhs = [&](const V& x, double t) {
        const std::size_t interval = active_interval(basis, grid.T, t);
        auto it = theta_cache.find(interval);
        if (it == theta_cache.end()) {
            it = theta_cache.emplace(interval, theta_select(coefficients, interval)).first;
        }
        return scale(residual_eval(block.module, x, it->second), block.epsilon);
    };
    V x = x_in;
    for (std::size_t k = 0; k < grid.nt; ++k) {
        x = step<V>(tab, rhs, x, grid.node(k), grid.dt());
    }
    return x;
}

Tensor odeblock_forward(const OdeBlockSpec& block, const Manifestation& mani, const Tensor& x_in);

/// Dense affine map y = W x + b.
struct Linear {
    Tensor weight;
    Tensor bias;

    std::size_t in() const { return weight.dim(1); }
    std::size_t out() const { return weight.dim(0); }
    void validate() const;
};

template <class V>
V linear_forward(const V& weight, const V& bias, const V& x)
{
    return add_bias(matmul(weight, x), bias);
}

/// Discrete width-changing residual unit between two blocks:
///   x_out = P x_in + epsilon R(x_in, theta).
struct StitchSpec {
    ResidualModuleSpec module;
    Tensor downsample;
    NamedTensors theta;
    double epsilon = 1.0;

    void validate() const;
};

/// epsilon_ode T / dt: puts the stitch residual on the scale of one block step.
double stitch_epsilon(double epsilon_ode, double horizon, double dt);

template <class V>
V stitch_forward(const StitchSpec& stitch, const V& x_in, const V& downsample, const Named<V>& theta)
{
    const Tensor& p = value_of(downsample);
    if (p.rank() != 2 || p.dim(0) != stitch.module.out || p.dim(1) != stitch.module.in) {
        throw ShapeError("stitch: downsample shape " + shape_string(p.shape()) + " does not map width " +
                         std::to_string(stitch.module.in) + " to " + std::to_string(stitch.module.out));
    }
    return matmul(downsample, x_in) + scale(residual_eval(stitch.module, x_in, theta), stitch.epsilon);
}

Tensor stitch_forward(const StitchSpec& stitch, const Tensor& x_in);

/// lift -> block -> stitch -> block -> ... -> block -> head. A missing lift
/// or head acts as the identity.
struct ClassifierModel {
    std::optional<Linear> lift;
    std::vector<OdeBlockSpec> blocks;
    std::vector<StitchSpec> stitches;
    std::optional<Linear> head;

    void validate() const;
    std::size_t input_width() const;
    std::size_t output_width() const;

    /// Every trainable tensor under a stable dotted name ("lift.W",
    /// "block0.A", "stitch1.P", "head.b", ...).
    NamedTensors parameters() const;
    void set_parameters(const NamedTensors& params);
    /// Names of the weight-function coefficient blocks (leading axis = M).
    std::vector<std::string> basis_parameter_names() const;
    std::size_t param_count() const;
};

ClassifierModel build_classifier(std::optional<Linear> lift, std::vector<OdeBlockSpec> blocks,
                                 std::vector<StitchSpec> stitches, std::optional<Linear> head);

namespace detail {

template <class V>
Named<V> with_prefix(const Named<V>& params, const std::string& prefix)
{
    Named<V> out;
    for (auto it = params.lower_bound(prefix); it != params.end() && it->first.starts_with(prefix); ++it) {
        out.emplace(it->first.substr(prefix.size()), it->second);
    }
    return out;
}

} // namespace detail

/// Logits for a batch of inputs [in, B] under one manifestation shared by all
/// blocks; `params` as named by ClassifierModel::parameters().
template <class V>
V classifier_forward(const ClassifierModel& model, const Manifestation& mani, const V& x_in, const Named<V>& params)
{
    V x = x_in;
    if (model.lift) {
        x = linear_forward(params.at("lift.W"), params.at("lift.b"), x);
    }
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const std::string prefix = "block" + std::to_string(i) + ".";
        x = odeblock_forward(model.blocks[i], mani, x, detail::with_prefix(params, prefix));
        if (i < model.stitches.size()) {
            const std::string sp = "stitch" + std::to_string(i) + ".";
            Named<V> theta = detail::with_prefix(params, sp);
            V downsample = theta.at("P");
            theta.erase("P");
            x = stitch_forward(model.stitches[i], x, downsample, theta);
        }
    }
    if (model.head) {
        x = linear_forward(params.at("head.W"), params.at("head.b"), x);
    }
    return x;
}

Tensor classifier_forward(const ClassifierModel& model, const Manifestation& mani, const Tensor& x_in);

/// One residual-module invocation in a manifested graph.
struct StageOp {
    std::size_t step = 0;
    std::size_t stage = 0;
    double time = 0.0;
    /// 1-based basis interval whose coefficients feed this invocation.
    std::size_t basis_index = 1;
};

/// Static description of the discrete network a block manifests to: every
/// residual invocation with its stage time, resolved weight interval and
/// the tableau constants combining them.
struct GraphDescription {
    Manifestation manifestation;
    ButcherTableau tab;
    double horizon = 1.0;
    double dt = 1.0;
    double epsilon = 1.0;
    std::size_t basis_count = 1;
    std::vector<StageOp> ops;

    std::size_t invocations() const { return ops.size(); }
};

GraphDescription manifest(const OdeBlockSpec& block, const Manifestation& mani);

/// Runs a manifested graph with the block's module and weights, reading the
/// weight interval of every invocation from the description.
Tensor execute_graph(const GraphDescription& graph, const ResidualModuleSpec& module, const WeightFunction& weights,
                     const Tensor& x_in);

/// Manifests every block of a classifier under one (scheme, Nt).
std::vector<GraphDescription> manifest_classifier(const ClassifierModel& model, const Manifestation& mani);

/// Classifier evaluation in which every block runs its pre-manifested graph.
Tensor replay_classifier(const ClassifierModel& model, const std::vector<GraphDescription>& graphs, const Tensor& x_in);

} // namespace contnet
