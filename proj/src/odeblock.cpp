#include "contnet/odeblock.hpp"

#include <cmath>
#include <stdexcept>

namespace contnet {

std::string_view module_kind_name(ModuleKind kind)
{
    return kind == ModuleKind::tanh_mlp ? "tanh_mlp" : "dense_skip_init";
}

ModuleKind parse_module_kind(std::string_view name)
{
    if (name == "tanh_mlp") {
        return ModuleKind::tanh_mlp;
    }
    if (name == "dense_skip_init") {
        return ModuleKind::dense_skip_init;
    }
    throw std::invalid_argument("unknown residual module kind '" + std::string(name) + "'");
}

ParamGroupSpec ResidualModuleSpec::param_group() const
{
    ParamGroupSpec group{{{"A", {out, hidden}}, {"W", {hidden, in}}, {"b", {hidden}}}};
    if (kind == ModuleKind::dense_skip_init) {
        group.entries.push_back({"s", {1}});
    }
    return group;
}

void ResidualModuleSpec::validate() const
{
    if (in == 0 || hidden == 0 || out == 0) {
        throw ShapeError("residual module: widths must be positive");
    }
}

void OdeBlockSpec::validate() const
{
    module.validate();
    if (module.in != module.out) {
        throw ShapeError("ode block: residual module must preserve width, got " + std::to_string(module.in) +
                         " -> " + std::to_string(module.out));
    }
    if (!(weights.group() == module.param_group())) {
        throw ShapeError("ode block: weight function layout does not match the residual module");
    }
    if (!std::isfinite(epsilon)) {
        throw DomainError("ode block: epsilon must be finite");
    }
}

void Manifestation::validate() const
{
    if (nt < 1) {
        throw DomainError("manifestation: need at least one time step");
    }
}

Tensor odeblock_forward(const OdeBlockSpec& block, const Manifestation& mani, const Tensor& x_in)
{
    return odeblock_forward<Tensor>(block, mani, x_in, block.weights.coefficients());
}

void Linear::validate() const
{
    if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        throw ShapeError("linear: weight " + shape_string(weight.shape()) + " and bias " +
                         shape_string(bias.shape()) + " do not conform");
    }
}

void StitchSpec::validate() const
{
    module.validate();
    if (downsample.rank() != 2 || downsample.dim(0) != module.out || downsample.dim(1) != module.in) {
        throw ShapeError("stitch: downsample shape " + shape_string(downsample.shape()) + " does not map width " +
                         std::to_string(module.in) + " to " + std::to_string(module.out));
    }
    const ParamGroupSpec group = module.param_group();
    for (const auto& e : group.entries) {
        auto it = theta.find(e.name);
        if (it == theta.end() || it->second.shape() != e.shape) {
            throw ShapeError("stitch: weight entry '" + e.name + "' missing or not of shape " + shape_string(e.shape));
        }
    }
    if (theta.size() != group.entries.size()) {
        throw ShapeError("stitch: unexpected weight entries");
    }
}

double stitch_epsilon(double epsilon_ode, double horizon, double dt) { return epsilon_ode * horizon / dt; }

Tensor stitch_forward(const StitchSpec& stitch, const Tensor& x_in)
{
    return stitch_forward<Tensor>(stitch, x_in, stitch.downsample, stitch.theta);
}

void ClassifierModel::validate() const
{
    if (blocks.empty()) {
        throw std::invalid_argument("classifier: need at least one block");
    }
    if (stitches.size() + 1 != blocks.size() && stitches.size() != 0) {
        throw std::invalid_argument("classifier: " + std::to_string(stitches.size()) + " stitches for " +
                                    std::to_string(blocks.size()) + " blocks");
    }
    if (stitches.empty() && blocks.size() > 1) {
        throw std::invalid_argument("classifier: consecutive blocks must be joined by stitches");
    }
    std::size_t width = blocks.front().module.in;
    if (lift) {
        lift->validate();
        if (lift->out() != width) {
            throw ShapeError("classifier: lift produces width " + std::to_string(lift->out()) + ", block 0 expects " +
                             std::to_string(width));
        }
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].validate();
        if (blocks[i].module.in != width) {
            throw ShapeError("classifier: block " + std::to_string(i) + " expects width " +
                             std::to_string(blocks[i].module.in) + ", receives " + std::to_string(width));
        }
        if (i < stitches.size()) {
            stitches[i].validate();
            if (stitches[i].module.in != width) {
                throw ShapeError("classifier: stitch " + std::to_string(i) + " expects width " +
                                 std::to_string(stitches[i].module.in) + ", receives " + std::to_string(width));
            }
            width = stitches[i].module.out;
        }
    }
    if (head) {
        head->validate();
        if (head->in() != width) {
            throw ShapeError("classifier: head expects width " + std::to_string(head->in()) + ", receives " +
                             std::to_string(width));
        }
    }
}

std::size_t ClassifierModel::input_width() const { return lift ? lift->in() : blocks.front().module.in; }

std::size_t ClassifierModel::output_width() const
{
    if (head) {
        return head->out();
    }
    return stitches.empty() ? blocks.back().module.out : stitches.back().module.out;
}

NamedTensors ClassifierModel::parameters() const
{
    NamedTensors params;
    if (lift) {
        params.emplace("lift.W", lift->weight);
        params.emplace("lift.b", lift->bias);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        for (const auto& [name, block] : blocks[i].weights.coefficients()) {
            params.emplace("block" + std::to_string(i) + "." + name, block);
        }
    }
    for (std::size_t i = 0; i < stitches.size(); ++i) {
        const std::string prefix = "stitch" + std::to_string(i) + ".";
        params.emplace(prefix + "P", stitches[i].downsample);
        for (const auto& [name, t] : stitches[i].theta) {
            params.emplace(prefix + name, t);
        }
    }
    if (head) {
        params.emplace("head.W", head->weight);
        params.emplace("head.b", head->bias);
    }
    return params;
}

void ClassifierModel::set_parameters(const NamedTensors& params)
{
    auto take = [&](const std::string& name, Tensor& dst) {
        const Tensor& src = params.at(name);
        if (src.shape() != dst.shape()) {
            throw ShapeError("classifier: parameter '" + name + "' has shape " + shape_string(src.shape()) +
                             ", expected " + shape_string(dst.shape()));
        }
        dst = src;
    };
    if (lift) {
        take("lift.W", lift->weight);
        take("lift.b", lift->bias);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        NamedTensors coefficients = detail::with_prefix(params, "block" + std::to_string(i) + ".");
        blocks[i].weights.set_coefficients(std::move(coefficients));
    }
    for (std::size_t i = 0; i < stitches.size(); ++i) {
        const std::string prefix = "stitch" + std::to_string(i) + ".";
        take(prefix + "P", stitches[i].downsample);
        for (auto& [name, t] : stitches[i].theta) {
            take(prefix + name, t);
        }
    }
    if (head) {
        take("head.W", head->weight);
        take("head.b", head->bias);
    }
}

std::vector<std::string> ClassifierModel::basis_parameter_names() const
{
    std::vector<std::string> names;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        for (const auto& [name, block] : blocks[i].weights.coefficients()) {
            names.push_back("block" + std::to_string(i) + "." + name);
        }
    }
    return names;
}

std::size_t ClassifierModel::param_count() const
{
    std::size_t total = 0;
    for (const auto& [name, t] : parameters()) {
        total += t.size();
    }
    return total;
}

ClassifierModel build_classifier(std::optional<Linear> lift, std::vector<OdeBlockSpec> blocks,
                                 std::vector<StitchSpec> stitches, std::optional<Linear> head)
{
    ClassifierModel model{std::move(lift), std::move(blocks), std::move(stitches), std::move(head)};
    model.validate();
    return model;
}

Tensor classifier_forward(const ClassifierModel& model, const Manifestation& mani, const Tensor& x_in)
{
    return classifier_forward<Tensor>(model, mani, x_in, model.parameters());
}

GraphDescription manifest(const OdeBlockSpec& block, const Manifestation& mani)
{
    mani.validate();
    GraphDescription graph;
    graph.manifestation = mani;
    graph.tab = tableau(mani.scheme);
    graph.horizon = block.horizon();
    const TimeGrid grid{graph.horizon, mani.nt};
    graph.dt = grid.dt();
    graph.epsilon = block.epsilon;
    graph.basis_count = block.weights.basis_count();
    for (std::size_t k = 0; k < mani.nt; ++k) {
        for (std::size_t i = 0; i < graph.tab.stages; ++i) {
            const double t = grid.node(k) + graph.tab.c[i] * graph.dt;
            graph.ops.push_back({k, i, t, active_interval(graph.basis_count, graph.horizon, t) + 1});
        }
    }
    return graph;
}

Tensor execute_graph(const GraphDescription& graph, const ResidualModuleSpec& module, const WeightFunction& weights,
                     const Tensor& x_in)
{
    if (weights.basis_count() != graph.basis_count) {
        throw ShapeError("graph: manifested for M = " + std::to_string(graph.basis_count) + ", weights have M = " +
                         std::to_string(weights.basis_count()));
    }
    const std::size_t stages = graph.tab.stages;
    if (graph.ops.size() != stages * graph.manifestation.nt) {
        throw std::invalid_argument("graph: expected " + std::to_string(stages * graph.manifestation.nt) +
                                    " stage operations, found " + std::to_string(graph.ops.size()));
    }
    Tensor x = x_in;
    std::vector<Tensor> ys;
    for (std::size_t k = 0; k < graph.manifestation.nt; ++k) {
        ys.clear();
        for (std::size_t i = 0; i < stages; ++i) {
            const StageOp& op = graph.ops[k * stages + i];
            if (op.step != k || op.stage != i || op.basis_index < 1 || op.basis_index > graph.basis_count) {
                throw std::invalid_argument("graph: malformed stage operation at step " + std::to_string(k) +
                                            ", stage " + std::to_string(i));
            }
            Tensor input = stage_input<Tensor>(x, graph.dt, graph.tab.a[i], ys);
            NamedTensors theta = theta_select(weights.coefficients(), op.basis_index - 1);
            ys.push_back(scale(residual_eval(module, input, theta), graph.epsilon));
        }
        x = combine_stages<Tensor>(x, graph.dt, graph.tab.b, ys);
    }
    return x;
}

std::vector<GraphDescription> manifest_classifier(const ClassifierModel& model, const Manifestation& mani)
{
    std::vector<GraphDescription> graphs;
    for (const auto& block : model.blocks) {
        graphs.push_back(manifest(block, mani));
    }
    return graphs;
}

Tensor replay_classifier(const ClassifierModel& model, const std::vector<GraphDescription>& graphs, const Tensor& x_in)
{
    if (graphs.size() != model.blocks.size()) {
        throw std::invalid_argument("replay: " + std::to_string(graphs.size()) + " graphs for " +
                                    std::to_string(model.blocks.size()) + " blocks");
    }
    Tensor x = x_in;
    if (model.lift) {
        x = linear_forward(model.lift->weight, model.lift->bias, x);
    }
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        x = execute_graph(graphs[i], model.blocks[i].module, model.blocks[i].weights, x);
        if (i < model.stitches.size()) {
            x = stitch_forward(model.stitches[i], x);
        }
    }
    if (model.head) {
        x = linear_forward(model.head->weight, model.head->bias, x);
    }
    return x;
}

} // namespace contnet
