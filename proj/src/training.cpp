#include "contnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace contnet {

double LrSchedule::multiplier(std::size_t epoch) const
{
    double m = 1.0;
    for (const auto& [at, factor] : steps) {
        if (epoch >= at) {
            m *= factor;
        }
    }
    if (cosine_epochs > 0) {
        const double progress = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cosine_epochs));
        m *= cosine_floor + (1.0 - cosine_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    return m;
}

namespace {

Tensor& moment_for(NamedTensors& moments, const std::string& name, const Tensor& param)
{
    auto it = moments.find(name);
    if (it == moments.end()) {
        it = moments.emplace(name, Tensor(param.shape())).first;
    }
    if (it->second.shape() != param.shape()) {
        throw ShapeError("optimizer: state for '" + name + "' has shape " + shape_string(it->second.shape()) +
                         ", parameter has " + shape_string(param.shape()));
    }
    return it->second;
}

const Tensor& grad_for(const NamedTensors& grads, const std::string& name, const Tensor& param)
{
    auto it = grads.find(name);
    if (it == grads.end()) {
        throw ShapeError("optimizer: no gradient for '" + name + "'");
    }
    if (it->second.shape() != param.shape()) {
        throw ShapeError("optimizer: gradient for '" + name + "' has shape " + shape_string(it->second.shape()) +
                         ", parameter has " + shape_string(param.shape()));
    }
    return it->second;
}

} // namespace

void adam_step(AdamState& state, NamedTensors& params, const NamedTensors& grads, double lr_multiplier)
{
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double lr = state.lr * lr_multiplier;
    for (auto& [name, p] : params) {
        const Tensor& g = grad_for(grads, name, p);
        Tensor& m = moment_for(state.m, name, p);
        Tensor& v = moment_for(state.v, name, p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

void sgd_momentum_step(SgdMomentumState& state, NamedTensors& params, const NamedTensors& grads,
                       double lr_multiplier)
{
    const double lr = state.lr * lr_multiplier;
    for (auto& [name, p] : params) {
        const Tensor& g = grad_for(grads, name, p);
        Tensor& vel = moment_for(state.velocity, name, p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            vel[i] = state.momentum * vel[i] + g[i];
            p[i] -= lr * vel[i];
        }
    }
}

void optimizer_step(Optimizer& opt, NamedTensors& params, const NamedTensors& grads, double lr_multiplier)
{
    std::visit(
        [&](auto& state) {
            if constexpr (std::is_same_v<std::decay_t<decltype(state)>, AdamState>) {
                adam_step(state, params, grads, lr_multiplier);
            } else {
                sgd_momentum_step(state, params, grads, lr_multiplier);
            }
        },
        opt);
}

void split_optimizer_state(Optimizer& opt, std::span<const std::string> names)
{
    auto split = [&](NamedTensors& moments) {
        for (const auto& name : names) {
            auto it = moments.find(name);
            if (it != moments.end()) {
                it->second = repeat_leading(it->second, 2);
            }
        }
    };
    std::visit(
        [&](auto& state) {
            if constexpr (std::is_same_v<std::decay_t<decltype(state)>, AdamState>) {
                split(state.m);
                split(state.v);
            } else {
                split(state.velocity);
            }
        },
        opt);
}

void LabeledData::validate() const
{
    if (inputs.rank() != 2) {
        throw ShapeError("labeled data: inputs must be [d, n], got " + shape_string(inputs.shape()));
    }
    if (inputs.dim(1) != labels.size()) {
        throw ShapeError("labeled data: " + std::to_string(inputs.dim(1)) + " columns but " +
                         std::to_string(labels.size()) + " labels");
    }
}

Tensor gather_columns(const Tensor& data, std::span<const std::size_t> idx)
{
    if (data.rank() != 2) {
        throw ShapeError("gather_columns: expected [d, n], got " + shape_string(data.shape()));
    }
    if (idx.empty()) {
        throw ShapeError("gather_columns: empty index list");
    }
    const std::size_t d = data.dim(0);
    const std::size_t n = data.dim(1);
    Tensor out({d, idx.size()});
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] >= n) {
            throw ShapeError("gather_columns: column " + std::to_string(idx[j]) + " out of range " +
                             std::to_string(n));
        }
        for (std::size_t r = 0; r < d; ++r) {
            out.at(r, j) = data.at(r, idx[j]);
        }
    }
    return out;
}

LabeledData gather(const LabeledData& data, std::span<const std::size_t> idx)
{
    LabeledData out{gather_columns(data.inputs, idx), {}};
    out.labels.reserve(idx.size());
    for (std::size_t i : idx) {
        out.labels.push_back(data.labels.at(i));
    }
    return out;
}

std::size_t param_count(const NamedTensors& params)
{
    std::size_t total = 0;
    for (const auto& [name, t] : params) {
        total += t.size();
    }
    return total;
}

TrainResult train(NamedTensors params, std::size_t n_samples, const BatchLoss& loss, Optimizer& opt,
                  const TrainOptions& options, const AccuracyFn& accuracy, const EpochHook& hook)
{
    if (n_samples == 0) {
        throw std::invalid_argument("train: empty dataset");
    }
    const std::size_t batch = options.batch_size == 0 ? n_samples : std::min(options.batch_size, n_samples);
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(n_samples);
    TrainResult result;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        if (hook) {
            hook(epoch, params, opt);
        }
        const auto start = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (batch < n_samples) {
            std::shuffle(order.begin(), order.end(), rng);
        }
        const double lr_mult = options.schedule.multiplier(epoch);
        double weighted = 0.0;
        for (std::size_t lo = 0; lo < n_samples; lo += batch) {
            const std::size_t hi = std::min(lo + batch, n_samples);
            std::span<const std::size_t> idx(order.data() + lo, hi - lo);
            NamedTensors grads;
            double value = 0.0;
            try {
                Tape tape;
                Named<Var> vars;
                for (const auto& [name, t] : params) {
                    vars.emplace(name, variable(tape, t));
                }
                const Var l = loss(tape, vars, idx);
                value = l.value().item();
                if (!std::isfinite(value)) {
                    throw NumericError("loss is " + std::to_string(value));
                }
                auto g = tape.backward(l.id());
                for (const auto& [name, v] : vars) {
                    grads.emplace(name, std::move(g.at(v.id())));
                }
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            optimizer_step(opt, params, grads, lr_mult);
            weighted += value * static_cast<double>(hi - lo);
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.loss = weighted / static_cast<double>(n_samples);
        m.accuracy = accuracy ? accuracy(params) : std::numeric_limits<double>::quiet_NaN();
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        m.param_count = param_count(params);
        result.metrics.push_back(m);
    }
    result.params = std::move(params);
    return result;
}

void RefinementSchedule::validate() const
{
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        if (epochs[i] >= total_epochs) {
            throw std::invalid_argument("refinement schedule: epoch " + std::to_string(epochs[i]) +
                                        " is not below total " + std::to_string(total_epochs));
        }
        if (i > 0 && epochs[i] <= epochs[i - 1]) {
            throw std::invalid_argument("refinement schedule: epochs must be strictly increasing");
        }
    }
}

double classifier_loss(const ClassifierModel& model, const Manifestation& mani, const LabeledData& data)
{
    return cross_entropy(classifier_forward(model, mani, data.inputs), data.labels).item();
}

double classifier_accuracy(const ClassifierModel& model, const Manifestation& mani, const LabeledData& data)
{
    const Tensor logits = classifier_forward(model, mani, data.inputs);
    const std::size_t classes = logits.dim(0);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < data.size(); ++j) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (logits.at(c, j) > logits.at(best, j)) {
                best = c;
            }
        }
        correct += best == data.labels[j] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

std::size_t block_param_count(const ClassifierModel& model)
{
    std::size_t total = 0;
    for (const auto& b : model.blocks) {
        total += contnet::param_count(b.weights);
    }
    return total;
}

TrainResult classifier_loop(ClassifierModel& model, Manifestation& mani, const LabeledData& data, Optimizer& opt,
                            const std::vector<std::size_t>& refine_at, const TrainOptions& options,
                            const LabeledData* held)
{
    data.validate();
    model.validate();
    std::vector<RefinementEvent> events;
    std::vector<std::size_t> nt_at;

    BatchLoss loss = [&](Tape& tape, const Named<Var>& vars, std::span<const std::size_t> idx) {
        const LabeledData b = gather(data, idx);
        const Var x = constant(tape, b.inputs);
        return cross_entropy_loss(classifier_forward(model, mani, x, vars), std::span<const std::size_t>(b.labels));
    };
    AccuracyFn accuracy = [&](const NamedTensors& params) {
        model.set_parameters(params);
        return classifier_accuracy(model, mani, data);
    };
    EpochHook hook = [&](std::size_t epoch, NamedTensors& params, Optimizer& state) {
        if (std::find(refine_at.begin(), refine_at.end(), epoch) != refine_at.end()) {
            model.set_parameters(params);
            RefinementEvent ev;
            ev.epoch = epoch;
            ev.nt_before = mani.nt;
            ev.params_before = block_param_count(model);
            ev.loss_before = classifier_loss(model, mani, *held);
            for (auto& b : model.blocks) {
                b.weights = refine_split(b.weights);
            }
            ev.loss_split = classifier_loss(model, mani, *held);
            mani.nt *= 2;
            ev.nt_after = mani.nt;
            ev.params_after = block_param_count(model);
            ev.loss_after = classifier_loss(model, mani, *held);
            const auto names = model.basis_parameter_names();
            split_optimizer_state(state, names);
            params = model.parameters();
            events.push_back(ev);
        }
        nt_at.push_back(mani.nt);
    };

    TrainResult result = train(model.parameters(), data.size(), loss, opt, options, accuracy, hook);
    model.set_parameters(result.params);
    for (std::size_t i = 0; i < result.metrics.size(); ++i) {
        result.metrics[i].nt = nt_at[i];
    }
    result.events = std::move(events);
    return result;
}

} // namespace

TrainResult train_classifier(ClassifierModel& model, const Manifestation& mani, const LabeledData& data,
                             Optimizer& opt, const TrainOptions& options)
{
    Manifestation fixed = mani;
    return classifier_loop(model, fixed, data, opt, {}, options, nullptr);
}

TrainResult refinement_train(ClassifierModel& model, Manifestation& mani, const LabeledData& data, Optimizer& opt,
                             const RefinementSchedule& schedule, const TrainOptions& options,
                             const LabeledData& held)
{
    schedule.validate();
    held.validate();
    if (mani.nt != 1) {
        throw std::invalid_argument("refinement_train: blocks must start at Nt = 1, got " + std::to_string(mani.nt));
    }
    for (const auto& b : model.blocks) {
        if (b.weights.basis_count() != 1) {
            throw std::invalid_argument("refinement_train: blocks must start at M = 1, got " +
                                        std::to_string(b.weights.basis_count()));
        }
    }
    TrainOptions opts = options;
    opts.epochs = schedule.total_epochs;
    return classifier_loop(model, mani, data, opt, schedule.epochs, opts, &held);
}

} // namespace contnet
