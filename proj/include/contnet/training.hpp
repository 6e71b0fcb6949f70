#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "contnet/autodiff.hpp"
#include "contnet/odeblock.hpp"
#include "contnet/weight_basis.hpp"

namespace contnet {

/// Per-epoch learning-rate multiplier: the product of every step multiplier
/// whose epoch has been reached, times an optional cosine decay from 1 down
/// to `cosine_floor` over `cosine_epochs`.
struct LrSchedule {
    std::map<std::size_t, double> steps;
    std::size_t cosine_epochs = 0;
    double cosine_floor = 0.0;

    double multiplier(std::size_t epoch) const;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    NamedTensors m{};
    NamedTensors v{};
};

struct SgdMomentumState {
    double lr = 1e-2;
    double momentum = 0.9;
    NamedTensors velocity{};
};

using Optimizer = std::variant<AdamState, SgdMomentumState>;

/// Bias-corrected Adam. Moments are created on first use.
void adam_step(AdamState& state, NamedTensors& params, const NamedTensors& grads, double lr_multiplier = 1.0);

/// v' = mu v + g, p' = p - lr v'.
void sgd_momentum_step(SgdMomentumState& state, NamedTensors& params, const NamedTensors& grads,
                       double lr_multiplier = 1.0);

void optimizer_step(Optimizer& opt, NamedTensors& params, const NamedTensors& grads, double lr_multiplier = 1.0);

/// Doubles the leading axis of the moments of `names`, copying each slice,
/// so the state follows a refine_split of those parameters.
void split_optimizer_state(Optimizer& opt, std::span<const std::string> names);

/// Mean over pairs of the squared Euclidean residual; states are columns.
template <class V>
V one_step_loss(const V& predicted, const V& target)
{
    return scale(mse(predicted, target), static_cast<double>(value_of(target).dim(0)));
}

template <class V>
V cross_entropy_loss(const V& logits, std::span<const std::size_t> labels)
{
    return cross_entropy(logits, labels);
}

/// Inputs [d, n] with one class label per column.
struct LabeledData {
    Tensor inputs;
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
    void validate() const;
};

/// Columns `idx` of a [d, n] tensor.
Tensor gather_columns(const Tensor& data, std::span<const std::size_t> idx);
LabeledData gather(const LabeledData& data, std::span<const std::size_t> idx);

struct TrainOptions {
    std::size_t epochs = 1;
    /// 0 trains full-batch.
    std::size_t batch_size = 0;
    std::uint64_t seed = 0;
    LrSchedule schedule;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double loss = 0.0;
    /// NaN when the task has no accuracy.
    double accuracy = 0.0;
    double seconds = 0.0;
    std::size_t nt = 0;
    std::size_t param_count = 0;
};

struct RefinementEvent {
    std::size_t epoch = 0;
    std::size_t nt_before = 0;
    std::size_t nt_after = 0;
    std::size_t params_before = 0;
    std::size_t params_after = 0;
    /// Held-batch loss before the event, after splitting the weights at the
    /// old Nt, and after doubling Nt.
    double loss_before = 0.0;
    double loss_split = 0.0;
    double loss_after = 0.0;
};

struct TrainResult {
    NamedTensors params;
    std::vector<EpochMetrics> metrics;
    std::vector<RefinementEvent> events;
};

/// Loss of the samples `batch` with the parameters recorded on `tape`.
using BatchLoss = std::function<Var(Tape&, const Named<Var>&, std::span<const std::size_t>)>;
/// Optional per-epoch accuracy of the current parameters.
using AccuracyFn = std::function<double(const NamedTensors&)>;
/// Runs before every epoch; may reshape the parameters and optimizer state.
using EpochHook = std::function<void(std::size_t epoch, NamedTensors&, Optimizer&)>;

/// Mini-batch loop with a seeded shuffle per epoch. Throws NumericError
/// naming the epoch when the loss stops being finite.
TrainResult train(NamedTensors params, std::size_t n_samples, const BatchLoss& loss, Optimizer& opt,
                  const TrainOptions& options, const AccuracyFn& accuracy = {}, const EpochHook& hook = {});

struct RefinementSchedule {
    std::vector<std::size_t> epochs;
    std::size_t total_epochs = 0;

    void validate() const;
};

/// Classifier training under one manifestation shared by all blocks.
TrainResult train_classifier(ClassifierModel& model, const Manifestation& mani, const LabeledData& data,
                             Optimizer& opt, const TrainOptions& options);

/// Starts from Nt = M = 1 and, at every scheduled epoch, splits every
/// block's weights and doubles Nt. `held` is the batch on which each event
/// is logged. The schedule's total_epochs overrides options.epochs.
TrainResult refinement_train(ClassifierModel& model, Manifestation& mani, const LabeledData& data, Optimizer& opt,
                             const RefinementSchedule& schedule, const TrainOptions& options,
                             const LabeledData& held);

double classifier_loss(const ClassifierModel& model, const Manifestation& mani, const LabeledData& data);
double classifier_accuracy(const ClassifierModel& model, const Manifestation& mani, const LabeledData& data);

std::size_t param_count(const NamedTensors& params);

} // namespace contnet
