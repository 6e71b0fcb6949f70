#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contnet/elliptic.hpp"
#include "contnet/integrators.hpp"
#include "contnet/odeblock.hpp"
#include "contnet/training.hpp"

namespace contnet {

/// Consecutive samples (x_k, x_{k+1}) of the exact pendulum at t_k = k dt_data.
struct TrajectoryDataset {
    double dt_data = 0.1;
    PendulumConfig config;
    std::vector<std::pair<Tensor, Tensor>> pairs;

    double horizon() const { return dt_data * static_cast<double>(pairs.size()); }
    /// [2, N] matrices of the first and second elements.
    Tensor inputs() const;
    Tensor targets() const;
    void validate() const;
};

TrajectoryDataset make_pendulum_dataset(double dt_data, std::size_t n_pairs, const PendulumConfig& cfg = {});

/// Learned right-hand side G(x) = A tanh(W x + b), stored as a single
/// time-independent block (M = 1) with T = dt_data and epsilon = 1, so that
/// one manifested step is one application of the trained ODE-Net.
struct PendulumModel {
    OdeBlockSpec block;
    Scheme train_scheme = Scheme::rk4_classic;
    double dt_data = 0.1;
    PendulumConfig config;

    Tensor rhs(const Tensor& x) const;
    /// One step of `scheme` with step size dt.
    Tensor advance(Scheme scheme, const Tensor& x, double dt) const;
};

struct PendulumTrainOptions {
    std::size_t hidden = 50;
    std::size_t iterations = 5000;
    double lr = 1e-2;
    double lr_floor = 1e-5;
    double init_w = 0.5;
    double init_a = 0.1;
    std::uint64_t seed = 0;
};

struct PendulumTraining {
    PendulumModel model;
    TrainResult result;
};

/// Full-batch Adam with cosine decay on the one-step loss.
PendulumTraining train_odenet(Scheme scheme, const TrajectoryDataset& data, const PendulumTrainOptions& options);

double one_step_loss(const PendulumModel& model, const TrajectoryDataset& data);

struct ConvergenceRow {
    double dt = 0.0;
    std::size_t nt = 0;
    double error = 0.0;
    bool diverged = false;
};

struct ConvergenceTable {
    /// Evaluation scheme, prefixed "true-" for rows computed with the exact RHS.
    std::string scheme;
    std::vector<ConvergenceRow> rows;
    double slope = 0.0;
    double intercept = 0.0;

    double error_at(double dt) const;
};

inline constexpr double kDivergedError = 1e6;

/// Rolls the trained step Nt = round(T / dt) times from x(0) and compares
/// with the exact state at T. Rows come out in decreasing dt.
ConvergenceTable convergence_study(const PendulumModel& model, Scheme eval, std::span<const double> dt_list,
                                   double t_final = 10.0);

/// Same with the exact pendulum right-hand side in place of G.
ConvergenceTable baseline_study(Scheme eval, std::span<const double> dt_list, const PendulumConfig& cfg,
                                double t_final = 10.0);

std::vector<ConvergenceTable> interchange_study(const PendulumModel& model, std::span<const double> dt_list,
                                                double t_final = 10.0);

struct ClassificationData {
    LabeledData train;
    LabeledData test;
};

/// Two concentric noisy annuli (radius 1 for class 0, 2 for class 1).
ClassificationData make_synthetic_classification(std::size_t n_train, std::size_t n_test, double noise,
                                                 std::uint64_t seed);

struct ClassifierConfig {
    std::size_t input_dim = 2;
    std::size_t classes = 2;
    /// Block widths; a lift layer is added when the first differs from input_dim.
    std::vector<std::size_t> widths{16, 32, 64};
    ModuleKind kind = ModuleKind::dense_skip_init;
    std::size_t basis_count = 1;
    double horizon = 1.0;
    double epsilon = 1.0;
    double stitch_epsilon = 1.0;
    /// Standard deviation multiplier for the block A matrices.
    double init_a = 0.1;
};

ClassifierModel init_classifier(const ClassifierConfig& cfg, std::uint64_t seed);

/// Fraction of misclassified columns under argmax of the logits.
double test_error(const ClassifierModel& model, const Manifestation& mani, const LabeledData& data);

struct ManifestationRow {
    Scheme scheme = Scheme::euler;
    std::size_t nt = 1;
    double e_test = 0.0;
    double seconds = 0.0;
};

struct ManifestationReport {
    Scheme train_scheme = Scheme::euler;
    std::vector<ManifestationRow> rows;

    const ManifestationRow& at(Scheme scheme, std::size_t nt) const;
};

ManifestationReport manifestation_sweep(const ClassifierModel& model, Scheme train_scheme,
                                        std::span<const Scheme> schemes, std::span<const std::size_t> nts,
                                        const LabeledData& test);

/// FNV-1a over parameter names and raw bytes.
std::uint64_t parameter_checksum(const NamedTensors& params);

} // namespace contnet
