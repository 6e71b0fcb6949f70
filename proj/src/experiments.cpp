#include "contnet/experiments.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace contnet {

namespace {

Tensor stack_columns(const std::vector<Tensor>& cols)
{
    const std::size_t d = cols.front().size();
    Tensor out({d, cols.size()});
    for (std::size_t j = 0; j < cols.size(); ++j) {
        for (std::size_t r = 0; r < d; ++r) {
            out.at(r, j) = cols[j][r];
        }
    }
    return out;
}

} // namespace

Tensor TrajectoryDataset::inputs() const
{
    std::vector<Tensor> cols;
    for (const auto& p : pairs) {
        cols.push_back(p.first);
    }
    return stack_columns(cols);
}

Tensor TrajectoryDataset::targets() const
{
    std::vector<Tensor> cols;
    for (const auto& p : pairs) {
        cols.push_back(p.second);
    }
    return stack_columns(cols);
}

void TrajectoryDataset::validate() const
{
    if (!(dt_data > 0.0)) {
        throw std::invalid_argument("trajectory dataset: dt_data must be positive");
    }
    if (pairs.empty()) {
        throw std::invalid_argument("trajectory dataset: no pairs");
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (!pairs[k].first.all_finite() || !pairs[k].second.all_finite()) {
            throw NumericError("trajectory dataset: non-finite state in pair " + std::to_string(k));
        }
        if (k + 1 < pairs.size() && !(pairs[k].second == pairs[k + 1].first)) {
            throw std::invalid_argument("trajectory dataset: pair " + std::to_string(k) + " does not chain");
        }
    }
}

TrajectoryDataset make_pendulum_dataset(double dt_data, std::size_t n_pairs, const PendulumConfig& cfg)
{
    if (!(dt_data > 0.0) || !std::isfinite(dt_data)) {
        throw DomainError("make_pendulum_dataset: dt_data must be positive");
    }
    if (n_pairs == 0) {
        throw DomainError("make_pendulum_dataset: need at least one pair");
    }
    TrajectoryDataset data{dt_data, cfg, {}};
    Tensor prev = to_tensor(pendulum_exact(0.0, cfg));
    for (std::size_t k = 1; k <= n_pairs; ++k) {
        Tensor next = to_tensor(pendulum_exact(static_cast<double>(k) * dt_data, cfg));
        data.pairs.emplace_back(prev, next);
        prev = std::move(next);
    }
    return data;
}

Tensor PendulumModel::rhs(const Tensor& x) const
{
    return scale(residual_eval(block.module, x, theta_eval(block.weights, 0.0)), block.epsilon);
}

Tensor PendulumModel::advance(Scheme scheme, const Tensor& x, double dt) const
{
    const NamedTensors theta = theta_eval(block.weights, 0.0);
    auto f = [&](const Tensor& s, double) { return scale(residual_eval(block.module, s, theta), block.epsilon); };
    return step<Tensor>(tableau(scheme), f, x, 0.0, dt);
}

PendulumTraining train_odenet(Scheme scheme, const TrajectoryDataset& data, const PendulumTrainOptions& options)
{
    data.validate();
    if (options.hidden == 0) {
        throw std::invalid_argument("train_odenet: hidden width must be positive");
    }
    const std::size_t D = options.hidden;
    ResidualModuleSpec module{ModuleKind::tanh_mlp, 2, D, 2};

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](Shape shape, double sd) {
        Tensor t(std::move(shape));
        for (double& v : t.data()) {
            v = sd * normal(rng);
        }
        return t;
    };
    NamedTensors coeffs;
    coeffs.emplace("W", draw({1, D, 2}, options.init_w));
    coeffs.emplace("b", draw({1, D}, options.init_w));
    coeffs.emplace("A", draw({1, 2, D}, options.init_a));
    PendulumModel model{OdeBlockSpec{module, WeightFunction(module.param_group(), 1, data.dt_data, coeffs), 1.0},
                        scheme, data.dt_data, data.config};

    const Tensor inputs = data.inputs();
    const Tensor targets = data.targets();
    const ButcherTableau tab = tableau(scheme);
    const double dt = data.dt_data;
    BatchLoss loss = [&](Tape& tape, const Named<Var>& vars, std::span<const std::size_t>) {
        const Named<Var> theta = theta_select(vars, 0);
        auto f = [&](const Var& x, double) { return residual_eval(module, x, theta); };
        const Var x0 = constant(tape, inputs);
        const Var x1 = constant(tape, targets);
        return one_step_loss(step<Var>(tab, f, x0, 0.0, dt), x1);
    };

    Optimizer opt = AdamState{.lr = options.lr};
    TrainOptions topts;
    topts.epochs = options.iterations;
    topts.batch_size = 0;
    topts.seed = options.seed;
    topts.schedule.cosine_epochs = options.iterations;
    topts.schedule.cosine_floor = options.lr > 0.0 ? options.lr_floor / options.lr : 0.0;

    TrainResult result = train(coeffs, data.pairs.size(), loss, opt, topts);
    model.block.weights.set_coefficients(result.params);
    for (auto& m : result.metrics) {
        m.nt = 1;
    }
    return {std::move(model), std::move(result)};
}

double one_step_loss(const PendulumModel& model, const TrajectoryDataset& data)
{
    const Tensor pred = model.advance(model.train_scheme, data.inputs(), model.dt_data);
    return one_step_loss(pred, data.targets()).item();
}

double ConvergenceTable::error_at(double dt) const
{
    for (const auto& r : rows) {
        if (std::abs(r.dt - dt) <= 1e-12 * dt) {
            return r.error;
        }
    }
    throw std::out_of_range("convergence table: no row at dt " + std::to_string(dt));
}

namespace {

template <class Advance>
ConvergenceTable rollout_table(std::string label, std::span<const double> dt_list, double t_final,
                               const PendulumConfig& cfg, Advance&& advance)
{
    if (!(t_final > 0.0)) {
        throw DomainError("convergence study: T_final must be positive");
    }
    std::vector<double> dts(dt_list.begin(), dt_list.end());
    for (double dt : dts) {
        if (!(dt > 0.0) || !std::isfinite(dt)) {
            throw DomainError("convergence study: dt values must be positive");
        }
    }
    std::sort(dts.begin(), dts.end(), std::greater<>());
    const Tensor x0 = to_tensor(pendulum_exact(0.0, cfg));
    const Tensor exact = to_tensor(pendulum_exact(t_final, cfg));

    ConvergenceTable table{std::move(label), {}, 0.0, 0.0};
    std::vector<std::pair<double, double>> fit;
    for (double requested : dts) {
        const std::size_t nt = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(t_final / requested)));
        const double dt = t_final / static_cast<double>(nt);
        ConvergenceRow row{dt, nt, 0.0, false};
        Tensor x = x0;
        try {
            for (std::size_t k = 0; k < nt; ++k) {
                x = advance(x, dt);
                if (!x.all_finite() || l2_norm(x) > kDivergedError) {
                    row.diverged = true;
                    break;
                }
            }
        } catch (const NumericError&) {
            row.diverged = true;
        }
        if (!row.diverged) {
            row.error = l2_norm(x - exact);
            if (!(row.error <= kDivergedError)) {
                row.diverged = true;
            }
        }
        if (row.diverged) {
            row.error = kDivergedError;
        } else {
            fit.emplace_back(dt, row.error);
        }
        table.rows.push_back(row);
    }
    try {
        const OrderFit f = order_fit(fit, l2_norm(exact));
        table.slope = f.slope;
        table.intercept = f.intercept;
    } catch (const std::exception&) {
        table.slope = std::numeric_limits<double>::quiet_NaN();
        table.intercept = std::numeric_limits<double>::quiet_NaN();
    }
    return table;
}

} // namespace

ConvergenceTable convergence_study(const PendulumModel& model, Scheme eval, std::span<const double> dt_list,
                                   double t_final)
{
    return rollout_table(std::string(scheme_name(eval)), dt_list, t_final, model.config,
                         [&](const Tensor& x, double dt) { return model.advance(eval, x, dt); });
}

ConvergenceTable baseline_study(Scheme eval, std::span<const double> dt_list, const PendulumConfig& cfg,
                                double t_final)
{
    const ButcherTableau tab = tableau(eval);
    auto f = [&](const Tensor& x, double) { return true_rhs(x, cfg); };
    return rollout_table("true-" + std::string(scheme_name(eval)), dt_list, t_final, cfg,
                         [&](const Tensor& x, double dt) { return step<Tensor>(tab, f, x, 0.0, dt); });
}

std::vector<ConvergenceTable> interchange_study(const PendulumModel& model, std::span<const double> dt_list,
                                                double t_final)
{
    std::vector<ConvergenceTable> tables;
    for (Scheme s : kAllSchemes) {
        tables.push_back(convergence_study(model, s, dt_list, t_final));
    }
    return tables;
}

ClassificationData make_synthetic_classification(std::size_t n_train, std::size_t n_test, double noise,
                                                 std::uint64_t seed)
{
    if (n_train == 0 || n_test == 0) {
        throw std::invalid_argument("synthetic classification: need at least one sample per split");
    }
    if (!(noise >= 0.0)) {
        throw std::invalid_argument("synthetic classification: noise must be non-negative");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto make = [&](std::size_t n) {
        LabeledData d{Tensor({2, n}), std::vector<std::size_t>(n)};
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t label = i % 2;
            const double radius = 1.0 + static_cast<double>(label);
            const double th = angle(rng);
            const double nx = gauss(rng);
            const double ny = gauss(rng);
            d.inputs.at(0, i) = radius * std::cos(th) + noise * nx;
            d.inputs.at(1, i) = radius * std::sin(th) + noise * ny;
            d.labels[i] = label;
        }
        return d;
    };
    ClassificationData out;
    out.train = make(n_train);
    out.test = make(n_test);
    return out;
}

ClassifierModel init_classifier(const ClassifierConfig& cfg, std::uint64_t seed)
{
    if (cfg.widths.empty()) {
        throw std::invalid_argument("init_classifier: no block widths");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto dense = [&](Shape shape, std::size_t fan_in, double mult) {
        Tensor t(std::move(shape));
        const double sd = mult / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data()) {
            v = sd * normal(rng);
        }
        return t;
    };

    std::optional<Linear> lift;
    if (cfg.widths.front() != cfg.input_dim) {
        lift = Linear{dense({cfg.widths.front(), cfg.input_dim}, cfg.input_dim, 1.0), Tensor({cfg.widths.front()})};
    }
    const std::size_t M = cfg.basis_count;
    std::vector<OdeBlockSpec> blocks;
    for (std::size_t w : cfg.widths) {
        ResidualModuleSpec module{cfg.kind, w, w, w};
        NamedTensors coeffs;
        coeffs.emplace("A", dense({M, w, w}, w, cfg.init_a));
        coeffs.emplace("W", dense({M, w, w}, w, 1.0));
        coeffs.emplace("b", Tensor({M, w}));
        if (cfg.kind == ModuleKind::dense_skip_init) {
            coeffs.emplace("s", Tensor({M, 1}));
        }
        blocks.push_back(OdeBlockSpec{module, WeightFunction(module.param_group(), M, cfg.horizon, coeffs),
                                      cfg.epsilon});
    }
    std::vector<StitchSpec> stitches;
    for (std::size_t j = 0; j + 1 < cfg.widths.size(); ++j) {
        const std::size_t in = cfg.widths[j];
        const std::size_t out = cfg.widths[j + 1];
        ResidualModuleSpec module{cfg.kind, in, in, out};
        NamedTensors theta;
        Tensor P = dense({out, in}, in, 1.0);
        theta.emplace("A", dense({out, in}, in, 0.1));
        theta.emplace("W", dense({in, in}, in, 1.0));
        theta.emplace("b", Tensor({in}));
        if (cfg.kind == ModuleKind::dense_skip_init) {
            theta.emplace("s", Tensor({1}));
        }
        stitches.push_back(StitchSpec{module, std::move(P), std::move(theta), cfg.stitch_epsilon});
    }
    Linear head{dense({cfg.classes, cfg.widths.back()}, cfg.widths.back(), 1.0), Tensor({cfg.classes})};
    return build_classifier(std::move(lift), std::move(blocks), std::move(stitches), std::move(head));
}

double test_error(const ClassifierModel& model, const Manifestation& mani, const LabeledData& data)
{
    data.validate();
    if (data.inputs.dim(0) != model.input_width()) {
        throw ShapeError("test_error: data width " + std::to_string(data.inputs.dim(0)) +
                         " does not match model input " + std::to_string(model.input_width()));
    }
    return 1.0 - classifier_accuracy(model, mani, data);
}

const ManifestationRow& ManifestationReport::at(Scheme scheme, std::size_t nt) const
{
    for (const auto& r : rows) {
        if (r.scheme == scheme && r.nt == nt) {
            return r;
        }
    }
    throw std::out_of_range("manifestation report: no cell (" + std::string(scheme_name(scheme)) + ", " +
                            std::to_string(nt) + ")");
}

ManifestationReport manifestation_sweep(const ClassifierModel& model, Scheme train_scheme,
                                        std::span<const Scheme> schemes, std::span<const std::size_t> nts,
                                        const LabeledData& test)
{
    ManifestationReport report{train_scheme, {}};
    for (Scheme s : schemes) {
        for (std::size_t nt : nts) {
            const auto start = std::chrono::steady_clock::now();
            const double e = test_error(model, Manifestation{s, nt}, test);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            report.rows.push_back({s, nt, e, secs});
        }
    }
    return report;
}

std::uint64_t parameter_checksum(const NamedTensors& params)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (const auto& [name, t] : params) {
        for (char c : name) {
            mix(static_cast<unsigned char>(c));
        }
        for (double v : t.data()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                mix(static_cast<unsigned char>(bits >> (8 * i)));
            }
        }
    }
    return h;
}

} // namespace contnet
