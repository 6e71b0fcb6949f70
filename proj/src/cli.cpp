#include "contnet/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "contnet/experiments.hpp"
#include "contnet/persistence.hpp"
#include "contnet/training.hpp"

namespace contnet {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

fs::path default_out(const std::string& name)
{
    const char* dir = std::getenv(kOutputDirEnv);
    return (dir && *dir) ? fs::path(dir) / name : fs::path(name);
}

fs::path resolve_out(const std::string& given, const std::string& fallback)
{
    return given.empty() ? default_out(fallback) : fs::path(given);
}

/// foo/model.json -> foo/model_<suffix>.csv
fs::path sibling(const fs::path& path, const std::string& suffix)
{
    fs::path p = path;
    p.replace_filename(path.stem().string() + "_" + suffix + ".csv");
    return p;
}

Scheme scheme_arg(const std::string& name)
{
    try {
        return parse_scheme(name);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

const std::vector<std::string> kSchemeNames{"euler", "midpoint", "rk4", "rk4-38", "rk4-classic"};

struct Common {
    std::uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_default)
{
    cmd->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
    cmd->add_option("--out", c.out,
                    "Output path (default: $" + std::string(kOutputDirEnv) + "/" + out_default + ", or ./" +
                        out_default + ")");
}

struct PendulumArgs {
    Common common;
    std::string scheme = "rk4";
    double dt_data = 0.1;
    std::size_t pairs = 100;
    std::size_t hidden = 50;
    std::size_t epochs = 5000;
    double lr = 1e-2;
};

struct ConvergenceArgs {
    Common common;
    std::string model;
    std::string eval_scheme;
    std::vector<double> dt_list{0.4, 0.2, 0.1, 0.05, 0.025};
    double t_final = 10.0;
    bool baseline = false;
};

struct ClassifierArgs {
    Common common;
    std::string scheme = "rk4";
    std::size_t nt = 1;
    std::size_t basis = 0;
    std::vector<std::size_t> refine_at;
    std::size_t epochs = 40;
    std::vector<std::size_t> widths{16, 32, 64};
    std::string module = "dense_skip_init";
    double epsilon = 1.0;
    double stitch_epsilon = 1.0;
    double init_a = 0.1;
    std::string optimizer = "sgd";
    double lr = 1e-2;
    double momentum = 0.9;
    std::size_t batch = 64;
    std::size_t n_train = 1000;
    std::size_t n_test = 1000;
    double noise = 0.05;
};

struct SweepArgs {
    Common common;
    std::string model;
    std::vector<std::string> schemes{"euler", "midpoint", "rk4", "rk4-38"};
    std::vector<std::size_t> nt_list{1, 2, 4, 8, 16};
    std::size_t n_train = 1000;
    std::size_t n_test = 1000;
    double noise = 0.05;
};

struct ManifestArgs {
    Common common;
    std::string model;
    std::string scheme = "rk4";
    std::size_t nt = 1;
};

struct RefineArgs {
    Common common;
    std::string model;
    std::size_t factor = 2;
};

struct CoarsenArgs {
    Common common;
    std::string model;
    std::size_t to_m = 1;
};

int train_pendulum(const PendulumArgs& a, std::ostream& out)
{
    const Scheme scheme = scheme_arg(a.scheme);
    if (a.pairs == 0 || a.hidden == 0 || !(a.dt_data > 0.0)) {
        throw UsageError("--pairs, --hidden and --dt-data must be positive");
    }
    const TrajectoryDataset data = make_pendulum_dataset(a.dt_data, a.pairs);
    PendulumTrainOptions opts;
    opts.hidden = a.hidden;
    opts.iterations = a.epochs;
    opts.lr = a.lr;
    opts.seed = a.common.seed;
    PendulumTraining trained = train_odenet(scheme, data, opts);
    const fs::path path = resolve_out(a.common.out, "pendulum_model.json");
    ModelFile file{trained.model, Provenance{a.common.seed, std::string(scheme_name(scheme)), 1, a.epochs, {}}};
    save_model(file, path);
    export_report(trained.result.metrics, sibling(path, "metrics"), ReportFormat::csv);
    out << "model " << path.string() << "\n";
    out << "one_step_loss " << one_step_loss(trained.model, data) << "\n";
    return kExitOk;
}

const PendulumModel& pendulum_of(const ModelFile& file)
{
    if (!file.is_pendulum()) {
        throw UsageError("model is not a pendulum ODE-Net");
    }
    return file.pendulum();
}

const ClassifierModel& classifier_of(const ModelFile& file)
{
    if (file.is_pendulum()) {
        throw UsageError("model is not a classifier");
    }
    return file.classifier();
}

void check_dt_list(const std::vector<double>& dts)
{
    if (dts.empty()) {
        throw UsageError("--dt-list is empty");
    }
    for (double dt : dts) {
        if (!(dt > 0.0)) {
            throw UsageError("--dt-list values must be positive");
        }
    }
}

void print_tables(const std::vector<ConvergenceTable>& tables, std::ostream& out)
{
    for (const auto& t : tables) {
        out << t.scheme << " slope " << t.slope << "\n";
    }
}

int convergence(const ConvergenceArgs& a, std::ostream& out)
{
    check_dt_list(a.dt_list);
    const ModelFile file = load_model(a.model);
    const PendulumModel& m = pendulum_of(file);
    const Scheme eval = a.eval_scheme.empty() ? m.train_scheme : scheme_arg(a.eval_scheme);
    std::vector<ConvergenceTable> tables{convergence_study(m, eval, a.dt_list, a.t_final)};
    if (a.baseline) {
        tables.push_back(baseline_study(eval, a.dt_list, m.config, a.t_final));
    }
    const fs::path path = resolve_out(a.common.out, "convergence.csv");
    export_report(tables, path, report_format_for(path));
    print_tables(tables, out);
    out << "report " << path.string() << "\n";
    return kExitOk;
}

int interchange(const ConvergenceArgs& a, std::ostream& out)
{
    check_dt_list(a.dt_list);
    const ModelFile file = load_model(a.model);
    const PendulumModel& m = pendulum_of(file);
    std::vector<ConvergenceTable> tables = interchange_study(m, a.dt_list, a.t_final);
    if (a.baseline) {
        for (Scheme s : kAllSchemes) {
            tables.push_back(baseline_study(s, a.dt_list, m.config, a.t_final));
        }
    }
    const fs::path path = resolve_out(a.common.out, "interchange.csv");
    export_report(tables, path, report_format_for(path));
    print_tables(tables, out);
    out << "report " << path.string() << "\n";
    return kExitOk;
}

int train_classifier_cmd(const ClassifierArgs& a, std::ostream& out)
{
    const Scheme scheme = scheme_arg(a.scheme);
    if (a.nt == 0 || a.epochs == 0 || a.widths.empty()) {
        throw UsageError("--nt, --epochs and --widths must be positive");
    }
    ClassifierConfig cfg;
    cfg.widths = a.widths;
    try {
        cfg.kind = parse_module_kind(a.module);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const bool refine = !a.refine_at.empty();
    cfg.basis_count = a.basis == 0 ? a.nt : a.basis;
    if (refine && (a.nt != 1 || cfg.basis_count != 1)) {
        throw UsageError("--refine-at starts from Nt = M = 1; drop --nt/--basis or set them to 1");
    }
    cfg.epsilon = a.epsilon;
    cfg.stitch_epsilon = a.stitch_epsilon;
    cfg.init_a = a.init_a;

    const ClassificationData data = make_synthetic_classification(a.n_train, a.n_test, a.noise, a.common.seed);
    ClassifierModel model = init_classifier(cfg, a.common.seed + 1);
    Optimizer opt;
    if (a.optimizer == "sgd") {
        opt = SgdMomentumState{.lr = a.lr, .momentum = a.momentum};
    } else if (a.optimizer == "adam") {
        opt = AdamState{.lr = a.lr};
    } else {
        throw UsageError("--optimizer must be sgd or adam");
    }
    TrainOptions topts;
    topts.epochs = a.epochs;
    topts.batch_size = a.batch;
    topts.seed = a.common.seed;
    Manifestation mani{scheme, a.nt};
    TrainResult result;
    if (refine) {
        RefinementSchedule schedule{a.refine_at, a.epochs};
        try {
            schedule.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        std::vector<std::size_t> held_idx;
        for (std::size_t i = 0; i < std::min<std::size_t>(256, data.train.size()); ++i) {
            held_idx.push_back(i);
        }
        result = refinement_train(model, mani, data.train, opt, schedule, topts, gather(data.train, held_idx));
    } else {
        result = train_classifier(model, mani, data.train, opt, topts);
    }
    const fs::path path = resolve_out(a.common.out, "classifier_model.json");
    ModelFile file{model, Provenance{a.common.seed, std::string(scheme_name(scheme)), mani.nt, a.epochs, a.refine_at}};
    save_model(file, path);
    export_report(result.metrics, sibling(path, "metrics"), ReportFormat::csv);
    if (refine) {
        export_report(result.events, sibling(path, "events"), ReportFormat::csv);
    }
    out << "model " << path.string() << "\n";
    out << "nt " << mani.nt << "\n";
    out << "test_error " << test_error(model, mani, data.test) << "\n";
    return kExitOk;
}

int sweep(const SweepArgs& a, std::ostream& out)
{
    const ModelFile file = load_model(a.model);
    const ClassifierModel& model = classifier_of(file);
    std::vector<Scheme> schemes;
    for (const auto& s : a.schemes) {
        schemes.push_back(scheme_arg(s));
    }
    for (std::size_t nt : a.nt_list) {
        if (nt == 0) {
            throw UsageError("--nt-list values must be positive");
        }
    }
    const ClassificationData data = make_synthetic_classification(a.n_train, a.n_test, a.noise, a.common.seed);
    const std::uint64_t before = parameter_checksum(model.parameters());
    const ManifestationReport report =
        manifestation_sweep(model, scheme_arg(file.provenance.train_scheme), schemes, a.nt_list, data.test);
    if (parameter_checksum(model.parameters()) != before) {
        throw NumericError("sweep modified the model parameters");
    }
    const fs::path path = resolve_out(a.common.out, "sweep.csv");
    export_report(report, path, report_format_for(path));
    for (const auto& r : report.rows) {
        out << scheme_name(r.scheme) << " nt=" << r.nt << " E_test=" << r.e_test << "\n";
    }
    out << "report " << path.string() << "\n";
    return kExitOk;
}

int manifest_cmd(const ManifestArgs& a, std::ostream& out)
{
    if (a.nt == 0) {
        throw UsageError("--nt must be positive");
    }
    const ModelFile file = load_model(a.model);
    const GraphFile graph = make_graph_file(file, Manifestation{scheme_arg(a.scheme), a.nt});
    const fs::path path = resolve_out(a.common.out, "graph.json");
    save_graph(graph, path);
    std::size_t invocations = 0;
    for (const auto& g : graph.graphs) {
        invocations += g.invocations();
    }
    out << "graph " << path.string() << "\n";
    out << "invocations " << invocations << "\n";
    return kExitOk;
}

int refine_weights(const RefineArgs& a, std::ostream& out)
{
    if (a.factor < 2 || (a.factor & (a.factor - 1)) != 0) {
        throw UsageError("--factor must be a power of two >= 2");
    }
    ModelFile file = load_model(a.model);
    for (OdeBlockSpec* b : file.blocks()) {
        for (std::size_t f = a.factor; f > 1; f /= 2) {
            b->weights = refine_split(b->weights);
        }
    }
    const fs::path path = resolve_out(a.common.out, "refined_model.json");
    save_model(file, path);
    out << "model " << path.string() << "\n";
    out << "M " << file.blocks().front()->weights.basis_count() << "\n";
    return kExitOk;
}

int coarsen_weights(const CoarsenArgs& a, std::ostream& out)
{
    ModelFile file = load_model(a.model);
    for (OdeBlockSpec* b : file.blocks()) {
        if (a.to_m == 0 || b->weights.basis_count() % a.to_m != 0) {
            throw UsageError("--to-m must divide the current M = " + std::to_string(b->weights.basis_count()));
        }
    }
    for (OdeBlockSpec* b : file.blocks()) {
        b->weights = project_coarsen(b->weights, a.to_m);
    }
    const fs::path path = resolve_out(a.common.out, "coarsened_model.json");
    save_model(file, path);
    out << "model " << path.string() << "\n";
    out << "M " << a.to_m << "\n";
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Continuous-in-depth networks: ODE-Net pendulum studies and manifestation sweeps", "contnet"};
    app.require_subcommand(1);
    const auto schemes = CLI::IsMember(kSchemeNames);

    PendulumArgs pa;
    auto* tp = app.add_subcommand("train-pendulum", "Train an ODE-Net on exact pendulum data");
    add_common(tp, pa.common, "pendulum_model.json");
    tp->add_option("--scheme", pa.scheme, "Integrator of the training graph")->check(schemes)->capture_default_str();
    tp->add_option("--dt-data", pa.dt_data, "Sampling interval of the data")->capture_default_str();
    tp->add_option("--pairs", pa.pairs, "Number of (x_k, x_k+1) pairs")->capture_default_str();
    tp->add_option("--hidden", pa.hidden, "Hidden units D")->capture_default_str();
    tp->add_option("--epochs", pa.epochs, "Full-batch Adam iterations")->capture_default_str();
    tp->add_option("--lr", pa.lr, "Initial learning rate (cosine decay)")->capture_default_str();

    ConvergenceArgs ca;
    auto* cv = app.add_subcommand("convergence", "Global error E(dt) of a trained pendulum model");
    add_common(cv, ca.common, "convergence.csv");
    cv->add_option("--model", ca.model, "Pendulum model file")->required()->check(CLI::ExistingFile);
    cv->add_option("--eval-scheme", ca.eval_scheme, "Integrator to evaluate with (default: training scheme)")
        ->check(schemes);
    cv->add_option("--dt-list", ca.dt_list, "Comma-separated step sizes")->delimiter(',')->capture_default_str();
    cv->add_option("--t-final", ca.t_final, "Final time T")->capture_default_str();
    cv->add_flag("--baseline", ca.baseline, "Add rows computed with the exact right-hand side");

    ConvergenceArgs ia;
    auto* ic = app.add_subcommand("interchange", "Evaluate a trained pendulum model under every integrator");
    add_common(ic, ia.common, "interchange.csv");
    ic->add_option("--model", ia.model, "Pendulum model file")->required()->check(CLI::ExistingFile);
    ic->add_option("--dt-list", ia.dt_list, "Comma-separated step sizes")->delimiter(',')->capture_default_str();
    ic->add_option("--t-final", ia.t_final, "Final time T")->capture_default_str();
    ic->add_flag("--baseline", ia.baseline, "Add exact right-hand-side rows for every integrator");

    ClassifierArgs ka;
    auto* tc = app.add_subcommand("train-classifier", "Train the synthetic 2D classifier");
    add_common(tc, ka.common, "classifier_model.json");
    tc->add_option("--scheme", ka.scheme, "Integrator of the training graph")->check(schemes)->capture_default_str();
    tc->add_option("--nt", ka.nt, "Time steps per block")->capture_default_str();
    tc->add_option("--basis", ka.basis, "Weight intervals M per block (default: Nt)");
    tc->add_option("--refine-at", ka.refine_at, "Epochs at which to split weights and double Nt")->delimiter(',');
    tc->add_option("--epochs", ka.epochs, "Training epochs")->capture_default_str();
    tc->add_option("--widths", ka.widths, "Block widths")->delimiter(',')->capture_default_str();
    tc->add_option("--module", ka.module, "Residual module")
        ->check(CLI::IsMember({"tanh_mlp", "dense_skip_init"}))
        ->capture_default_str();
    tc->add_option("--epsilon", ka.epsilon, "Block time scale")->capture_default_str();
    tc->add_option("--stitch-epsilon", ka.stitch_epsilon, "Stitch residual scale")->capture_default_str();
    tc->add_option("--init-a", ka.init_a, "Scale of the initial block output matrices")->capture_default_str();
    tc->add_option("--optimizer", ka.optimizer, "sgd (momentum) or adam")
        ->check(CLI::IsMember({"sgd", "adam"}))
        ->capture_default_str();
    tc->add_option("--lr", ka.lr, "Learning rate")->capture_default_str();
    tc->add_option("--momentum", ka.momentum, "SGD momentum")->capture_default_str();
    tc->add_option("--batch", ka.batch, "Mini-batch size")->capture_default_str();
    tc->add_option("--n-train", ka.n_train, "Training points")->capture_default_str();
    tc->add_option("--n-test", ka.n_test, "Test points")->capture_default_str();
    tc->add_option("--noise", ka.noise, "Gaussian noise on the annuli")->capture_default_str();

    SweepArgs sa;
    auto* sw = app.add_subcommand("sweep", "Test error of a frozen classifier over schemes and Nt");
    add_common(sw, sa.common, "sweep.csv");
    sw->add_option("--model", sa.model, "Classifier model file")->required()->check(CLI::ExistingFile);
    sw->add_option("--schemes", sa.schemes, "Integrators")->delimiter(',')->check(schemes)->capture_default_str();
    sw->add_option("--nt-list", sa.nt_list, "Step counts")->delimiter(',')->capture_default_str();
    sw->add_option("--n-train", sa.n_train, "Training points used when the data was drawn")->capture_default_str();
    sw->add_option("--n-test", sa.n_test, "Test points")->capture_default_str();
    sw->add_option("--noise", sa.noise, "Gaussian noise on the annuli")->capture_default_str();

    ManifestArgs ma;
    auto* mf = app.add_subcommand("manifest", "Write the discrete graph of a model under (scheme, Nt)");
    add_common(mf, ma.common, "graph.json");
    mf->add_option("--model", ma.model, "Model file")->required()->check(CLI::ExistingFile);
    mf->add_option("--scheme", ma.scheme, "Integrator")->check(schemes)->capture_default_str();
    mf->add_option("--nt", ma.nt, "Time steps per block")->capture_default_str();

    RefineArgs ra;
    auto* rw = app.add_subcommand("refine-weights", "Split every weight interval");
    add_common(rw, ra.common, "refined_model.json");
    rw->add_option("--model", ra.model, "Model file")->required()->check(CLI::ExistingFile);
    rw->add_option("--factor", ra.factor, "Refinement factor (power of two)")->capture_default_str();

    CoarsenArgs co;
    auto* cw = app.add_subcommand("coarsen-weights", "Project weights onto fewer intervals");
    add_common(cw, co.common, "coarsened_model.json");
    cw->add_option("--model", co.model, "Model file")->required()->check(CLI::ExistingFile);
    cw->add_option("--to-m", co.to_m, "Target number of intervals")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (tp->parsed()) return train_pendulum(pa, out);
        if (cv->parsed()) return convergence(ca, out);
        if (ic->parsed()) return interchange(ia, out);
        if (tc->parsed()) return train_classifier_cmd(ka, out);
        if (sw->parsed()) return sweep(sa, out);
        if (mf->parsed()) return manifest_cmd(ma, out);
        if (rw->parsed()) return refine_weights(ra, out);
        if (cw->parsed()) return coarsen_weights(co, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

} // namespace contnet
