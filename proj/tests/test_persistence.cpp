#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <sstream>

#include <unistd.h>

#include <doctest.h>
#include <json.hpp>

#include "contnet/persistence.hpp"
#include "gen.hpp"

using namespace contnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("contnet-persist-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

ModelFile pendulum_file(std::uint64_t seed)
{
    testgen::Gen gen(seed);
    const std::size_t D = 5;
    const ResidualModuleSpec module{ModuleKind::tanh_mlp, 2, D, 2};
    const double dt = 0.1;
    PendulumModel m{OdeBlockSpec{module, gen.weights(module.param_group(), 1, dt), 1.0}, Scheme::midpoint, dt, {}};
    return ModelFile{m, Provenance{seed, "midpoint", 1, 250, {}}};
}

ModelFile classifier_file(std::uint64_t seed, bool lift)
{
    ClassifierConfig cfg;
    cfg.widths = lift ? std::vector<std::size_t>{3, 4} : std::vector<std::size_t>{2, 4};
    cfg.basis_count = 4;
    ClassifierModel m = init_classifier(cfg, seed);
    NamedTensors p = m.parameters();
    testgen::Gen gen(seed + 100);
    for (auto& [name, t] : p) {
        t = gen.tensor(t.shape(), 0.7);
    }
    m.set_parameters(p);
    return ModelFile{m, Provenance{seed, "rk4", 4, 40, {8, 16}}};
}

NamedTensors all_coefficients(const ModelFile& f)
{
    if (f.is_pendulum()) {
        return f.pendulum().block.weights.coefficients();
    }
    return f.classifier().parameters();
}

std::string header_line(const std::string& text)
{
    return text.substr(0, text.find('\n'));
}

} // namespace

TEST_CASE("hex floats round trip exactly")
{
    testgen::Gen gen(80);
    std::vector<double> values{0.0, -0.0, 1.0, -2.5, std::numeric_limits<double>::denorm_min(),
                               std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(), 0.1};
    for (int i = 0; i < 1000; ++i) {
        values.push_back(gen.normal() * std::pow(10.0, gen.uniform(-300.0, 300.0)));
    }
    for (double v : values) {
        const double back = parse_hex_double(hex_double(v));
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
    CHECK_THROWS_AS(parse_hex_double(""), FormatError);
    CHECK_THROWS_AS(parse_hex_double("0x1.8p+1junk"), FormatError);
}

TEST_CASE("pendulum model round trip is bit-exact")
{
    const ModelFile f = pendulum_file(1);
    const std::string text = model_to_string(f);
    const ModelFile g = model_from_string(text);
    REQUIRE(g.is_pendulum());
    CHECK(all_coefficients(g) == all_coefficients(f));
    CHECK(g.pendulum().dt_data == f.pendulum().dt_data);
    CHECK(g.pendulum().train_scheme == Scheme::midpoint);
    CHECK(g.pendulum().config.rho0 == f.pendulum().config.rho0);
    CHECK(g.provenance == f.provenance);
    CHECK(model_to_string(g) == text);
    const Tensor x = Tensor({2, 3}, {0.1, 0.2, 0.3, -1.0, 0.5, 2.0});
    CHECK(g.pendulum().advance(Scheme::rk4_38, x, 0.1) == f.pendulum().advance(Scheme::rk4_38, x, 0.1));
}

TEST_CASE("classifier model round trip is bit-exact")
{
    for (bool lift : {true, false}) {
        const ModelFile f = classifier_file(2, lift);
        const ModelFile g = model_from_string(model_to_string(f));
        REQUIRE(!g.is_pendulum());
        CHECK(g.classifier().lift.has_value() == lift);
        CHECK(all_coefficients(g) == all_coefficients(f));
        CHECK(g.blocks().size() == 2);
        const ClassificationData d = make_synthetic_classification(10, 2, 0.05, 3);
        for (Scheme s : kAllSchemes) {
            const Manifestation mani{s, 3};
            CHECK(evaluate(g, mani, d.train.inputs) == evaluate(f, mani, d.train.inputs));
        }
    }
}

TEST_CASE("save, load, save gives identical bytes")
{
    for (const ModelFile& f : {pendulum_file(3), classifier_file(4, true)}) {
        const fs::path a = scratch("a.json");
        const fs::path b = scratch("b.json");
        save_model(f, a);
        save_model(load_model(a), b);
        CHECK(read_file(a) == read_file(b));
        CHECK(!fs::exists(a.string() + ".tmp"));
    }
}

TEST_CASE("distinct failures for version, truncation, fields and shapes")
{
    const std::string text = model_to_string(classifier_file(5, true));
    nlohmann::json j = nlohmann::json::parse(text);

    nlohmann::json v = j;
    v["version"] = kFormatVersion + 1;
    CHECK_THROWS_AS(model_from_string(v.dump()), VersionError);

    CHECK_THROWS_AS(model_from_string(text.substr(0, text.size() / 2)), TruncatedError);
    CHECK_THROWS_AS(model_from_string(""), TruncatedError);

    nlohmann::json missing = j;
    missing.erase("provenance");
    CHECK_THROWS_AS(model_from_string(missing.dump()), FormatError);

    nlohmann::json wrong = j;
    wrong["format"] = "contnet-graph";
    CHECK_THROWS_AS(model_from_string(wrong.dump()), FormatError);

    nlohmann::json shape = j;
    auto& data = shape["classifier"]["blocks"][0]["coefficients"]["A"]["data"];
    data.erase(data.size() - 1);
    CHECK_THROWS_AS(model_from_string(shape.dump()), ShapeError);

    nlohmann::json count = j;
    count["classifier"]["blocks"][0]["basis_count"] = 3;
    CHECK_THROWS_AS(model_from_string(count.dump()), ShapeError);

    CHECK_THROWS(load_model(scratch("does-not-exist.json")));
}

TEST_CASE("graph files replay the in-process forward pass")
{
    const ModelFile p = pendulum_file(6);
    const ModelFile c = classifier_file(7, true);
    const ClassificationData d = make_synthetic_classification(12, 2, 0.05, 3);
    for (Scheme s : kAllSchemes) {
        for (std::size_t nt : {1u, 2u, 8u}) {
            const Manifestation mani{s, nt};
            const GraphFile gp = make_graph_file(p, mani);
            CHECK(gp.replay(d.train.inputs) == evaluate(p, mani, d.train.inputs));
            const GraphFile gc = make_graph_file(c, mani);
            CHECK(gc.graphs.size() == 2);
            CHECK(gc.replay(d.train.inputs) == evaluate(c, mani, d.train.inputs));

            const fs::path path = scratch("graph.json");
            save_graph(gc, path);
            const GraphFile back = load_graph(path);
            CHECK(back.manifestation == mani);
            CHECK(back.replay(d.train.inputs) == evaluate(c, mani, d.train.inputs));
            CHECK(graph_to_string(back) == read_file(path));
        }
    }
}

TEST_CASE("graph files reject tampered stage tables")
{
    const GraphFile g = make_graph_file(classifier_file(8, false), Manifestation{Scheme::rk4_classic, 2});
    nlohmann::json j = nlohmann::json::parse(graph_to_string(g));
    nlohmann::json v = j;
    v["version"] = 99;
    CHECK_THROWS_AS(graph_from_string(v.dump()), VersionError);
    j["graphs"][0]["ops"].erase(0);
    const std::string text = j.dump();
    bool rejected = false;
    try {
        const GraphFile bad = graph_from_string(text);
        (void)bad.replay(Tensor({2, 1}));
    } catch (const std::exception&) {
        rejected = true;
    }
    CHECK(rejected);
}

TEST_CASE("report headers")
{
    CHECK(report_format_for("out/table.json") == ReportFormat::json);
    CHECK(report_format_for("out/table.csv") == ReportFormat::csv);
    CHECK(report_format_for("table") == ReportFormat::csv);

    const std::vector<ConvergenceTable> none;
    CHECK(report_to_string(none, ReportFormat::csv) == "dt,error,scheme,nt,diverged\n");
    CHECK(nlohmann::json::parse(report_to_string(none, ReportFormat::json)).empty());

    const ManifestationReport empty{Scheme::rk4_classic, {}};
    CHECK(report_to_string(empty, ReportFormat::csv) == "train_scheme,eval_scheme,Nt,E_test,seconds\n");
    CHECK(header_line(report_to_string(std::vector<EpochMetrics>{}, ReportFormat::csv)) ==
          "epoch,loss,accuracy,seconds,nt,param_count");
    CHECK(header_line(report_to_string(std::vector<RefinementEvent>{}, ReportFormat::csv)) ==
          "epoch,nt_before,nt_after,params_before,params_after,loss_before,loss_split,loss_after");
}

TEST_CASE("report values keep 17 significant digits")
{
    ConvergenceTable t{"true-euler", {{0.1, 10, 1.0 / 3.0, false}, {0.05, 20, kDivergedError, true}}, 1.0, 0.0};
    const std::string csv = report_to_string(std::vector<ConvergenceTable>{t}, ReportFormat::csv);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    CHECK(line == "0.10000000000000001,0.33333333333333331,true-euler,10,false");
    std::getline(in, line);
    CHECK(line.ends_with(",true"));
    CHECK(std::stod(line.substr(line.find(',') + 1)) == kDivergedError);

    const nlohmann::json j = nlohmann::json::parse(report_to_string(std::vector<ConvergenceTable>{t}, ReportFormat::json));
    REQUIRE(j.size() == 2);
    CHECK(j[0]["error"].get<double>() == 1.0 / 3.0);
    CHECK(j[0]["scheme"] == "true-euler");
    CHECK(j[1]["diverged"] == true);

    ManifestationReport r{Scheme::euler, {{Scheme::rk4_38, 16, 0.125, 0.5}}};
    const std::string m = report_to_string(r, ReportFormat::csv);
    CHECK(m.find("euler,rk4-38,16,0.125,0.5") != std::string::npos);
}

TEST_CASE("atomic writes create directories and replace files")
{
    const fs::path path = scratch("nested/deeper/report.csv");
    write_atomic(path, "first");
    write_atomic(path, "second");
    CHECK(read_file(path) == "second");
    for (const auto& entry : fs::directory_iterator(path.parent_path())) {
        CHECK(entry.path().filename() == "report.csv");
    }
    export_report(std::vector<EpochMetrics>{{0, 0.5, 0.75, 0.0, 2, 10}}, path, ReportFormat::csv);
    CHECK(read_file(path).find("0,0.5,0.75,0,2,10") != std::string::npos);
}
