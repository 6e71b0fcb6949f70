#include "contnet/persistence.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace contnet {

using nlohmann::json;

std::string hex_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

double parse_hex_double(const std::string& s)
{
    if (s.empty()) {
        throw FormatError("empty float literal");
    }
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) {
        throw FormatError("bad float literal '" + s + "'");
    }
    return v;
}

namespace {

const json& field(const json& j, const char* key)
{
    if (!j.is_object()) {
        throw FormatError(std::string("expected an object holding '") + key + "'");
    }
    auto it = j.find(key);
    if (it == j.end()) {
        throw FormatError(std::string("missing field '") + key + "'");
    }
    return *it;
}

template <class T>
T get(const json& j, const char* key)
{
    try {
        return field(j, key).get<T>();
    } catch (const json::type_error&) {
        throw FormatError(std::string("field '") + key + "' has the wrong type");
    }
}

double get_real(const json& j, const char* key)
{
    return parse_hex_double(get<std::string>(j, key));
}

json tensor_json(const Tensor& t)
{
    json data = json::array();
    for (double v : t.data()) {
        data.push_back(hex_double(v));
    }
    return {{"shape", t.shape()}, {"data", std::move(data)}};
}

Tensor tensor_from(const json& j, const std::string& what)
{
    const Shape shape = get<Shape>(j, "shape");
    const auto data = get<std::vector<std::string>>(j, "data");
    if (shape.empty() || shape_numel(shape) == 0) {
        throw ShapeError(what + ": empty shape");
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError(what + ": shape " + shape_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, file has " + std::to_string(data.size()));
    }
    std::vector<double> values;
    values.reserve(data.size());
    for (const auto& s : data) {
        values.push_back(parse_hex_double(s));
    }
    return Tensor(shape, std::move(values));
}

json tensors_json(const NamedTensors& ts)
{
    json out = json::object();
    for (const auto& [name, t] : ts) {
        out[name] = tensor_json(t);
    }
    return out;
}

NamedTensors tensors_from(const json& j, const std::string& what)
{
    if (!j.is_object()) {
        throw FormatError(what + ": expected an object of tensors");
    }
    NamedTensors out;
    for (const auto& [name, t] : j.items()) {
        out.emplace(name, tensor_from(t, what + "." + name));
    }
    return out;
}

json module_json(const ResidualModuleSpec& m)
{
    return {{"kind", std::string(module_kind_name(m.kind))}, {"in", m.in}, {"hidden", m.hidden}, {"out", m.out}};
}

ResidualModuleSpec module_from(const json& j)
{
    ResidualModuleSpec m;
    try {
        m.kind = parse_module_kind(get<std::string>(j, "kind"));
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    m.in = get<std::size_t>(j, "in");
    m.hidden = get<std::size_t>(j, "hidden");
    m.out = get<std::size_t>(j, "out");
    return m;
}

json block_json(const OdeBlockSpec& b)
{
    return {{"module", module_json(b.module)},
            {"epsilon", hex_double(b.epsilon)},
            {"horizon", hex_double(b.horizon())},
            {"basis", "piecewise_constant"},
            {"basis_count", b.weights.basis_count()},
            {"coefficients", tensors_json(b.weights.coefficients())}};
}

OdeBlockSpec block_from(const json& j, const std::string& what)
{
    if (get<std::string>(j, "basis") != "piecewise_constant") {
        throw FormatError(what + ": unsupported basis '" + get<std::string>(j, "basis") + "'");
    }
    const ResidualModuleSpec module = module_from(field(j, "module"));
    const auto M = get<std::size_t>(j, "basis_count");
    const double T = get_real(j, "horizon");
    NamedTensors coeffs = tensors_from(field(j, "coefficients"), what);
    try {
        OdeBlockSpec block{module, WeightFunction(module.param_group(), M, T, std::move(coeffs)),
                           get_real(j, "epsilon")};
        block.validate();
        return block;
    } catch (const ShapeError& e) {
        throw ShapeError(what + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ShapeError(what + ": " + e.what());
    }
}

json linear_json(const std::optional<Linear>& l)
{
    if (!l) {
        return nullptr;
    }
    return {{"W", tensor_json(l->weight)}, {"b", tensor_json(l->bias)}};
}

std::optional<Linear> linear_from(const json& j, const std::string& what)
{
    if (j.is_null()) {
        return std::nullopt;
    }
    Linear l{tensor_from(field(j, "W"), what + ".W"), tensor_from(field(j, "b"), what + ".b")};
    l.validate();
    return l;
}

json model_json(const ModelFile& file)
{
    const Provenance& p = file.provenance;
    json j;
    j["format"] = "contnet-model";
    j["version"] = kFormatVersion;
    j["provenance"] = {{"seed", p.seed},
                       {"train_scheme", p.train_scheme},
                       {"nt", p.nt},
                       {"epochs", p.epochs},
                       {"refine_at", p.refine_at}};
    if (file.is_pendulum()) {
        const PendulumModel& m = file.pendulum();
        j["kind"] = "pendulum";
        j["pendulum"] = {{"train_scheme", std::string(scheme_name(m.train_scheme))},
                         {"dt_data", hex_double(m.dt_data)},
                         {"g", hex_double(m.config.g)},
                         {"rho0", hex_double(m.config.rho0)},
                         {"v0", hex_double(m.config.v0)},
                         {"blocks", json::array({block_json(m.block)})}};
    } else {
        const ClassifierModel& m = file.classifier();
        j["kind"] = "classifier";
        json blocks = json::array();
        for (const auto& b : m.blocks) {
            blocks.push_back(block_json(b));
        }
        json stitches = json::array();
        for (const auto& s : m.stitches) {
            stitches.push_back({{"module", module_json(s.module)},
                                {"epsilon", hex_double(s.epsilon)},
                                {"P", tensor_json(s.downsample)},
                                {"theta", tensors_json(s.theta)}});
        }
        j["classifier"] = {{"lift", linear_json(m.lift)},
                           {"blocks", std::move(blocks)},
                           {"stitches", std::move(stitches)},
                           {"head", linear_json(m.head)}};
    }
    return j;
}

void check_header(const json& j, const char* format)
{
    if (!j.is_object()) {
        throw FormatError("top level is not an object");
    }
    if (!j.contains("version")) {
        throw VersionError("missing format version");
    }
    const json& v = j["version"];
    if (!v.is_number_integer() || v.get<long long>() != kFormatVersion) {
        throw VersionError("unsupported format version " + v.dump() + " (this build reads " +
                           std::to_string(kFormatVersion) + ")");
    }
    if (get<std::string>(j, "format") != format) {
        throw FormatError("not a " + std::string(format) + " file");
    }
}

ModelFile model_from(const json& j)
{
    check_header(j, "contnet-model");
    const json& pj = field(j, "provenance");
    Provenance prov{get<std::uint64_t>(pj, "seed"), get<std::string>(pj, "train_scheme"), get<std::size_t>(pj, "nt"),
                    get<std::size_t>(pj, "epochs"), get<std::vector<std::size_t>>(pj, "refine_at")};
    const auto kind = get<std::string>(j, "kind");
    if (kind == "pendulum") {
        const json& m = field(j, "pendulum");
        const json& blocks = field(m, "blocks");
        if (!blocks.is_array() || blocks.size() != 1) {
            throw ShapeError("pendulum model: expected exactly one block");
        }
        Scheme scheme;
        try {
            scheme = parse_scheme(get<std::string>(m, "train_scheme"));
        } catch (const std::invalid_argument& e) {
            throw FormatError(e.what());
        }
        PendulumConfig cfg{get_real(m, "g"), get_real(m, "rho0"), get_real(m, "v0")};
        PendulumModel model{block_from(blocks[0], "block0"), scheme, get_real(m, "dt_data"), cfg};
        return {std::move(model), std::move(prov)};
    }
    if (kind == "classifier") {
        const json& m = field(j, "classifier");
        std::vector<OdeBlockSpec> blocks;
        const json& bj = field(m, "blocks");
        for (std::size_t i = 0; i < bj.size(); ++i) {
            blocks.push_back(block_from(bj[i], "block" + std::to_string(i)));
        }
        std::vector<StitchSpec> stitches;
        const json& sj = field(m, "stitches");
        for (std::size_t i = 0; i < sj.size(); ++i) {
            const std::string what = "stitch" + std::to_string(i);
            StitchSpec s{module_from(field(sj[i], "module")), tensor_from(field(sj[i], "P"), what + ".P"),
                         tensors_from(field(sj[i], "theta"), what), get_real(sj[i], "epsilon")};
            try {
                s.validate();
            } catch (const std::invalid_argument& e) {
                throw ShapeError(what + ": " + e.what());
            }
            stitches.push_back(std::move(s));
        }
        try {
            ClassifierModel model = build_classifier(linear_from(field(m, "lift"), "lift"), std::move(blocks),
                                                     std::move(stitches), linear_from(field(m, "head"), "head"));
            return {std::move(model), std::move(prov)};
        } catch (const ShapeError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ShapeError(std::string("classifier: ") + e.what());
        }
    }
    throw FormatError("unknown model kind '" + kind + "'");
}

json parse(const std::string& text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw TruncatedError(std::string("file is truncated or not valid JSON: ") + e.what());
    }
}

json graph_json(const GraphDescription& g)
{
    json a = json::array();
    for (const auto& row : g.tab.a) {
        json r = json::array();
        for (double v : row) {
            r.push_back(hex_double(v));
        }
        a.push_back(std::move(r));
    }
    json b = json::array();
    json c = json::array();
    for (double v : g.tab.b) {
        b.push_back(hex_double(v));
    }
    for (double v : g.tab.c) {
        c.push_back(hex_double(v));
    }
    json ops = json::array();
    for (const auto& op : g.ops) {
        ops.push_back({{"step", op.step}, {"stage", op.stage}, {"time", hex_double(op.time)},
                       {"basis_index", op.basis_index}});
    }
    return {{"scheme", std::string(scheme_name(g.manifestation.scheme))},
            {"nt", g.manifestation.nt},
            {"horizon", hex_double(g.horizon)},
            {"dt", hex_double(g.dt)},
            {"epsilon", hex_double(g.epsilon)},
            {"basis_count", g.basis_count},
            {"order", g.tab.nominal_order},
            {"a", std::move(a)},
            {"b", std::move(b)},
            {"c", std::move(c)},
            {"ops", std::move(ops)}};
}

std::vector<double> reals(const json& arr, const char* what)
{
    if (!arr.is_array()) {
        throw FormatError(std::string(what) + " is not an array");
    }
    std::vector<double> out;
    for (const auto& v : arr) {
        if (!v.is_string()) {
            throw FormatError(std::string(what) + " holds a non-string value");
        }
        out.push_back(parse_hex_double(v.get<std::string>()));
    }
    return out;
}

GraphDescription graph_from(const json& j)
{
    GraphDescription g;
    try {
        g.manifestation.scheme = parse_scheme(get<std::string>(j, "scheme"));
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    g.manifestation.nt = get<std::size_t>(j, "nt");
    g.horizon = get_real(j, "horizon");
    g.dt = get_real(j, "dt");
    g.epsilon = get_real(j, "epsilon");
    g.basis_count = get<std::size_t>(j, "basis_count");
    g.tab.scheme = g.manifestation.scheme;
    g.tab.nominal_order = get<int>(j, "order");
    for (const auto& row : field(j, "a")) {
        g.tab.a.push_back(reals(row, "a"));
    }
    g.tab.b = reals(field(j, "b"), "b");
    g.tab.c = reals(field(j, "c"), "c");
    g.tab.stages = g.tab.b.size();
    if (g.tab.a.size() != g.tab.stages || g.tab.c.size() != g.tab.stages) {
        throw ShapeError("graph: tableau arrays disagree on the stage count");
    }
    for (const auto& op : field(j, "ops")) {
        g.ops.push_back({get<std::size_t>(op, "step"), get<std::size_t>(op, "stage"), get_real(op, "time"),
                         get<std::size_t>(op, "basis_index")});
    }
    if (g.ops.size() != g.tab.stages * g.manifestation.nt) {
        throw ShapeError("graph: " + std::to_string(g.ops.size()) + " stage operations for " +
                         std::to_string(g.manifestation.nt) + " steps of " + std::to_string(g.tab.stages) +
                         " stages");
    }
    return g;
}

std::string dump(const json& j) { return j.dump(1) + "\n"; }

} // namespace

std::vector<const OdeBlockSpec*> ModelFile::blocks() const
{
    std::vector<const OdeBlockSpec*> out;
    if (is_pendulum()) {
        out.push_back(&pendulum().block);
    } else {
        for (const auto& b : classifier().blocks) {
            out.push_back(&b);
        }
    }
    return out;
}

std::vector<OdeBlockSpec*> ModelFile::blocks()
{
    std::vector<OdeBlockSpec*> out;
    if (auto* p = std::get_if<PendulumModel>(&model)) {
        out.push_back(&p->block);
    } else {
        for (auto& b : std::get<ClassifierModel>(model).blocks) {
            out.push_back(&b);
        }
    }
    return out;
}

GraphFile make_graph_file(const ModelFile& model, const Manifestation& mani)
{
    GraphFile g{model, mani, {}};
    for (const OdeBlockSpec* b : model.blocks()) {
        g.graphs.push_back(manifest(*b, mani));
    }
    return g;
}

Tensor GraphFile::replay(const Tensor& x) const
{
    if (model.is_pendulum()) {
        if (graphs.size() != 1) {
            throw ShapeError("graph file: pendulum model needs exactly one graph");
        }
        const OdeBlockSpec& b = model.pendulum().block;
        return execute_graph(graphs.front(), b.module, b.weights, x);
    }
    return replay_classifier(model.classifier(), graphs, x);
}

Tensor evaluate(const ModelFile& model, const Manifestation& mani, const Tensor& x)
{
    if (model.is_pendulum()) {
        return odeblock_forward(model.pendulum().block, mani, x);
    }
    return classifier_forward(model.classifier(), mani, x);
}

std::string model_to_string(const ModelFile& model) { return dump(model_json(model)); }

ModelFile model_from_string(const std::string& text) { return model_from(parse(text)); }

void save_model(const ModelFile& model, const std::filesystem::path& path)
{
    write_atomic(path, model_to_string(model));
}

ModelFile load_model(const std::filesystem::path& path) { return model_from_string(read_file(path)); }

std::string graph_to_string(const GraphFile& graph)
{
    json j;
    j["format"] = "contnet-graph";
    j["version"] = kFormatVersion;
    j["model"] = model_json(graph.model);
    j["manifestation"] = {{"scheme", std::string(scheme_name(graph.manifestation.scheme))},
                          {"nt", graph.manifestation.nt}};
    json graphs = json::array();
    for (const auto& g : graph.graphs) {
        graphs.push_back(graph_json(g));
    }
    j["graphs"] = std::move(graphs);
    return dump(j);
}

GraphFile graph_from_string(const std::string& text)
{
    const json j = parse(text);
    check_header(j, "contnet-graph");
    GraphFile g{model_from(field(j, "model")), {}, {}};
    const json& mj = field(j, "manifestation");
    try {
        g.manifestation.scheme = parse_scheme(get<std::string>(mj, "scheme"));
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
    }
    g.manifestation.nt = get<std::size_t>(mj, "nt");
    for (const auto& gj : field(j, "graphs")) {
        g.graphs.push_back(graph_from(gj));
    }
    if (g.graphs.size() != g.model.blocks().size()) {
        throw ShapeError("graph file: " + std::to_string(g.graphs.size()) + " graphs for " +
                         std::to_string(g.model.blocks().size()) + " blocks");
    }
    return g;
}

void save_graph(const GraphFile& graph, const std::filesystem::path& path)
{
    write_atomic(path, graph_to_string(graph));
}

GraphFile load_graph(const std::filesystem::path& path) { return graph_from_string(read_file(path)); }

void write_atomic(const std::filesystem::path& path, const std::string& contents)
{
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw PersistenceError("cannot open " + tmp.string() + " for writing");
        }
        out << contents;
        out.flush();
        if (!out) {
            throw PersistenceError("write to " + tmp.string() + " failed");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw PersistenceError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw PersistenceError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ReportFormat report_format_for(const std::filesystem::path& path)
{
    return path.extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
}

namespace {

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string json_num(double v) { return std::isfinite(v) ? num(v) : "null"; }

std::string json_str(std::string_view s) { return "\"" + std::string(s) + "\""; }

/// Rows of pre-formatted cells under a header; CSV or a JSON array of objects.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> csv_rows;
    std::vector<std::vector<std::string>> json_rows;

    std::string render(ReportFormat format) const
    {
        std::string out;
        if (format == ReportFormat::csv) {
            for (std::size_t i = 0; i < header.size(); ++i) {
                out += (i ? "," : "") + header[i];
            }
            out += "\n";
            for (const auto& row : csv_rows) {
                for (std::size_t i = 0; i < row.size(); ++i) {
                    out += (i ? "," : "") + row[i];
                }
                out += "\n";
            }
            return out;
        }
        out = "[";
        for (std::size_t r = 0; r < json_rows.size(); ++r) {
            out += r ? ",\n {" : "\n {";
            for (std::size_t i = 0; i < header.size(); ++i) {
                out += (i ? ", " : "") + json_str(header[i]) + ": " + json_rows[r][i];
            }
            out += "}";
        }
        out += json_rows.empty() ? "]\n" : "\n]\n";
        return out;
    }
};

} // namespace

std::string report_to_string(const std::vector<ConvergenceTable>& tables, ReportFormat format)
{
    Table t{{"dt", "error", "scheme", "nt", "diverged"}, {}, {}};
    for (const auto& table : tables) {
        for (const auto& r : table.rows) {
            const std::string nt = std::to_string(r.nt);
            const std::string div = r.diverged ? "true" : "false";
            t.csv_rows.push_back({num(r.dt), num(r.error), table.scheme, nt, div});
            t.json_rows.push_back({json_num(r.dt), json_num(r.error), json_str(table.scheme), nt, div});
        }
    }
    return t.render(format);
}

std::string report_to_string(const ManifestationReport& report, ReportFormat format)
{
    Table t{{"train_scheme", "eval_scheme", "Nt", "E_test", "seconds"}, {}, {}};
    const std::string train(scheme_name(report.train_scheme));
    for (const auto& r : report.rows) {
        const std::string eval(scheme_name(r.scheme));
        const std::string nt = std::to_string(r.nt);
        t.csv_rows.push_back({train, eval, nt, num(r.e_test), num(r.seconds)});
        t.json_rows.push_back({json_str(train), json_str(eval), nt, json_num(r.e_test), json_num(r.seconds)});
    }
    return t.render(format);
}

std::string report_to_string(const std::vector<EpochMetrics>& metrics, ReportFormat format)
{
    Table t{{"epoch", "loss", "accuracy", "seconds", "nt", "param_count"}, {}, {}};
    for (const auto& m : metrics) {
        const std::string ep = std::to_string(m.epoch);
        const std::string nt = std::to_string(m.nt);
        const std::string pc = std::to_string(m.param_count);
        t.csv_rows.push_back({ep, num(m.loss), num(m.accuracy), num(m.seconds), nt, pc});
        t.json_rows.push_back({ep, json_num(m.loss), json_num(m.accuracy), json_num(m.seconds), nt, pc});
    }
    return t.render(format);
}

std::string report_to_string(const std::vector<RefinementEvent>& events, ReportFormat format)
{
    Table t{{"epoch", "nt_before", "nt_after", "params_before", "params_after", "loss_before", "loss_split",
             "loss_after"},
            {},
            {}};
    for (const auto& e : events) {
        std::vector<std::string> ints{std::to_string(e.epoch), std::to_string(e.nt_before),
                                      std::to_string(e.nt_after), std::to_string(e.params_before),
                                      std::to_string(e.params_after)};
        auto csv = ints;
        auto js = ints;
        for (double v : {e.loss_before, e.loss_split, e.loss_after}) {
            csv.push_back(num(v));
            js.push_back(json_num(v));
        }
        t.csv_rows.push_back(std::move(csv));
        t.json_rows.push_back(std::move(js));
    }
    return t.render(format);
}

} // namespace contnet
