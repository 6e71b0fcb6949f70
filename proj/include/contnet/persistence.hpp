#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "contnet/experiments.hpp"
#include "contnet/odeblock.hpp"
#include "contnet/training.hpp"

namespace contnet {

inline constexpr int kFormatVersion = 1;

struct PersistenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The file declares a format version this build does not read.
struct VersionError : PersistenceError {
    using PersistenceError::PersistenceError;
};

/// The file ends early or is not parseable.
struct TruncatedError : PersistenceError {
    using PersistenceError::PersistenceError;
};

/// Parseable, but a required field is missing or has the wrong type.
struct FormatError : PersistenceError {
    using PersistenceError::PersistenceError;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string train_scheme = "rk4";
    std::size_t nt = 1;
    std::size_t epochs = 0;
    std::vector<std::size_t> refine_at;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ModelFile {
    std::variant<PendulumModel, ClassifierModel> model;
    Provenance provenance;

    bool is_pendulum() const { return std::holds_alternative<PendulumModel>(model); }
    const PendulumModel& pendulum() const { return std::get<PendulumModel>(model); }
    const ClassifierModel& classifier() const { return std::get<ClassifierModel>(model); }
    /// Every OdeBlock in the model, in order.
    std::vector<const OdeBlockSpec*> blocks() const;
    std::vector<OdeBlockSpec*> blocks();
};

/// A model together with the graphs of one manifestation of it.
struct GraphFile {
    ModelFile model;
    Manifestation manifestation;
    std::vector<GraphDescription> graphs;

    /// Evaluates the stored graphs (pendulum: one step; classifier: logits).
    Tensor replay(const Tensor& x) const;
};

GraphFile make_graph_file(const ModelFile& model, const Manifestation& mani);

/// In-process evaluation that the graph replay must reproduce.
Tensor evaluate(const ModelFile& model, const Manifestation& mani, const Tensor& x);

std::string model_to_string(const ModelFile& model);
ModelFile model_from_string(const std::string& text);
void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

std::string graph_to_string(const GraphFile& graph);
GraphFile graph_from_string(const std::string& text);
void save_graph(const GraphFile& graph, const std::filesystem::path& path);
GraphFile load_graph(const std::filesystem::path& path);

enum class ReportFormat { csv, json };

ReportFormat report_format_for(const std::filesystem::path& path);

/// Columns dt, error, scheme, nt, diverged.
std::string report_to_string(const std::vector<ConvergenceTable>& tables, ReportFormat format);
/// Columns train_scheme, eval_scheme, Nt, E_test, seconds.
std::string report_to_string(const ManifestationReport& report, ReportFormat format);
/// Columns epoch, loss, accuracy, seconds, nt, param_count.
std::string report_to_string(const std::vector<EpochMetrics>& metrics, ReportFormat format);
/// Columns epoch, nt_before, nt_after, params_before, params_after, loss_before, loss_split, loss_after.
std::string report_to_string(const std::vector<RefinementEvent>& events, ReportFormat format);

/// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

template <class Report>
void export_report(const Report& report, const std::filesystem::path& path, ReportFormat format)
{
    write_atomic(path, report_to_string(report, format));
}

std::string hex_double(double v);
double parse_hex_double(const std::string& s);

} // namespace contnet
