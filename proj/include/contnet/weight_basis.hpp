#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "contnet/tensor.hpp"

namespace contnet {

template <class V>
using Named = std::map<std::string, V>;

using NamedTensors = Named<Tensor>;

struct ParamEntry {
    std::string name;
    Shape shape;
};

/// The tensors a residual module consumes, e.g. {A, W, b} or {A, W, b, s}.
struct ParamGroupSpec {
    std::vector<ParamEntry> entries;

    void validate() const;
    const ParamEntry& entry(const std::string& name) const;
    /// Number of scalars in one full set of weights.
    std::size_t scalar_count() const;

    friend bool operator==(const ParamGroupSpec&, const ParamGroupSpec&) = default;
};

inline bool operator==(const ParamEntry& a, const ParamEntry& b) { return a.name == b.name && a.shape == b.shape; }

/// 0-based index of the piecewise-constant interval containing t. Intervals
/// are [(beta-1) T/M, beta T/M), the last one closed at T. Stage times that
/// land within 1e-9 (relative to an interval width) of a boundary are
/// snapped onto it, so t_k + c dt computed in floating point resolves as the
/// exact rational time would.
std::size_t active_interval(std::size_t M, double T, double t);

/// Indicator basis phi^beta(t), beta in [1, M].
double basis_eval(std::size_t M, double T, std::size_t beta, double t);

/// theta(t; coefficients) = sum_beta phi^beta(t) coefficients^beta, with one
/// coefficient block of shape [M, ...entry shape] per named entry.
class WeightFunction {
public:
    WeightFunction(ParamGroupSpec group, std::size_t basis_count, double horizon, NamedTensors coefficients);

    static WeightFunction zeros(ParamGroupSpec group, std::size_t basis_count, double horizon);

    const ParamGroupSpec& group() const noexcept { return group_; }
    std::size_t basis_count() const noexcept { return basis_count_; }
    double horizon() const noexcept { return horizon_; }
    const NamedTensors& coefficients() const noexcept { return coefficients_; }
    const Tensor& coefficient(const std::string& name) const;

    /// Replaces the coefficient blocks; shapes must stay the same.
    void set_coefficients(NamedTensors coefficients);

    friend bool operator==(const WeightFunction&, const WeightFunction&) = default;

private:
    void validate() const;

    ParamGroupSpec group_;
    std::size_t basis_count_;
    double horizon_;
    NamedTensors coefficients_;
};

/// Coefficient slice of the interval active at t, one tensor per entry.
NamedTensors theta_eval(const WeightFunction& wf, double t);

/// Picks interval `index` (0-based) out of every coefficient block. Works on
/// Tensors and on tape Vars, where gradient flows back to that slice only.
template <class V>
Named<V> theta_select(const Named<V>& coefficients, std::size_t index)
{
    Named<V> theta;
    for (const auto& [name, block] : coefficients) {
        theta.emplace(name, select(block, index));
    }
    return theta;
}

/// M -> 2M by copying every slice into two adjacent slices.
WeightFunction refine_split(const WeightFunction& wf);

/// L2 projection onto M_new equal intervals: averages the M / M_new fine
/// slices under each coarse interval. M must be divisible by M_new.
WeightFunction project_coarsen(const WeightFunction& wf, std::size_t basis_count);

/// Averages groups of `factor` consecutive leading-axis slices.
Tensor average_leading(const Tensor& block, std::size_t factor);

std::size_t param_count(const WeightFunction& wf);

} // namespace contnet
