#include "contnet/weight_basis.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace contnet {

void ParamGroupSpec::validate() const
{
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.name.empty() || !seen.insert(e.name).second) {
            throw std::invalid_argument("parameter group: duplicate or empty entry name '" + e.name + "'");
        }
        if (e.shape.empty() || std::find(e.shape.begin(), e.shape.end(), std::size_t{0}) != e.shape.end()) {
            throw ShapeError("parameter group: entry '" + e.name + "' has invalid shape " + shape_string(e.shape));
        }
    }
}

const ParamEntry& ParamGroupSpec::entry(const std::string& name) const
{
    for (const auto& e : entries) {
        if (e.name == name) {
            return e;
        }
    }
    throw std::out_of_range("parameter group: no entry named '" + name + "'");
}

std::size_t ParamGroupSpec::scalar_count() const
{
    std::size_t total = 0;
    for (const auto& e : entries) {
        total += shape_numel(e.shape);
    }
    return total;
}

std::size_t active_interval(std::size_t M, double T, double t)
{
    if (M == 0 || !(T > 0.0)) {
        throw DomainError("basis: need M >= 1 and T > 0");
    }
    const double slack = 1e-9 * T / static_cast<double>(M);
    if (!(t >= -slack && t <= T + slack)) {
        throw DomainError("basis: time " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
    }
    double position = t / T * static_cast<double>(M);
    const double nearest = std::round(position);
    if (std::abs(position - nearest) < 1e-9) {
        position = nearest;
    }
    const auto index = static_cast<std::size_t>(std::floor(std::max(position, 0.0)));
    return std::min(index, M - 1);
}

double basis_eval(std::size_t M, double T, std::size_t beta, double t)
{
    if (beta < 1 || beta > M) {
        throw DomainError("basis: index " + std::to_string(beta) + " outside [1, " + std::to_string(M) + "]");
    }
    return active_interval(M, T, t) + 1 == beta ? 1.0 : 0.0;
}

WeightFunction::WeightFunction(ParamGroupSpec group, std::size_t basis_count, double horizon,
                               NamedTensors coefficients)
    : group_(std::move(group)), basis_count_(basis_count), horizon_(horizon),
      coefficients_(std::move(coefficients))
{
    validate();
}

WeightFunction WeightFunction::zeros(ParamGroupSpec group, std::size_t basis_count, double horizon)
{
    NamedTensors blocks;
    for (const auto& e : group.entries) {
        Shape shape{basis_count};
        shape.insert(shape.end(), e.shape.begin(), e.shape.end());
        blocks.emplace(e.name, Tensor(shape));
    }
    return WeightFunction(std::move(group), basis_count, horizon, std::move(blocks));
}

const Tensor& WeightFunction::coefficient(const std::string& name) const
{
    auto it = coefficients_.find(name);
    if (it == coefficients_.end()) {
        throw std::out_of_range("weight function: no coefficients for '" + name + "'");
    }
    return it->second;
}

void WeightFunction::set_coefficients(NamedTensors coefficients)
{
    std::swap(coefficients_, coefficients);
    try {
        validate();
    } catch (...) {
        std::swap(coefficients_, coefficients);
        throw;
    }
}

void WeightFunction::validate() const
{
    group_.validate();
    if (basis_count_ < 1) {
        throw DomainError("weight function: need at least one basis function");
    }
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) {
        throw DomainError("weight function: horizon must be positive");
    }
    if (coefficients_.size() != group_.entries.size()) {
        throw ShapeError("weight function: " + std::to_string(coefficients_.size()) +
                         " coefficient blocks for " + std::to_string(group_.entries.size()) + " entries");
    }
    for (const auto& e : group_.entries) {
        auto it = coefficients_.find(e.name);
        if (it == coefficients_.end()) {
            throw ShapeError("weight function: missing coefficients for '" + e.name + "'");
        }
        Shape expected{basis_count_};
        expected.insert(expected.end(), e.shape.begin(), e.shape.end());
        if (it->second.shape() != expected) {
            throw ShapeError("weight function: coefficients for '" + e.name + "' have shape " +
                             shape_string(it->second.shape()) + ", expected " + shape_string(expected));
        }
    }
}

NamedTensors theta_eval(const WeightFunction& wf, double t)
{
    return theta_select(wf.coefficients(), active_interval(wf.basis_count(), wf.horizon(), t));
}

WeightFunction refine_split(const WeightFunction& wf)
{
    NamedTensors blocks;
    for (const auto& [name, block] : wf.coefficients()) {
        blocks.emplace(name, repeat_leading(block, 2));
    }
    return WeightFunction(wf.group(), 2 * wf.basis_count(), wf.horizon(), std::move(blocks));
}

Tensor average_leading(const Tensor& block, std::size_t factor)
{
    if (factor == 0 || block.dim(0) % factor != 0) {
        throw std::invalid_argument("coarsen: " + std::to_string(block.dim(0)) +
                                    " intervals are not divisible into groups of " + std::to_string(factor));
    }
    Shape shape = block.shape();
    shape[0] /= factor;
    const std::size_t stride = block.size() / block.dim(0);
    Tensor out(shape);
    for (std::size_t coarse = 0; coarse < shape[0]; ++coarse) {
        for (std::size_t i = 0; i < stride; ++i) {
            double total = 0.0;
            for (std::size_t r = 0; r < factor; ++r) {
                total += block[(coarse * factor + r) * stride + i];
            }
            out[coarse * stride + i] = total / static_cast<double>(factor);
        }
    }
    return out;
}

WeightFunction project_coarsen(const WeightFunction& wf, std::size_t basis_count)
{
    if (basis_count == 0 || wf.basis_count() % basis_count != 0) {
        throw std::invalid_argument("coarsen: M = " + std::to_string(wf.basis_count()) +
                                    " is not divisible by " + std::to_string(basis_count));
    }
    const std::size_t factor = wf.basis_count() / basis_count;
    NamedTensors blocks;
    for (const auto& [name, block] : wf.coefficients()) {
        blocks.emplace(name, average_leading(block, factor));
    }
    return WeightFunction(wf.group(), basis_count, wf.horizon(), std::move(blocks));
}

std::size_t param_count(const WeightFunction& wf) { return wf.basis_count() * wf.group().scalar_count(); }

} // namespace contnet
