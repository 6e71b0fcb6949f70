#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "contnet/tensor.hpp"

namespace contnet {

enum class Scheme { euler, midpoint, rk4_classic, rk4_38 };

inline constexpr Scheme kAllSchemes[] = {Scheme::euler, Scheme::midpoint, Scheme::rk4_classic, Scheme::rk4_38};

/// "euler", "midpoint", "rk4", "rk4-38".
std::string_view scheme_name(Scheme scheme);
/// Inverse of scheme_name; throws std::invalid_argument on unknown names.
Scheme parse_scheme(std::string_view name);

/// Coefficients of an explicit Runge-Kutta scheme. `a` is stored as full
/// rows, strictly lower triangular.
struct ButcherTableau {
    Scheme scheme = Scheme::euler;
    std::size_t stages = 1;
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    std::vector<double> c;
    int nominal_order = 1;
};

ButcherTableau tableau(Scheme scheme);

/// Uniform nodes t_k = k T / nt, k = 0..nt.
struct TimeGrid {
    double T = 1.0;
    std::size_t nt = 1;

    void validate() const;
    double dt() const { return T / static_cast<double>(nt); }
    double node(std::size_t k) const { return static_cast<double>(k) * dt(); }
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Tensor> states;
};

/// Input of stage i: x + dt * sum_j a[i][j] y_j. Zero coefficients are
/// skipped, so a stage with an empty row receives x itself.
template <class State>
State stage_input(const State& x, double dt, std::span<const double> a_row, std::span<const State> ys)
{
    std::optional<State> acc;
    for (std::size_t j = 0; j < ys.size() && j < a_row.size(); ++j) {
        if (a_row[j] == 0.0) {
            continue;
        }
        State term = a_row[j] * ys[j];
        acc = acc ? State(*acc + term) : std::move(term);
    }
    if (!acc) {
        return x;
    }
    return x + dt * *acc;
}

/// x + dt * sum_i b[i] y_i, skipping zero weights.
template <class State>
State combine_stages(const State& x, double dt, std::span<const double> b, std::span<const State> ys)
{
    return stage_input(x, dt, b, ys);
}

/// One explicit Runge-Kutta step of x' = f(x, t):
///   y_i = f(x + dt sum_j a[i][j] y_j, t + c[i] dt),  x_next = x + dt sum_i b[i] y_i.
/// State is Tensor or Var; f is invoked once per stage, in stage order.
template <class State, class Rhs>
State step(const ButcherTableau& tab, Rhs&& f, const State& x, double t, double dt)
{
    std::vector<State> ys;
    ys.reserve(tab.stages);
    for (std::size_t i = 0; i < tab.stages; ++i) {
        State input = stage_input<State>(x, dt, tab.a[i], std::span<const State>(ys.data(), i));
        State y = f(input, t + tab.c[i] * dt);
        if (!all_finite(y)) {
            throw NumericError(std::string(scheme_name(tab.scheme)) + " step: non-finite value in stage " +
                               std::to_string(i + 1));
        }
        ys.push_back(std::move(y));
    }
    return combine_stages<State>(x, dt, tab.b, ys);
}

using TensorRhs = std::function<Tensor(const Tensor&, double)>;

/// Trajectory of nt + 1 states starting at x0.
Trajectory solve(const ButcherTableau& tab, const TensorRhs& f, const Tensor& x0, const TimeGrid& grid);

/// Euclidean norm of (final state - oracle(final time)).
double global_error(const Trajectory& traj, const std::function<Tensor(double)>& oracle);

struct OrderFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t used = 0;
    std::vector<std::string> warnings;
};

/// Least-squares line through (log dt, log E). Samples with E below the
/// roundoff floor 1e2 * eps * state_scale (including E <= 0) are excluded
/// with a warning; fewer than three remaining samples is an error.
OrderFit order_fit(std::span<const std::pair<double, double>> samples, double state_scale = 1.0);

} // namespace contnet
