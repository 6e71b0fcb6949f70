#include "contnet/integrators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace contnet {

std::string_view scheme_name(Scheme scheme)
{
    switch (scheme) {
    case Scheme::euler:
        return "euler";
    case Scheme::midpoint:
        return "midpoint";
    case Scheme::rk4_classic:
        return "rk4";
    case Scheme::rk4_38:
        return "rk4-38";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name)
{
    for (Scheme s : kAllSchemes) {
        if (scheme_name(s) == name) {
            return s;
        }
    }
    if (name == "rk4-classic") {
        return Scheme::rk4_classic;
    }
    throw std::invalid_argument("unknown integrator scheme '" + std::string(name) +
                                "' (expected euler, midpoint, rk4, rk4-38)");
}

ButcherTableau tableau(Scheme scheme)
{
    switch (scheme) {
    case Scheme::euler:
        return {scheme, 1, {{0.0}}, {1.0}, {0.0}, 1};
    case Scheme::midpoint:
        return {scheme, 2, {{0.0, 0.0}, {0.5, 0.0}}, {0.0, 1.0}, {0.0, 0.5}, 2};
    case Scheme::rk4_classic:
        return {scheme,
                4,
                {{0.0, 0.0, 0.0, 0.0}, {0.5, 0.0, 0.0, 0.0}, {0.0, 0.5, 0.0, 0.0}, {0.0, 0.0, 1.0, 0.0}},
                {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0},
                {0.0, 0.5, 0.5, 1.0},
                4};
    case Scheme::rk4_38:
        return {scheme,
                4,
                {{0.0, 0.0, 0.0, 0.0},
                 {1.0 / 3.0, 0.0, 0.0, 0.0},
                 {-1.0 / 3.0, 1.0, 0.0, 0.0},
                 {1.0, -1.0, 1.0, 0.0}},
                {1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0},
                {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0},
                4};
    }
    throw std::invalid_argument("tableau: unknown scheme");
}

void TimeGrid::validate() const
{
    if (nt < 1) {
        throw DomainError("time grid: need at least one step");
    }
    if (!(T > 0.0) || !std::isfinite(T)) {
        throw DomainError("time grid: horizon must be positive, got " + std::to_string(T));
    }
}

Trajectory solve(const ButcherTableau& tab, const TensorRhs& f, const Tensor& x0, const TimeGrid& grid)
{
    grid.validate();
    Trajectory traj;
    traj.times.reserve(grid.nt + 1);
    traj.states.reserve(grid.nt + 1);
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    const double dt = grid.dt();
    for (std::size_t k = 0; k < grid.nt; ++k) {
        const double t = grid.node(k);
        traj.states.push_back(step<Tensor>(tab, f, traj.states.back(), t, dt));
        traj.times.push_back(grid.node(k + 1));
    }
    return traj;
}

double global_error(const Trajectory& traj, const std::function<Tensor(double)>& oracle)
{
    if (traj.states.empty()) {
        throw std::invalid_argument("global_error: empty trajectory");
    }
    return l2_norm(sub(traj.states.back(), oracle(traj.times.back())));
}

OrderFit order_fit(std::span<const std::pair<double, double>> samples, double state_scale)
{
    if (samples.size() < 3) {
        throw std::invalid_argument("order_fit: need at least 3 samples, got " + std::to_string(samples.size()));
    }
    const double floor = 1e2 * std::numeric_limits<double>::epsilon() * state_scale;
    OrderFit fit;
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& [dt, err] : samples) {
        if (!(dt > 0.0)) {
            throw DomainError("order_fit: time step must be positive, got " + std::to_string(dt));
        }
        if (!(err > floor) || !std::isfinite(err)) {
            fit.warnings.push_back("excluded sample dt=" + std::to_string(dt) + " with error " +
                                   std::to_string(err) + " (at or below roundoff floor)");
            continue;
        }
        const double x = std::log(dt);
        const double y = std::log(err);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++fit.used;
    }
    if (fit.used < 3) {
        throw std::invalid_argument("order_fit: only " + std::to_string(fit.used) +
                                    " usable samples remain after excluding roundoff-level errors");
    }
    const double n = static_cast<double>(fit.used);
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) {
        throw DomainError("order_fit: all samples share one time step");
    }
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    return fit;
}

} // namespace contnet
