#include "contnet/elliptic.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace contnet {

namespace {

constexpr int kMaxAgmIterations = 64;
constexpr int kMaxLandenDepth = 64;
constexpr double kLandenModulusTolerance = 1e-14;

void require_parameter(double m, const char* where)
{
    if (!(m >= 0.0 && m < 1.0)) {
        throw DomainError(std::string(where) + ": parameter m = " + std::to_string(m) +
                          " outside [0, 1)");
    }
}

} // namespace

void PendulumConfig::validate() const
{
    if (!(g < 0.0) || !std::isfinite(g)) {
        throw DomainError("pendulum: g must be negative, got " + std::to_string(g));
    }
    if (!(std::abs(rho0) < std::numbers::pi)) {
        throw DomainError("pendulum: |rho0| must be below pi for the oscillating regime, got " +
                          std::to_string(rho0));
    }
}

double PendulumConfig::natural_frequency() const { return std::sqrt(-g); }

double PendulumConfig::elliptic_parameter() const
{
    const double k = std::sin(rho0 / 2.0);
    return k * k;
}

double PendulumConfig::period() const
{
    validate();
    return 4.0 * complete_elliptic_k(elliptic_parameter()) / natural_frequency();
}

AgmResult arithmetic_geometric_mean(double a, double b)
{
    if (!(a > 0.0 && b > 0.0)) {
        throw DomainError("agm: arguments must be positive");
    }
    AgmResult result;
    while (result.iterations < kMaxAgmIterations) {
        if (std::abs(a - b) <= 2.0 * std::numeric_limits<double>::epsilon() * a) {
            break;
        }
        const double next_a = 0.5 * (a + b);
        b = std::sqrt(a * b);
        a = next_a;
        ++result.iterations;
    }
    result.mean = 0.5 * (a + b);
    return result;
}

double complete_elliptic_k(double m)
{
    require_parameter(m, "complete_elliptic_k");
    if (m == 0.0) {
        return std::numbers::pi / 2.0;
    }
    return std::numbers::pi / (2.0 * arithmetic_geometric_mean(1.0, std::sqrt(1.0 - m)).mean);
}

JacobiTriple jacobi_sn_cn_dn(double u, double m)
{
    require_parameter(m, "jacobi_sn_cn_dn");
    if (m == 0.0) {
        return {std::sin(u), std::cos(u), 1.0};
    }

    // Descend: a_{n+1} = (a_n + b_n)/2, b_{n+1} = sqrt(a_n b_n), c_{n+1} = (a_n - b_n)/2.
    std::array<double, kMaxLandenDepth + 1> a{};
    std::array<double, kMaxLandenDepth + 1> c{};
    a[0] = 1.0;
    double b = std::sqrt(1.0 - m);
    c[0] = std::sqrt(m);
    int depth = 0;
    while (std::abs(c[depth]) >= kLandenModulusTolerance && depth < kMaxLandenDepth) {
        a[depth + 1] = 0.5 * (a[depth] + b);
        c[depth + 1] = 0.5 * (a[depth] - b);
        b = std::sqrt(a[depth] * b);
        ++depth;
    }

    // Ascend back through the amplitudes.
    double phi = std::ldexp(a[depth] * u, depth);
    double phi_prev = phi;
    for (int n = depth; n > 0; --n) {
        phi_prev = phi;
        phi = 0.5 * (phi + std::asin(c[n] * std::sin(phi) / a[n]));
    }
    const double sn = std::sin(phi);
    const double cn = std::cos(phi);
    const double dn = cn / std::cos(phi_prev - phi);
    return {sn, cn, dn};
}

PendulumState pendulum_exact(double t, const PendulumConfig& cfg)
{
    cfg.validate();
    if (cfg.v0 != 0.0) {
        throw DomainError("pendulum_exact: unsupported configuration, closed form requires v0 = 0");
    }
    const double k = std::sin(cfg.rho0 / 2.0);
    const double m = k * k;
    const double omega = cfg.natural_frequency();
    const double u = complete_elliptic_k(m) - omega * t;
    const JacobiTriple f = jacobi_sn_cn_dn(u, m);
    const double arg = k * f.sn;
    PendulumState state;
    state.rho = 2.0 * std::asin(arg);
    // d/dt asin(k sn(u)) with du/dt = -omega and d sn/du = cn dn.
    state.v = 2.0 * k * f.cn * f.dn * (-omega) / std::sqrt(1.0 - arg * arg);
    return state;
}

PendulumState true_rhs(PendulumState state, const PendulumConfig& cfg)
{
    return {state.v, cfg.g * std::sin(state.rho)};
}

Tensor true_rhs(const Tensor& state, const PendulumConfig& cfg)
{
    if (state.dim(0) != 2 || state.rank() > 2) {
        throw ShapeError("true_rhs: expected state of shape [2] or [2,B], got " + shape_string(state.shape()));
    }
    const std::size_t cols = state.size() / 2;
    Tensor out(state.shape());
    for (std::size_t j = 0; j < cols; ++j) {
        out[j] = state[cols + j];
        out[cols + j] = cfg.g * std::sin(state[j]);
    }
    return out;
}

Tensor to_tensor(PendulumState state) { return Tensor::vector({state.rho, state.v}); }

double pendulum_energy(PendulumState state, const PendulumConfig& cfg)
{
    return 0.5 * state.v * state.v + cfg.g * std::cos(state.rho);
}

} // namespace contnet
