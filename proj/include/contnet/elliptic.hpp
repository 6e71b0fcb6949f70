#pragma once

#include <numbers>

#include "contnet/tensor.hpp"

namespace contnet {

/// Nonlinear pendulum rho'' = g sin(rho), with rho = 0 at the lowest point.
struct PendulumConfig {
    double g = -9.81;
    double rho0 = 3.0 * std::numbers::pi / 4.0;
    double v0 = 0.0;

    /// Throws DomainError unless g < 0 and |rho0| < pi.
    void validate() const;
    /// sqrt(|g|).
    double natural_frequency() const;
    /// sin^2(rho0 / 2), the elliptic parameter of the closed-form solution.
    double elliptic_parameter() const;
    /// 4 K(m) / omega0.
    double period() const;
};

struct AgmResult {
    double mean = 0.0;
    int iterations = 0;
};

/// Arithmetic-geometric mean of a, b > 0, iterated to a fixed point.
AgmResult arithmetic_geometric_mean(double a, double b);

/// Complete elliptic integral of the first kind K(m) = pi / (2 AGM(1, sqrt(1-m))).
/// Requires 0 <= m < 1.
double complete_elliptic_k(double m);

struct JacobiTriple {
    double sn = 0.0;
    double cn = 1.0;
    double dn = 1.0;
};

/// sn, cn, dn of (u | m) by descending Landen transformation. 0 <= m < 1.
JacobiTriple jacobi_sn_cn_dn(double u, double m);

struct PendulumState {
    double rho = 0.0;
    double v = 0.0;
};

/// Closed-form trajectory from a stationary start:
///   rho(t) = 2 asin(k sn(K(m) - omega0 t; m)),  k = sin(rho0/2), m = k^2,
/// with v(t) its analytic time derivative. Requires cfg.v0 == 0.
PendulumState pendulum_exact(double t, const PendulumConfig& cfg);

/// (rho, v) -> (v, g sin rho).
PendulumState true_rhs(PendulumState state, const PendulumConfig& cfg);

/// true_rhs applied column-wise to a [2] or [2, B] state tensor.
Tensor true_rhs(const Tensor& state, const PendulumConfig& cfg);

Tensor to_tensor(PendulumState state);

/// v^2 / 2 + g cos(rho) for unit mass and length.
double pendulum_energy(PendulumState state, const PendulumConfig& cfg);

} // namespace contnet
