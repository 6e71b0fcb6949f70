#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "contnet/elliptic.hpp"
#include "contnet/integrators.hpp"

using namespace contnet;

namespace {

Tensor pendulum_x0(const PendulumConfig& cfg) { return to_tensor(pendulum_exact(0.0, cfg)); }

double pendulum_error(Scheme s, double T, double dt)
{
    const PendulumConfig cfg;
    const std::size_t nt = static_cast<std::size_t>(std::llround(T / dt));
    const Trajectory traj = solve(
        tableau(s), [&](const Tensor& x, double) { return true_rhs(x, cfg); }, pendulum_x0(cfg), TimeGrid{T, nt});
    return global_error(traj, [&](double t) { return to_tensor(pendulum_exact(t, cfg)); });
}

OrderFit pendulum_fit(Scheme s, double T, int levels)
{
    std::vector<std::pair<double, double>> samples;
    for (int k = 0; k < levels; ++k) {
        const double dt = 0.1 * std::ldexp(1.0, -k);
        samples.emplace_back(dt, pendulum_error(s, T, dt));
    }
    return order_fit(samples, 3.0);
}

} // namespace

TEST_CASE("tableau coefficients")
{
    const ButcherTableau e = tableau(Scheme::euler);
    CHECK(e.stages == 1);
    CHECK(e.b == std::vector<double>{1.0});
    CHECK(e.nominal_order == 1);
    const ButcherTableau r = tableau(Scheme::rk4_classic);
    CHECK(r.b == std::vector<double>{1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6});
    CHECK(r.nominal_order == 4);
    const ButcherTableau t = tableau(Scheme::rk4_38);
    CHECK(t.b == std::vector<double>{1.0 / 8, 3.0 / 8, 3.0 / 8, 1.0 / 8});
    CHECK(t.nominal_order == 4);
    CHECK(tableau(Scheme::midpoint).nominal_order == 2);
}

TEST_CASE("tableaus are explicit and consistent")
{
    for (Scheme s : kAllSchemes) {
        const ButcherTableau tab = tableau(s);
        CAPTURE(scheme_name(s));
        REQUIRE(tab.a.size() == tab.stages);
        double bsum = 0.0;
        for (std::size_t i = 0; i < tab.stages; ++i) {
            bsum += tab.b[i];
            double row = 0.0;
            for (std::size_t j = 0; j < tab.a[i].size(); ++j) {
                if (j >= i) {
                    CHECK(tab.a[i][j] == 0.0);
                }
                row += tab.a[i][j];
            }
            CHECK(std::abs(row - tab.c[i]) <= 1e-14);
        }
        CHECK(std::abs(bsum - 1.0) <= 1e-14);
    }
}

TEST_CASE("order conditions")
{
    for (Scheme s : kAllSchemes) {
        const ButcherTableau tab = tableau(s);
        CAPTURE(scheme_name(s));
        const std::size_t n = tab.stages;
        auto a = [&](std::size_t i, std::size_t j) { return j < tab.a[i].size() ? tab.a[i][j] : 0.0; };
        auto sum = [&](auto term) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += term(i);
            }
            return acc;
        };
        auto ac = [&](std::size_t i, int p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += a(i, j) * std::pow(tab.c[j], p);
            }
            return acc;
        };
        const int order = tab.nominal_order;
        if (order >= 2) {
            CHECK(std::abs(sum([&](std::size_t i) { return tab.b[i] * tab.c[i]; }) - 0.5) <= 1e-14);
        }
        if (order >= 4) {
            CHECK(std::abs(sum([&](std::size_t i) { return tab.b[i] * tab.c[i] * tab.c[i]; }) - 1.0 / 3) <= 1e-14);
            CHECK(std::abs(sum([&](std::size_t i) { return tab.b[i] * std::pow(tab.c[i], 3); }) - 0.25) <= 1e-14);
            CHECK(std::abs(sum([&](std::size_t i) { return tab.b[i] * ac(i, 1); }) - 1.0 / 6) <= 1e-14);
            CHECK(std::abs(sum([&](std::size_t i) { return tab.b[i] * tab.c[i] * ac(i, 1); }) - 1.0 / 8) <= 1e-14);
            CHECK(std::abs(sum([&](std::size_t i) { return tab.b[i] * ac(i, 2); }) - 1.0 / 12) <= 1e-14);
            const double aac = sum([&](std::size_t i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    acc += a(i, j) * ac(j, 1);
                }
                return tab.b[i] * acc;
            });
            CHECK(std::abs(aac - 1.0 / 24) <= 1e-14);
        }
    }
}

TEST_CASE("single steps on x' = x")
{
    auto f = [](const Tensor& x, double) { return x; };
    const Tensor x = Tensor::vector({1.0});
    CHECK(step<Tensor>(tableau(Scheme::euler), f, x, 0.0, 0.1)[0] == doctest::Approx(1.1).epsilon(1e-15));
    CHECK(step<Tensor>(tableau(Scheme::midpoint), f, x, 0.0, 0.1)[0] == doctest::Approx(1.105).epsilon(1e-15));
    const double h = 0.1;
    const double taylor4 = 1.0 + h + h * h / 2 + h * h * h / 6 + h * h * h * h / 24;
    CHECK(std::abs(step<Tensor>(tableau(Scheme::rk4_classic), f, x, 0.0, h)[0] - taylor4) <= 1e-15);
    CHECK(std::abs(step<Tensor>(tableau(Scheme::rk4_38), f, x, 0.0, h)[0] - taylor4) <= 1e-15);
}

TEST_CASE("Euler step is the residual unit")
{
    const PendulumConfig cfg;
    auto f = [&](const Tensor& x, double) { return true_rhs(x, cfg); };
    const Tensor x = Tensor::vector({1.1, -0.3});
    const double dt = 0.37;
    CHECK(step<Tensor>(tableau(Scheme::euler), f, x, 0.0, dt) == x + dt * f(x, 0.0));
}

TEST_CASE("non-finite stages are reported by index")
{
    auto f = [](const Tensor& x, double t) {
        return t > 0.0 ? Tensor::vector({std::numeric_limits<double>::infinity()}) : x;
    };
    try {
        (void)step<Tensor>(tableau(Scheme::midpoint), f, Tensor::vector({1.0}), 0.0, 0.1);
        FAIL("no overflow reported");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("stage 2") != std::string::npos);
    }
}

TEST_CASE("solve")
{
    const ButcherTableau tab = tableau(Scheme::rk4_classic);
    auto f = [](const Tensor& x, double t) { return scale(x, std::cos(t)); };
    const Tensor x0 = Tensor::vector({0.5, 2.0});
    const Trajectory one = solve(tab, f, x0, TimeGrid{0.3, 1});
    REQUIRE(one.states.size() == 2);
    CHECK(one.states[1] == step<Tensor>(tab, f, x0, 0.0, 0.3));
    CHECK(one.times[1] == 0.3);

    const Trajectory still = solve(
        tab, [](const Tensor& x, double) { return Tensor(x.shape()); }, x0, TimeGrid{1.0, 8});
    for (const auto& s : still.states) {
        CHECK(s == x0);
    }
    CHECK(still.times.size() == 9);
    for (std::size_t k = 1; k < still.times.size(); ++k) {
        CHECK(still.times[k] > still.times[k - 1]);
    }
}

TEST_CASE("Euler pumps energy into the pendulum")
{
    const PendulumConfig cfg;
    const Trajectory traj = solve(
        tableau(Scheme::euler), [&](const Tensor& x, double) { return true_rhs(x, cfg); }, pendulum_x0(cfg),
        TimeGrid{10.0, 50});
    auto energy = [&](const Tensor& x) { return pendulum_energy(PendulumState{x[0], x[1]}, cfg); };
    CHECK(energy(traj.states.back()) > energy(traj.states.front()) + 1.0);
}

TEST_CASE("global error")
{
    const PendulumConfig cfg;
    const Trajectory traj = solve(
        tableau(Scheme::rk4_classic), [&](const Tensor& x, double) { return true_rhs(x, cfg); }, pendulum_x0(cfg),
        TimeGrid{1.0, 10});
    const Tensor end = traj.states.back();
    CHECK(global_error(traj, [&](double) { return end; }) == 0.0);

    const double e1 = pendulum_error(Scheme::euler, 1.0, 0.01);
    const double e2 = pendulum_error(Scheme::euler, 1.0, 0.005);
    CHECK(e1 / e2 > 1.8);
    CHECK(e1 / e2 < 2.2);
    const double r1 = pendulum_error(Scheme::rk4_classic, 1.0, 0.05);
    const double r2 = pendulum_error(Scheme::rk4_classic, 1.0, 0.025);
    CHECK(r1 / r2 > 13.0);
    CHECK(r1 / r2 < 19.0);
}

TEST_CASE("order fit on an exact power law")
{
    std::vector<std::pair<double, double>> samples;
    for (double dt : {0.1, 0.05, 0.025, 0.0125}) {
        samples.emplace_back(dt, 3.0 * dt);
    }
    const OrderFit f = order_fit(samples);
    CHECK(std::abs(f.slope - 1.0) <= 1e-12);
    CHECK(std::abs(f.intercept - std::log(3.0)) <= 1e-12);
    CHECK(f.used == 4);
}

TEST_CASE("order fit drops roundoff samples and needs three")
{
    std::vector<std::pair<double, double>> samples{{0.1, 1e-2}, {0.05, 2.5e-3}, {0.025, 6.25e-4}, {0.01, 0.0}};
    const OrderFit f = order_fit(samples);
    CHECK(f.used == 3);
    CHECK(f.warnings.size() == 1);
    CHECK(std::abs(f.slope - 2.0) <= 1e-12);
    samples.pop_back();
    samples.pop_back();
    CHECK_THROWS(order_fit(samples));
}

TEST_CASE("measured order on the pendulum over T = 1")
{
    const OrderFit e = pendulum_fit(Scheme::euler, 1.0, 6);
    CHECK(e.slope >= 0.85);
    CHECK(e.slope <= 1.15);
    const OrderFit m = pendulum_fit(Scheme::midpoint, 1.0, 6);
    CHECK(m.slope >= 1.8);
    CHECK(m.slope <= 2.2);
    for (Scheme s : {Scheme::rk4_classic, Scheme::rk4_38}) {
        const OrderFit r = pendulum_fit(s, 1.0, 6);
        CAPTURE(scheme_name(s));
        CHECK(r.slope >= 3.8);
        CHECK(r.slope <= 4.2);
    }
}

TEST_CASE("measured order over dt down to 1e-3")
{
    for (Scheme s : {Scheme::euler, Scheme::midpoint}) {
        const OrderFit f = pendulum_fit(s, 1.0, 7);
        CAPTURE(scheme_name(s));
        CHECK(std::abs(f.slope - tableau(s).nominal_order) <= 0.2);
    }
}

TEST_CASE("the two RK4 variants converge to each other")
{
    const PendulumConfig cfg;
    auto f = [&](const Tensor& x, double) { return true_rhs(x, cfg); };
    std::vector<std::pair<double, double>> samples;
    for (int k = 2; k < 7; ++k) {
        const std::size_t nt = 10u << k;
        const TimeGrid grid{1.0, nt};
        const Tensor a = solve(tableau(Scheme::rk4_classic), f, pendulum_x0(cfg), grid).states.back();
        const Tensor b = solve(tableau(Scheme::rk4_38), f, pendulum_x0(cfg), grid).states.back();
        samples.emplace_back(grid.dt(), l2_norm(a - b));
    }
    CHECK(order_fit(samples, 3.0).slope >= 3.8);
}

TEST_CASE("scheme names")
{
    for (Scheme s : kAllSchemes) {
        CHECK(parse_scheme(scheme_name(s)) == s);
    }
    CHECK(parse_scheme("rk4-classic") == Scheme::rk4_classic);
    CHECK_THROWS(parse_scheme("heun"));
}
