#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "contnet/autodiff.hpp"
#include "contnet/weight_basis.hpp"
#include "gen.hpp"

using namespace contnet;

namespace {

ParamGroupSpec scalar_group() { return ParamGroupSpec{{{"c", {1}}}}; }

ParamGroupSpec mixed_group() { return ParamGroupSpec{{{"A", {2, 3}}, {"b", {3}}, {"s", {1}}}}; }

WeightFunction scalar_wf(std::vector<double> values, double T = 1.0)
{
    const std::size_t M = values.size();
    return WeightFunction(scalar_group(), M, T, {{"c", Tensor({M, 1}, std::move(values))}});
}

} // namespace

TEST_CASE("basis_eval examples")
{
    CHECK(basis_eval(4, 1.0, 2, 0.3) == 1.0);
    CHECK(basis_eval(4, 1.0, 4, 1.0) == 1.0);
    CHECK(basis_eval(4, 1.0, 2, 0.5) == 0.0);
    CHECK(basis_eval(4, 1.0, 3, 0.5) == 1.0);
    CHECK(basis_eval(4, 1.0, 1, 0.0) == 1.0);
}

TEST_CASE("basis_eval domain errors")
{
    CHECK_THROWS_AS(basis_eval(4, 1.0, 1, -0.01), DomainError);
    CHECK_THROWS_AS(basis_eval(4, 1.0, 1, 1.01), DomainError);
    CHECK_THROWS_AS(basis_eval(4, 1.0, 0, 0.5), DomainError);
    CHECK(basis_eval(4, 1.0, 4, 1.0 + 1e-15) == 1.0);
    CHECK(basis_eval(4, 1.0, 1, -1e-15) == 1.0);
    CHECK_THROWS_AS(basis_eval(4, 1.0, 5, 0.5), DomainError);
}

TEST_CASE("stage times within roundoff of a boundary snap onto it")
{
    CHECK(active_interval(10, 1.0, 0.1 + 0.2) == 3);
    CHECK(active_interval(3, 1.0, 1.0 / 3.0 * 2.0) == 2);
    CHECK(active_interval(8, 1.0, 0.125 * 3 - 1e-13) == 3);
    CHECK(active_interval(8, 1.0, 0.125 * 3 - 1e-6) == 2);
}

TEST_CASE("partition of unity")
{
    testgen::Gen gen(17);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t M = gen.index(1, 40);
        const double T = gen.uniform(0.1, 5.0);
        double t = gen.uniform(0.0, T);
        if (trial % 5 == 0) {
            t = T * static_cast<double>(gen.index(0, M)) / static_cast<double>(M);
        }
        double total = 0.0;
        for (std::size_t beta = 1; beta <= M; ++beta) {
            total += basis_eval(M, T, beta, t);
        }
        CHECK(total == 1.0);
    }
}

TEST_CASE("theta_eval examples")
{
    const WeightFunction two = scalar_wf({3.0, -1.0});
    CHECK(theta_eval(two, 0.25).at("c")[0] == 3.0);
    CHECK(theta_eval(two, 0.5).at("c")[0] == -1.0);
    CHECK(theta_eval(two, 1.0).at("c")[0] == -1.0);
    CHECK_THROWS_AS(theta_eval(two, 1.5), DomainError);

    const WeightFunction one = scalar_wf({0.7});
    for (double t : {0.0, 0.3, 0.999, 1.0}) {
        CHECK(theta_eval(one, t).at("c")[0] == 0.7);
    }
}

TEST_CASE("Euler nodes pick out one slice per step when M = Nt")
{
    const std::size_t nt = 6;
    std::vector<double> values;
    for (std::size_t k = 0; k < nt; ++k) {
        values.push_back(static_cast<double>(k));
    }
    const WeightFunction wf = scalar_wf(values);
    for (std::size_t k = 0; k < nt; ++k) {
        const double tk = static_cast<double>(k) * (1.0 / nt);
        CHECK(theta_eval(wf, tk).at("c")[0] == static_cast<double>(k));
    }
}

TEST_CASE("weight function validation")
{
    CHECK_THROWS_AS(WeightFunction(scalar_group(), 2, 1.0, {{"c", Tensor({3, 1})}}), ShapeError);
    CHECK_THROWS_AS(WeightFunction(scalar_group(), 1, 1.0, {{"d", Tensor({1, 1})}}), ShapeError);
    CHECK_THROWS_AS(WeightFunction(scalar_group(), 0, 1.0, {}), DomainError);
    CHECK_THROWS_AS(WeightFunction::zeros(scalar_group(), 1, 0.0), DomainError);
}

TEST_CASE("refine_split examples")
{
    const WeightFunction one = refine_split(scalar_wf({2.5}));
    CHECK(one.basis_count() == 2);
    CHECK(one.coefficient("c").values() == std::vector<double>{2.5, 2.5});

    const WeightFunction four = refine_split(scalar_wf({1.0, 7.0}));
    CHECK(four.coefficient("c").values() == std::vector<double>{1.0, 1.0, 7.0, 7.0});
}

TEST_CASE("refine_split is pointwise exact")
{
    testgen::Gen gen(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t M = std::size_t{1} << gen.index(0, 4);
        const double T = gen.uniform(0.5, 3.0);
        const WeightFunction wf = gen.weights(mixed_group(), M, T);
        const WeightFunction fine = refine_split(wf);
        CHECK(param_count(fine) == 2 * param_count(wf));
        for (int i = 0; i < 50; ++i) {
            const double t = i == 0 ? T : gen.uniform(0.0, T);
            CHECK(theta_eval(fine, t) == theta_eval(wf, t));
        }
    }
}

TEST_CASE("project_coarsen examples")
{
    const WeightFunction c = project_coarsen(scalar_wf({1.0, 4.0}), 1);
    CHECK(c.basis_count() == 1);
    CHECK(c.coefficient("c")[0] == 2.5);
    CHECK_THROWS_AS(project_coarsen(scalar_wf({1.0, 2.0, 3.0}), 2), std::invalid_argument);

    const WeightFunction flat = scalar_wf({3.0, 3.0, 3.0, 3.0});
    CHECK(refine_split(project_coarsen(flat, 2)) == flat);
}

TEST_CASE("coarsening averages fine slices")
{
    // L2 projection of a piecewise constant onto a coarser grid of equal
    // cells: minimise sum_r (c - a_r)^2 over c, i.e. the mean.
    testgen::Gen gen(31);
    const WeightFunction wf = gen.weights(mixed_group(), 8);
    const WeightFunction coarse = project_coarsen(wf, 2);
    for (const auto& [name, block] : wf.coefficients()) {
        const std::size_t stride = block.size() / 8;
        for (std::size_t j = 0; j < 2; ++j) {
            for (std::size_t i = 0; i < stride; ++i) {
                double mean = 0.0;
                for (std::size_t r = 0; r < 4; ++r) {
                    mean += block[(4 * j + r) * stride + i];
                }
                mean /= 4.0;
                CHECK(std::abs(coarse.coefficient(name)[j * stride + i] - mean) <= 1e-15);
                double best = 0.0;
                double worse = 0.0;
                for (std::size_t r = 0; r < 4; ++r) {
                    const double a = block[(4 * j + r) * stride + i];
                    best += (mean - a) * (mean - a);
                    worse += (mean + 1e-3 - a) * (mean + 1e-3 - a);
                }
                CHECK(best < worse);
            }
        }
    }
}

TEST_CASE("coarsen after split is the identity")
{
    testgen::Gen gen(37);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t M = gen.index(1, 12);
        const WeightFunction wf = gen.weights(mixed_group(), M, 1.0, gen.uniform(0.01, 100.0));
        CHECK(project_coarsen(refine_split(wf), M) == wf);
        CHECK(project_coarsen(refine_split(refine_split(wf)), M) == wf);
    }
}

TEST_CASE("param_count")
{
    CHECK(param_count(scalar_wf({1.0})) == 1);
    CHECK(param_count(WeightFunction::zeros(mixed_group(), 3, 1.0)) == 3 * 10);
    const WeightFunction m16 = WeightFunction::zeros(mixed_group(), 16, 1.0);
    const WeightFunction m32 = WeightFunction::zeros(mixed_group(), 32, 1.0);
    CHECK(param_count(m32) == 2 * param_count(m16));
}

TEST_CASE("gradient routes to exactly one interval slice")
{
    testgen::Gen gen(41);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t M = gen.index(1, 10);
        const double t = gen.uniform(0.0, 1.0);
        const WeightFunction wf = gen.weights(mixed_group(), M);
        Tape tape;
        Named<Var> coeffs;
        for (const auto& [name, block] : wf.coefficients()) {
            coeffs.emplace(name, variable(tape, block));
        }
        const std::size_t active = active_interval(M, 1.0, t);
        const Named<Var> theta = theta_select(coeffs, active);
        Var loss = sum(hadamard(theta.at("A"), theta.at("A")));
        loss = add(loss, sum(tanh(theta.at("b"))));
        loss = add(loss, sum(theta.at("s")));
        for (const auto& [name, var] : coeffs) {
            const Tensor g = gradient(loss, var);
            const std::size_t stride = g.size() / M;
            for (std::size_t beta = 0; beta < M; ++beta) {
                bool nonzero = false;
                for (std::size_t i = 0; i < stride; ++i) {
                    nonzero = nonzero || g[beta * stride + i] != 0.0;
                }
                CAPTURE(name);
                CHECK(nonzero == (beta == active));
            }
        }
        const NamedTensors direct = theta_eval(wf, t);
        for (const auto& [name, var] : theta) {
            CHECK(var.value() == direct.at(name));
        }
    }
}
