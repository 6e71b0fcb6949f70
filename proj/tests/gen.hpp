#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "contnet/odeblock.hpp"

namespace testgen {

using namespace contnet;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }

    Tensor tensor(Shape shape, double sd = 1.0)
    {
        Tensor t(std::move(shape));
        for (double& v : t.data()) {
            v = sd * normal();
        }
        return t;
    }

    Tensor uniform_tensor(Shape shape, double lo, double hi)
    {
        Tensor t(std::move(shape));
        for (double& v : t.data()) {
            v = uniform(lo, hi);
        }
        return t;
    }

    WeightFunction weights(const ParamGroupSpec& group, std::size_t M, double T = 1.0, double sd = 0.5)
    {
        NamedTensors coeffs;
        for (const auto& e : group.entries) {
            Shape s{M};
            s.insert(s.end(), e.shape.begin(), e.shape.end());
            coeffs.emplace(e.name, tensor(s, sd));
        }
        return WeightFunction(group, M, T, coeffs);
    }

    /// Width 1..4, hidden 1..6, random kind, M in {1, 2, 4, 8}.
    OdeBlockSpec block(std::size_t M = 0, double epsilon = 1.0)
    {
        const std::size_t w = index(1, 4);
        const ModuleKind kind = index(0, 1) ? ModuleKind::dense_skip_init : ModuleKind::tanh_mlp;
        ResidualModuleSpec module{kind, w, index(1, 6), w};
        if (M == 0) {
            M = std::size_t{1} << index(0, 3);
        }
        WeightFunction wf = weights(module.param_group(), M);
        if (kind == ModuleKind::dense_skip_init) {
            NamedTensors c = wf.coefficients();
            c["s"] = uniform_tensor({M, 1}, 0.5, 1.5);
            wf.set_coefficients(c);
        }
        return OdeBlockSpec{module, wf, epsilon};
    }

    Scheme scheme() { return kAllSchemes[index(0, 3)]; }

private:
    std::mt19937_64 rng_;
};

} // namespace testgen
