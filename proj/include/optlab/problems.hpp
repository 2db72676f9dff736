#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "optlab/core.hpp"

namespace optlab {
namespace problems {

// Gradient-Lipschitz envelope ||grad F(y) - grad F(x)|| <= (L0 + L1 ||grad F(x)||^q) ||y - x||.
struct SmoothnessModel {
    double L0 = 0.0;
    double L1 = 0.0;
    double q = 0.0;
    // False when no analytic certificate exists and the constants come from fitting.
    bool certified = false;
    // Human-readable description of where the certificate is valid.
    std::string region;
    // Pairs (x, y) are certified for ||y - x||_2 up to this radius.
    double pair_radius = 1.0;
    // Half-width of the coordinate box the certificate checks sample x from.
    double sample_halfwidth = 2.0;

    double l_hat() const { return L0 + (1.0 - q) * L1; }
};

// E||g - grad F||^2 <= sigma0^2 + sigma1^2 ||grad F||_2^p, met with equality by noisy_grad.
struct NoiseModel {
    double sigma0 = 0.0;
    double sigma1 = 0.0;
    double p = 0.0;
};

struct Problem {
    std::string kind;
    std::size_t d = 1;
    std::function<double(const core::Vector&)> value;
    std::function<core::Vector(const core::Vector&)> grad;
    double f_star = 0.0;
    SmoothnessModel smoothness;
    NoiseModel noise;
    core::Vector x0;
};

struct ProblemSpec {
    std::string kind;  // quadratic | quartic | rosenbrock_like | logsumexp
    std::size_t d = 1;
    double lambda = 1.0;  // quadratic curvature coefficient
    double sigma0 = 0.0;
    double sigma1 = 0.0;
    double p = 0.0;
    // Every coordinate of the canonical start, unless x0 overrides it.
    double x0_fill = 1.0;
    core::Vector x0;  // empty = use x0_fill
};

Problem make_problem(const ProblemSpec& spec);

// g = grad F(x) + s * xi / sqrt(d), xi iid standard normal,
// s = sqrt(sigma0^2 + sigma1^2 ||grad F(x)||_2^p); the variance bound holds with equality.
core::Vector noisy_grad(const Problem& problem, const core::Vector& x, core::RngStream& rng);

// Same perturbation applied to an already-computed exact gradient, so callers
// that need both the exact and noisy gradient evaluate grad(x) once.
core::Vector apply_noise(const Problem& problem, const core::Vector& exact_grad,
                         core::RngStream& rng);

// Central finite differences against grad(x); relative error per coordinate,
// falling back to absolute error where |grad_j| <= 1e-8.
double gradient_check(const Problem& problem, const core::Vector& x, double h = 1e-6);

}  // namespace problems
}  // namespace optlab
