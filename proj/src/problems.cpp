#include "optlab/problems.hpp"

#include <cmath>

namespace optlab {
namespace problems {

namespace {

Problem make_quadratic(const ProblemSpec& spec) {
    if (!(spec.lambda > 0.0)) {
        throw ConfigError("quadratic: lambda must be > 0");
    }
    const double lambda = spec.lambda;
    Problem p;
    p.kind = "quadratic";
    p.d = spec.d;
    p.value = [lambda](const core::Vector& x) {
        long double acc = 0.0L;
        for (double xj : x) acc += static_cast<long double>(xj) * xj;
        return static_cast<double>(0.5L * lambda * acc);
    };
    p.grad = [lambda](const core::Vector& x) {
        core::Vector g(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) g[j] = lambda * x[j];
        return g;
    };
    p.f_star = 0.0;
    p.smoothness = {lambda, 0.0, 0.0, true, "all x, any pair radius", 1.0, 2.0};
    return p;
}

// F = sum x_j^4. For ||y - x||_2 <= 1:
//   |4y^3 - 4x^3| = 4|y - x||x^2 + xy + y^2| <= 6(x^2 + y^2)|y - x|
//   and y^2 <= 2x^2 + 2(y - x)^2, so the factor is at most 18 x_j^2 + 12.
// With max_j x_j^2 <= (||grad F||_2 / 4)^{2/3} this is L0 = 12, L1 = 18/4^{2/3}, q = 2/3.
Problem make_quartic(const ProblemSpec& spec) {
    Problem p;
    p.kind = "quartic";
    p.d = spec.d;
    p.value = [](const core::Vector& x) {
        long double acc = 0.0L;
        for (double xj : x) {
            long double s = static_cast<long double>(xj) * xj;
            acc += s * s;
        }
        return static_cast<double>(acc);
    };
    p.grad = [](const core::Vector& x) {
        core::Vector g(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) g[j] = 4.0 * x[j] * x[j] * x[j];
        return g;
    };
    p.f_star = 0.0;
    p.smoothness = {12.0, 18.0 / std::pow(4.0, 2.0 / 3.0), 2.0 / 3.0, true,
                    "all x, pair radius ||y-x||_2 <= 1", 1.0, 1.5};
    return p;
}

// F = sum over i of 100 (x_{i+1} - x_i^2)^2 + (x_i - 1)^2; no analytic
// smoothness certificate, constants come from fitting.
Problem make_rosenbrock_like(const ProblemSpec& spec) {
    if (spec.d < 2) throw ConfigError("rosenbrock_like: d must be >= 2");
    Problem p;
    p.kind = "rosenbrock_like";
    p.d = spec.d;
    p.value = [](const core::Vector& x) {
        long double acc = 0.0L;
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            long double v1 = x[i + 1] - static_cast<long double>(x[i]) * x[i];
            long double v2 = x[i] - 1.0L;
            acc += 100.0L * v1 * v1 + v2 * v2;
        }
        return static_cast<double>(acc);
    };
    p.grad = [](const core::Vector& x) {
        core::Vector g(x.size(), 0.0);
        for (std::size_t i = 0; i + 1 < x.size(); ++i) {
            double v1 = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * x[i] * v1 + 2.0 * (x[i] - 1.0);
            g[i + 1] += 200.0 * v1;
        }
        return g;
    };
    p.f_star = 0.0;
    p.smoothness = {0.0, 0.0, 0.0, false, "uncertified; use fitted constants", 0.25, 1.5};
    return p;
}

// F = log(1 + sum exp(x_j)), infimum 0. The Hessian norm is at most
// max_j pi_j(x) <= ||grad F(x)||_2, and for ||y - x||_2 <= 1 the softmax weights
// move by at most a factor e^2, so L0 = 0, L1 = e^2, q = 1 on unit-radius pairs.
Problem make_logsumexp(const ProblemSpec& spec) {
    Problem p;
    p.kind = "logsumexp";
    p.d = spec.d;
    p.value = [](const core::Vector& x) {
        double xmax = 0.0;  // the implicit constant class has logit 0
        for (double xj : x) xmax = std::max(xmax, xj);
        long double acc = std::exp(static_cast<long double>(-xmax));
        for (double xj : x) acc += std::exp(static_cast<long double>(xj) - xmax);
        return static_cast<double>(xmax + std::log(acc));
    };
    p.grad = [](const core::Vector& x) {
        double xmax = 0.0;
        for (double xj : x) xmax = std::max(xmax, xj);
        long double denom = std::exp(static_cast<long double>(-xmax));
        for (double xj : x) denom += std::exp(static_cast<long double>(xj) - xmax);
        core::Vector g(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) {
            g[j] = static_cast<double>(std::exp(static_cast<long double>(x[j]) - xmax) / denom);
        }
        return g;
    };
    p.f_star = 0.0;
    p.smoothness = {0.0, std::exp(2.0), 1.0, true,
                    "all x, pair radius ||y-x||_2 <= 1", 1.0, 2.0};
    return p;
}

}  // namespace

Problem make_problem(const ProblemSpec& spec) {
    if (spec.d < 1) throw ConfigError("make_problem: d must be >= 1");
    if (spec.sigma0 < 0.0 || spec.sigma1 < 0.0) {
        throw ConfigError("make_problem: sigma0 and sigma1 must be >= 0");
    }
    if (spec.p < 0.0 || spec.p > 2.0) {
        throw ConfigError("make_problem: p must lie in [0, 2]");
    }
    if (!spec.x0.empty() && spec.x0.size() != spec.d) {
        throw ConfigError("make_problem: x0 length does not match d");
    }

    Problem p;
    if (spec.kind == "quadratic") {
        p = make_quadratic(spec);
    } else if (spec.kind == "quartic") {
        p = make_quartic(spec);
    } else if (spec.kind == "rosenbrock_like") {
        p = make_rosenbrock_like(spec);
    } else if (spec.kind == "logsumexp") {
        p = make_logsumexp(spec);
    } else {
        throw ConfigError("make_problem: unknown kind '" + spec.kind + "'");
    }

    p.noise = {spec.sigma0, spec.sigma1, spec.p};
    if (!spec.x0.empty()) {
        p.x0 = spec.x0;
    } else if (spec.kind == "rosenbrock_like") {
        p.x0.assign(spec.d, 1.0);
        for (std::size_t j = 0; j < spec.d; j += 2) p.x0[j] = -1.2;
    } else {
        p.x0.assign(spec.d, spec.x0_fill);
    }
    return p;
}

core::Vector apply_noise(const Problem& problem, const core::Vector& exact_grad,
                         core::RngStream& rng) {
    core::Vector g = exact_grad;
    const NoiseModel& nm = problem.noise;
    if (nm.sigma0 == 0.0 && nm.sigma1 == 0.0) return g;
    const double gn = core::norm(g, core::Norm::l2);
    const double gnp = nm.p == 0.0 ? 1.0 : std::pow(gn, nm.p);
    const double s = std::sqrt(nm.sigma0 * nm.sigma0 + nm.sigma1 * nm.sigma1 * gnp);
    const double scale = s / std::sqrt(static_cast<double>(problem.d));
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += scale * rng.next_normal();
    return g;
}

core::Vector noisy_grad(const Problem& problem, const core::Vector& x, core::RngStream& rng) {
    core::require_finite(x, "noisy_grad");
    return apply_noise(problem, problem.grad(x), rng);
}

double gradient_check(const Problem& problem, const core::Vector& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("gradient_check: h must be > 0");
    core::Vector g = problem.grad(x);
    core::Vector probe = x;
    double worst = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double hj = h * (1.0 + std::fabs(x[j]));
        probe[j] = x[j] + hj;
        const double fp = problem.value(probe);
        probe[j] = x[j] - hj;
        const double fm = problem.value(probe);
        probe[j] = x[j];
        const double fd = (fp - fm) / (2.0 * hj);
        const double err = std::fabs(fd - g[j]);
        worst = std::max(worst, std::fabs(g[j]) > 1e-8 ? err / std::fabs(g[j]) : err);
    }
    return worst;
}

}  // namespace problems
}  // namespace optlab
