#include <cmath>
#include <cstdint>

#include "optlab/optimizer.hpp"
#include "optlab/problems.hpp"

#include <doctest.h>

using namespace optlab;

namespace {

problems::Problem quadratic_1d() {
    problems::ProblemSpec spec;
    spec.kind = "quadratic";
    spec.d = 1;
    spec.x0_fill = 1.0;
    return problems::make_problem(spec);
}

}  // namespace

TEST_SUITE("optimizer") {
    TEST_CASE("single step matches the closed form") {
        optimizer::AdamParams params;
        params.beta1 = 0.9;
        params.beta2 = 0.999;
        params.epsilon = 1e-8;
        params.lr = optimizer::constant_lr(0.1);

        optimizer::AdamState state(1);
        core::Vector x{2.0};
        core::Vector g{3.0};
        optimizer::step_preconditioned(state, params, g, x);

        double m = 0.1 * 3.0;
        double v = 0.001 * 9.0;
        CHECK(state.m[0] == doctest::Approx(m).epsilon(1e-15));
        CHECK(state.v[0] == doctest::Approx(v).epsilon(1e-15));
        CHECK(x[0] == doctest::Approx(2.0 - 0.1 * m / (std::sqrt(v) + 1e-8)).epsilon(1e-15));
        CHECK(state.t == 1);
    }

    TEST_CASE("bias correction matches the closed form") {
        optimizer::AdamParams params;
        params.beta1 = 0.9;
        params.beta2 = 0.999;
        params.epsilon = 1e-8;
        params.bias_correction = true;
        params.lr = optimizer::constant_lr(0.1);

        optimizer::AdamState state(1);
        core::Vector x{0.0};
        optimizer::step_preconditioned(state, params, core::Vector{1.0}, x);
        double m_hat = (0.1 * 1.0) / (1.0 - 0.9);
        double v_hat = (0.001 * 1.0) / (1.0 - 0.999);
        CHECK(x[0] == doctest::Approx(-0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
    }

    TEST_CASE("sign form equals preconditioned form bit for bit") {
        core::RngStream rng(31, 0);
        for (int rep = 0; rep < 20; ++rep) {
            optimizer::AdamParams params;
            params.beta1 = 0.5 + 0.4 * rng.next_uniform();
            params.beta2 = params.beta1 + (1.0 - params.beta1) * rng.next_uniform() * 0.99;
            params.epsilon = 1e-8;
            params.lr = optimizer::constant_lr(0.01 + 0.05 * rng.next_uniform());

            const std::size_t d = 5;
            optimizer::AdamState sa(d);
            optimizer::AdamState sb(d);
            core::Vector xa(d, 1.0);
            core::Vector xb(d, 1.0);
            core::RngStream grads = rng.split(static_cast<std::uint64_t>(rep));
            for (int t = 0; t < 200; ++t) {
                core::Vector g = core::standard_normal(grads, d);
                optimizer::step_preconditioned(sa, params, g, xa);
                optimizer::step_sign_form(sb, params, g, xb);
                for (std::size_t j = 0; j < d; ++j) {
                    CHECK(xa[j] == xb[j]);
                    CHECK(sa.v[j] == sb.v[j]);
                }
            }
        }
    }

    TEST_CASE("u coordinates respect the sign-form decomposition") {
        optimizer::AdamParams params;
        params.beta1 = 0.9;
        params.beta2 = 0.999;
        params.epsilon = 1e-8;
        params.lr = optimizer::constant_lr(0.1);

        optimizer::AdamState state(2);
        core::Vector x{0.0, 0.0};
        optimizer::StepRecord rec = optimizer::step_sign_form(state, params, {2.0, -2.0}, x);
        CHECK(rec.u_coords[0] == doctest::Approx(rec.u_coords[1]));
        CHECK(x[0] == doctest::Approx(-x[1]));
        CHECK(x[0] < 0.0);
        CHECK(rec.u_coords[0] ==
              doctest::Approx(std::fabs(state.m[0]) / (std::sqrt(state.v[0]) + 1e-8)));
    }

    TEST_CASE("zero momentum leaves x unchanged in sign form") {
        optimizer::AdamParams params;
        params.beta1 = 0.0;
        params.beta2 = 0.5;
        params.lr = optimizer::constant_lr(0.1);
        optimizer::AdamState state(1);
        core::Vector x{1.0};
        optimizer::step_sign_form(state, params, {0.0}, x);
        CHECK(x[0] == 1.0);
    }

    TEST_CASE("validate rejects bad parameters") {
        optimizer::AdamParams params;
        params.lr = optimizer::constant_lr(0.1);
        params.beta1 = 1.0;
        CHECK_THROWS_AS(params.validate(), ConfigError);
        params.beta1 = 0.9;
        params.beta2 = 1.0;
        CHECK_THROWS_AS(params.validate(), ConfigError);
        params.beta2 = 0.999;
        params.epsilon = 0.0;
        CHECK_THROWS_AS(params.validate(), ConfigError);
        params.epsilon = 1e-8;
        params.lr = nullptr;
        CHECK_THROWS_AS(params.validate(), ConfigError);
        params.lr = optimizer::constant_lr(0.1);
        params.theory_mode = true;
        params.beta1 = 0.95;
        params.beta2 = 0.9;  // beta1^2 > beta2
        CHECK_THROWS_AS(params.validate(), ConfigError);
        params.beta1 = 0.9;
        params.beta2 = 0.9;  // beta1^2 < beta2 passes in theory mode
        CHECK_NOTHROW(params.validate());
    }

    TEST_CASE("run converges on the noiseless quadratic") {
        problems::Problem problem = quadratic_1d();
        optimizer::AdamParams params;
        params.lr = optimizer::constant_lr(0.05);
        optimizer::RunOptions opts;
        opts.T = 500;
        optimizer::Trajectory traj = optimizer::run(problem, params, opts, core::RngStream(1, 0));
        CHECK(traj.rows.size() == 500);
        CHECK(traj.final_loss < 1e-4);
        CHECK(traj.rows.front().loss == doctest::Approx(0.5));
        CHECK(traj.u_dot_grad_l1.size() == 500);
        CHECK(traj.noisy_grad_l2.size() == 500);
    }

    TEST_CASE("trajectory rows carry exact gradient norms under noise") {
        problems::ProblemSpec spec;
        spec.kind = "quadratic";
        spec.d = 3;
        spec.sigma0 = 5.0;
        spec.x0_fill = 1.0;
        problems::Problem problem = problems::make_problem(spec);

        optimizer::AdamParams params;
        params.lr = optimizer::constant_lr(0.0);  // x frozen, only the noise varies
        optimizer::RunOptions opts;
        opts.T = 50;
        optimizer::Trajectory traj = optimizer::run(problem, params, opts, core::RngStream(3, 0));
        double exact = core::norm(problem.grad(problem.x0), core::Norm::l2);
        for (const optimizer::TrajectoryRow& row : traj.rows) {
            CHECK(row.grad_l2 == doctest::Approx(exact).epsilon(1e-12));
        }
        // the noisy norms differ from the exact ones
        bool any_off = false;
        for (double g : traj.noisy_grad_l2) any_off = any_off || std::fabs(g - exact) > 0.1;
        CHECK(any_off);
    }

    TEST_CASE("u dumps follow the requested cadence") {
        problems::Problem problem = quadratic_1d();
        optimizer::AdamParams params;
        params.lr = optimizer::constant_lr(0.01);
        optimizer::RunOptions opts;
        opts.T = 100;
        opts.u_dump_every = 25;
        optimizer::Trajectory traj = optimizer::run(problem, params, opts, core::RngStream(1, 0));
        CHECK(traj.u_dumps.size() == 4);
        CHECK(traj.grad_dumps.size() == 4);
        CHECK(traj.u_dumps[0].first == 0);
        CHECK(traj.u_dumps[1].first == 25);
    }

    TEST_CASE("divergence raises with the failing step") {
        problems::ProblemSpec spec;
        spec.kind = "quadratic";
        spec.d = 1;
        spec.lambda = 1.0;
        spec.x0_fill = 1e5;
        problems::Problem problem = problems::make_problem(spec);
        optimizer::AdamParams params;
        params.lr = optimizer::constant_lr(1e30);
        optimizer::RunOptions opts;
        opts.T = 100;
        opts.divergence_cap = 1e10;
        CHECK_THROWS_AS(optimizer::run(problem, params, opts, core::RngStream(1, 0)),
                        DivergenceError);
    }

    TEST_CASE("run_from starts at the supplied point") {
        problems::Problem problem = quadratic_1d();
        optimizer::AdamParams params;
        params.lr = optimizer::constant_lr(0.01);
        optimizer::RunOptions opts;
        opts.T = 1;
        optimizer::Trajectory traj =
            optimizer::run_from(problem, {3.0}, params, opts, core::RngStream(1, 0));
        CHECK(traj.rows.front().loss == doctest::Approx(4.5));
    }
}
