#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "optlab/core.hpp"
#include "optlab/problems.hpp"

namespace optlab {
namespace optimizer {

enum class Form { preconditioned, sign };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool bias_correction = false;
    // With bias correction on, divide the corrected momentum by sqrt of the raw
    // (uncorrected) second moment instead of the corrected one.
    bool raw_v_denominator = false;
    // Enforces beta1^2 < beta2 and disables bias correction.
    bool theory_mode = false;
    std::function<double(std::int64_t)> lr;  // step index t -> gamma_t

    void validate() const;
};

std::function<double(std::int64_t)> constant_lr(double gamma);

struct AdamState {
    core::Vector m;
    core::Vector v;
    std::int64_t t = 0;

    explicit AdamState(std::size_t d) : m(d, 0.0), v(d, 0.0) {}
};

struct StepRecord {
    double loss = 0.0;
    double grad_l1 = 0.0;  // norms of the gradient fed to this step
    double grad_l2 = 0.0;
    double update_l2 = 0.0;
    core::Vector u_coords;  // |m_t| / (sqrt(v_t) + eps), post-update state
};

// x and state are advanced in place; gamma_t is params.lr(t) evaluated at the
// pre-increment step counter.
StepRecord step_preconditioned(AdamState& state, const AdamParams& params,
                               const core::Vector& grad, core::Vector& x);

// Same state transition, update written as gamma_t * u_t * Sign(m_t) with
// Sign(0) := 0. Requires bias correction off.
StepRecord step_sign_form(AdamState& state, const AdamParams& params,
                          const core::Vector& grad, core::Vector& x);

struct TrajectoryRow {
    std::int64_t step;
    double loss;
    double grad_l1;  // exact-gradient norms, queried from the problem
    double grad_l2;
    double update_l2;
    double u_min;
    double u_mean;
    double u_max;
};

struct Trajectory {
    std::vector<TrajectoryRow> rows;
    // Per-step ||u_t o grad F(x_t)||_1 with the exact gradient; consumed by the
    // bound audit.
    std::vector<double> u_dot_grad_l1;
    // Norms of the noisy gradients actually fed to the stepper.
    std::vector<double> noisy_grad_l2;
    // Full u-coordinate dumps every u_dump_every steps (step index, coords).
    std::vector<std::pair<std::int64_t, core::Vector>> u_dumps;
    // Exact-gradient coordinate dumps on the same cadence.
    std::vector<std::pair<std::int64_t, core::Vector>> grad_dumps;
    core::Vector x_final;
    double final_loss = 0.0;
};

struct RunOptions {
    std::int64_t T = 1;
    Form form = Form::preconditioned;
    double divergence_cap = 1e12;
    std::int64_t u_dump_every = 0;  // 0 disables dumps
};

Trajectory run(const problems::Problem& problem, const AdamParams& params,
               const RunOptions& opts, core::RngStream rng);

// As run(), but starting from a caller-supplied point instead of problem.x0.
Trajectory run_from(const problems::Problem& problem, const core::Vector& x0,
                    const AdamParams& params, const RunOptions& opts, core::RngStream rng);

// Columns: step, loss, grad_l1, grad_l2, update_l2, u_min, u_mean, u_max.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
// One row per dumped step: step followed by the d u-coordinates.
void write_u_dump_csv(const Trajectory& traj, const std::string& path);
// Same layout for the exact-gradient dumps.
void write_grad_dump_csv(const Trajectory& traj, const std::string& path);

}  // namespace optimizer
}  // namespace optlab
