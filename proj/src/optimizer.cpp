#include "optlab/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace optlab {
namespace optimizer {

void AdamParams::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("AdamParams: beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("AdamParams: beta2 must be in [0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("AdamParams: epsilon must be > 0");
    if (!lr) throw ConfigError("AdamParams: lr schedule is not set");
    if (theory_mode) {
        if (bias_correction) {
            throw ConfigError("AdamParams: theory mode requires bias correction off");
        }
        if (!(beta1 * beta1 < beta2)) {
            throw ConfigError("AdamParams: theory mode requires beta1^2 < beta2");
        }
    }
    if (raw_v_denominator && !bias_correction) {
        throw ConfigError("AdamParams: raw_v_denominator only applies with bias correction on");
    }
}

std::function<double(std::int64_t)> constant_lr(double gamma) {
    return [gamma](std::int64_t) { return gamma; };
}

namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

void advance_moments(AdamState& state, const AdamParams& params, const core::Vector& grad) {
    for (std::size_t j = 0; j < grad.size(); ++j) {
        if (!std::isfinite(grad[j])) {
            throw std::invalid_argument("adam step: non-finite gradient at coordinate " +
                                        std::to_string(j));
        }
        state.m[j] = params.beta1 * state.m[j] + (1.0 - params.beta1) * grad[j];
        state.v[j] = params.beta2 * state.v[j] + (1.0 - params.beta2) * grad[j] * grad[j];
    }
}

StepRecord finish_record(const AdamState& state, const AdamParams& params,
                         const core::Vector& grad, double update_l2) {
    StepRecord rec;
    rec.grad_l1 = core::norm(grad, core::Norm::l1);
    rec.grad_l2 = core::norm(grad, core::Norm::l2);
    rec.update_l2 = update_l2;
    rec.u_coords.resize(state.m.size());
    for (std::size_t j = 0; j < state.m.size(); ++j) {
        rec.u_coords[j] = std::fabs(state.m[j]) / (std::sqrt(state.v[j]) + params.epsilon);
    }
    return rec;
}

}  // namespace

StepRecord step_preconditioned(AdamState& state, const AdamParams& params,
                               const core::Vector& grad, core::Vector& x) {
    const double gamma = params.lr(state.t);
    advance_moments(state, params, grad);
    ++state.t;
    long double upd_sq = 0.0L;
    if (params.bias_correction) {
        const double m_corr = 1.0 - std::pow(params.beta1, static_cast<double>(state.t));
        const double v_corr = 1.0 - std::pow(params.beta2, static_cast<double>(state.t));
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double m_hat = state.m[j] / m_corr;
            const double v_hat = params.raw_v_denominator ? state.v[j] : state.v[j] / v_corr;
            const double upd = gamma * m_hat / (std::sqrt(v_hat) + params.epsilon);
            x[j] -= upd;
            upd_sq += static_cast<long double>(upd) * upd;
        }
    } else {
        // grouped as gamma * (m / denom) so the sign form, which scales
        // |m| / denom by Sign(m), produces bit-identical iterates
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double upd = gamma * (state.m[j] / (std::sqrt(state.v[j]) + params.epsilon));
            x[j] -= upd;
            upd_sq += static_cast<long double>(upd) * upd;
        }
    }
    return finish_record(state, params, grad, static_cast<double>(std::sqrt(upd_sq)));
}

StepRecord step_sign_form(AdamState& state, const AdamParams& params,
                          const core::Vector& grad, core::Vector& x) {
    if (params.bias_correction) {
        throw ConfigError("step_sign_form: bias correction must be off");
    }
    const double gamma = params.lr(state.t);
    advance_moments(state, params, grad);
    ++state.t;
    long double upd_sq = 0.0L;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double u = std::fabs(state.m[j]) / (std::sqrt(state.v[j]) + params.epsilon);
        const double upd = gamma * u * sign_of(state.m[j]);
        x[j] -= upd;
        upd_sq += static_cast<long double>(upd) * upd;
    }
    return finish_record(state, params, grad, static_cast<double>(std::sqrt(upd_sq)));
}

Trajectory run_from(const problems::Problem& problem, const core::Vector& x0,
                    const AdamParams& params, const RunOptions& opts, core::RngStream rng) {
    params.validate();
    if (opts.T < 1) throw ConfigError("run: T must be >= 1");
    if (x0.size() != problem.d) throw ConfigError("run: x0 length does not match problem.d");

    Trajectory traj;
    traj.rows.reserve(static_cast<std::size_t>(opts.T));
    traj.u_dot_grad_l1.reserve(static_cast<std::size_t>(opts.T));
    traj.noisy_grad_l2.reserve(static_cast<std::size_t>(opts.T));

    core::Vector x = x0;
    AdamState state(problem.d);
    for (std::int64_t t = 0; t < opts.T; ++t) {
        const double loss = problem.value(x);
        double xmax = 0.0;
        for (double xj : x) xmax = std::max(xmax, std::fabs(xj));
        if (!std::isfinite(loss) || loss > opts.divergence_cap || xmax > opts.divergence_cap) {
            throw DivergenceError("run diverged at step " + std::to_string(t), t);
        }

        core::Vector g_exact = problem.grad(x);
        core::Vector g = problems::apply_noise(problem, g_exact, rng);

        StepRecord rec = opts.form == Form::sign
                             ? step_sign_form(state, params, g, x)
                             : step_preconditioned(state, params, g, x);

        double u_min = rec.u_coords[0], u_max = rec.u_coords[0];
        long double u_sum = 0.0L;
        long double udg = 0.0L;
        for (std::size_t j = 0; j < rec.u_coords.size(); ++j) {
            u_min = std::min(u_min, rec.u_coords[j]);
            u_max = std::max(u_max, rec.u_coords[j]);
            u_sum += rec.u_coords[j];
            udg += static_cast<long double>(rec.u_coords[j]) * std::fabs(g_exact[j]);
        }

        traj.rows.push_back({t, loss, core::norm(g_exact, core::Norm::l1),
                             core::norm(g_exact, core::Norm::l2), rec.update_l2, u_min,
                             static_cast<double>(u_sum / static_cast<long double>(problem.d)),
                             u_max});
        traj.u_dot_grad_l1.push_back(static_cast<double>(udg));
        traj.noisy_grad_l2.push_back(rec.grad_l2);
        if (opts.u_dump_every > 0 && t % opts.u_dump_every == 0) {
            traj.u_dumps.emplace_back(t, rec.u_coords);
            traj.grad_dumps.emplace_back(t, g_exact);
        }
    }
    traj.x_final = x;
    traj.final_loss = problem.value(x);
    return traj;
}

Trajectory run(const problems::Problem& problem, const AdamParams& params,
               const RunOptions& opts, core::RngStream rng) {
    return run_from(problem, problem.x0, params, opts, rng);
}

namespace {

void write_dump_csv(const std::vector<std::pair<std::int64_t, core::Vector>>& dumps,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "step";
    const std::size_t d = dumps.empty() ? 0 : dumps.front().second.size();
    for (std::size_t j = 0; j < d; ++j) out << ",c" << j;
    out << '\n';
    for (const auto& [step, coords] : dumps) {
        out << step;
        for (double c : coords) out << ',' << core::format_double(c);
        out << '\n';
    }
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "step,loss,grad_l1,grad_l2,update_l2,u_min,u_mean,u_max\n";
    for (const auto& r : traj.rows) {
        out << r.step << ',' << core::format_double(r.loss) << ','
            << core::format_double(r.grad_l1) << ',' << core::format_double(r.grad_l2) << ','
            << core::format_double(r.update_l2) << ',' << core::format_double(r.u_min) << ','
            << core::format_double(r.u_mean) << ',' << core::format_double(r.u_max) << '\n';
    }
}

void write_u_dump_csv(const Trajectory& traj, const std::string& path) {
    write_dump_csv(traj.u_dumps, path);
}

void write_grad_dump_csv(const Trajectory& traj, const std::string& path) {
    write_dump_csv(traj.grad_dumps, path);
}

}  // namespace optimizer
}  // namespace optlab
