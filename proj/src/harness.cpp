#include "optlab/harness.hpp"

#include "optlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace optlab {
namespace harness {

namespace {

double mean_of(const std::vector<double>& v) {
    long double s = 0.0L;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : static_cast<double>(s / v.size());
}

struct CellResult {
    double metric = 0.0;
    bool diverged = false;
};

// aggregate over seeds, excluding diverged runs
struct SeedAggregate {
    double metric = 0.0;
    int diverged = 0;
    int total = 0;
};

SeedAggregate aggregate(const std::vector<CellResult>& cells) {
    SeedAggregate out;
    long double sum = 0.0L;
    int kept = 0;
    for (const CellResult& c : cells) {
        ++out.total;
        if (c.diverged) {
            ++out.diverged;
        } else {
            sum += c.metric;
            ++kept;
        }
    }
    out.metric = kept ? static_cast<double>(sum / kept) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

optimizer::AdamParams make_params_impl(const ExperimentConfig& config,
                                       const problems::Problem& problem, std::int64_t T) {
    optimizer::AdamParams params;
    params.epsilon = config.epsilon;
    if (config.scheduled) {
        auto [C2, C3] = resolve_schedule_constants(config, problem);
        double gamma = schedules::schedule_lr(C2, T, problem.d, 1);
        double b1 = schedules::schedule_beta1(C3, T);
        params.beta1 = b1;
        params.beta2 = config.beta2_override >= 0.0 ? config.beta2_override : b1;
        params.theory_mode = true;
        params.lr = optimizer::constant_lr(gamma);
    } else {
        params.beta1 = config.beta1;
        params.beta2 = config.beta2;
        params.bias_correction = config.bias_correction;
        params.lr = optimizer::constant_lr(config.lr);
    }
    return params;
}

double trajectory_metric(const optimizer::Trajectory& traj) {
    long double s = 0.0L;
    for (const optimizer::TrajectoryRow& row : traj.rows) s += row.grad_l2;
    return traj.rows.empty() ? 0.0 : static_cast<double>(s / traj.rows.size());
}

void warn(const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); }

}  // namespace

optimizer::AdamParams make_params(const ExperimentConfig& config,
                                  const problems::Problem& problem, std::int64_t T) {
    return make_params_impl(config, problem, T);
}

RateFit fit_loglog(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw ConfigError("log-log fit needs at least 2 points");
    const auto n = static_cast<double>(points.size());
    long double sx = 0.0L, sy = 0.0L, sxx = 0.0L, sxy = 0.0L;
    for (const auto& [x, y] : points) {
        if (!(x > 0.0)) throw ConfigError("log-log fit needs positive x values");
        double lx = std::log(x);
        double ly = std::log(std::max(y, 1e-300));
        sx += lx;
        sy += ly;
        sxx += static_cast<long double>(lx) * lx;
        sxy += static_cast<long double>(lx) * ly;
    }
    const double det = static_cast<double>(n * sxx - sx * sx);
    if (det == 0.0) throw ConfigError("log-log fit needs distinct x values");
    RateFit fit;
    fit.slope = static_cast<double>((n * sxy - sx * sy) / det);
    fit.intercept = static_cast<double>((sy - fit.slope * sx) / n);
    long double sse = 0.0L, sst = 0.0L;
    const double y_mean = static_cast<double>(sy) / n;
    for (const auto& [x, y] : points) {
        double ly = std::log(std::max(y, 1e-300));
        double pred = fit.intercept + fit.slope * std::log(x);
        sse += static_cast<long double>(ly - pred) * (ly - pred);
        sst += static_cast<long double>(ly - y_mean) * (ly - y_mean);
    }
    fit.r_squared = sst > 0.0L ? std::clamp(static_cast<double>(1.0L - sse / sst), 0.0, 1.0) : 1.0;
    fit.per_T_points = points;
    return fit;
}

core::RngStream cell_stream(std::uint64_t seed, std::uint64_t T, std::uint64_t cell) {
    std::uint64_t id = core::mix64(core::mix64(T) ^ (cell + 0xD1B54A32D192ED03ULL));
    return core::RngStream(seed, id);
}

RunSummary run_cell(const ExperimentConfig& config, const problems::Problem& problem,
                    std::int64_t T, std::uint64_t seed, std::uint64_t cell_tag) {
    optimizer::AdamParams params = make_params_impl(config, problem, T);
    optimizer::RunOptions opts;
    opts.T = T;
    opts.form = config.form;
    opts.divergence_cap = config.divergence_cap;
    core::RngStream rng = cell_stream(seed, static_cast<std::uint64_t>(T), cell_tag);
    try {
        optimizer::Trajectory traj = optimizer::run(problem, params, opts, rng);
        return {trajectory_metric(traj), false};
    } catch (const DivergenceError&) {
        return {0.0, true};
    }
}

std::pair<double, double> resolve_schedule_constants(const ExperimentConfig& config,
                                                     const problems::Problem& problem) {
    if (config.C2 > 0.0 && config.C3 > 0.0) return {config.C2, config.C3};
    if (config.mode != schedules::Mode::oracle_case2) {
        throw ConfigError("explicit schedule constants C2 and C3 are required outside the "
                          "oracle_case2 mode");
    }
    if (config.beta2_override >= 0.0) {
        throw ConfigError("deriving schedule constants assumes the beta2 = beta1 pairing "
                          "(R = 1); set C2 and C3 explicitly when overriding beta2");
    }
    schedules::OracleConstants consts = certificate_constants(config, problem);
    auto [c2, c3] = schedules::oracle_constants(consts, 1.0);
    return {config.C2 > 0.0 ? config.C2 : c2, config.C3 > 0.0 ? config.C3 : c3};
}

schedules::OracleConstants certificate_constants(const ExperimentConfig& config,
                                                 const problems::Problem& problem) {
    if (!problem.smoothness.certified) {
        throw ConfigError("problem '" + problem.kind +
                          "' has no certified smoothness constants; use quadratic, quartic, or "
                          "logsumexp, or set schedule constants explicitly");
    }
    schedules::OracleConstants consts;
    consts.F0_minus_Fstar = problem.value(problem.x0) - problem.f_star;
    consts.L_hat = problem.smoothness.l_hat();
    consts.sigma_hat = schedules::sigma_hat(problem.noise.sigma0, problem.noise.sigma1,
                                            problem.noise.p, config.reading);
    consts.sigma1 = problem.noise.sigma1;
    consts.p = problem.noise.p;
    consts.q = problem.smoothness.q;
    consts.L1 = problem.smoothness.L1;
    return consts;
}

namespace {

// metric per T averaged over seeds; cells fan out in one flat parallel loop
std::vector<SeedAggregate> grid_metrics(const ExperimentConfig& config,
                                        const problems::Problem& problem,
                                        const std::vector<std::int64_t>& T_grid,
                                        std::uint64_t cell_base) {
    const std::size_t ns = config.seeds.size();
    std::vector<CellResult> cells(T_grid.size() * ns);
    core::parallel_for(static_cast<std::int64_t>(cells.size()), config.threads,
                       [&](std::int64_t idx) {
                           auto ti = static_cast<std::size_t>(idx) / ns;
                           auto si = static_cast<std::size_t>(idx) % ns;
                           RunSummary s =
                               run_cell(config, problem, T_grid[ti], config.seeds[si],
                                        cell_base + static_cast<std::uint64_t>(idx));
                           cells[static_cast<std::size_t>(idx)] = {s.metric, s.diverged};
                       });
    std::vector<SeedAggregate> out(T_grid.size());
    for (std::size_t ti = 0; ti < T_grid.size(); ++ti) {
        std::vector<CellResult> slice(cells.begin() + static_cast<std::ptrdiff_t>(ti * ns),
                                      cells.begin() + static_cast<std::ptrdiff_t>((ti + 1) * ns));
        out[ti] = aggregate(slice);
    }
    return out;
}

}  // namespace

RateFit estimate_rate(const ExperimentConfig& config) {
    std::vector<std::string> problems_found;
    if (config.T_grid.size() < 4) problems_found.push_back("T_grid needs at least 4 values");
    for (std::size_t i = 1; i < config.T_grid.size(); ++i) {
        if (config.T_grid[i] <= config.T_grid[i - 1]) {
            problems_found.push_back("T_grid must be strictly increasing");
            break;
        }
    }
    if (!config.T_grid.empty() && config.T_grid.front() >= 1 &&
        config.T_grid.back() < 50 * config.T_grid.front()) {
        problems_found.push_back("T_grid must span at least a factor of 50");
    }
    if (config.seeds.size() < 8) problems_found.push_back("at least 8 seeds required");
    if (!problems_found.empty()) {
        std::string msg = "estimate_rate preconditions violated:";
        for (const std::string& p : problems_found) msg += " " + p + ";";
        throw ConfigError(msg);
    }

    problems::Problem problem = problems::make_problem(config.problem);
    if (config.scheduled && problem.smoothness.certified) {
        schedules::OracleConstants consts = certificate_constants(config, problem);
        auto [C2, C3] = resolve_schedule_constants(config, problem);
        schedules::ScheduleSpec spec;
        spec.C2 = C2;
        spec.C3 = C3;
        spec.T = config.T_grid.front();
        spec.d = problem.d;
        spec.R = config.beta2_override >= 0.0
                     ? schedules::compute_R(1.0 - schedules::schedule_beta1(C3, spec.T),
                                            config.beta2_override)
                     : 1.0;
        spec.v_bar = config.v_bar;
        spec.mode = config.mode;
        double min_T = schedules::min_T_threshold(consts, spec);
        if (static_cast<double>(config.T_grid.front()) < min_T) {
            warn("T grid starts below the schedule's min_T threshold (" +
                 core::format_double(min_T) + "); the corollary bound is not guaranteed there");
        }
    }

    std::vector<SeedAggregate> agg = grid_metrics(config, problem, config.T_grid, 0);
    RateFit fit;
    int diverged = 0, total = 0;
    std::vector<std::pair<double, double>> points;
    for (std::size_t ti = 0; ti < config.T_grid.size(); ++ti) {
        diverged += agg[ti].diverged;
        total += agg[ti].total;
        if (agg[ti].diverged > 0) {
            warn(std::to_string(agg[ti].diverged) + " run(s) diverged at T = " +
                 std::to_string(config.T_grid[ti]) + " and were excluded");
        }
        if (agg[ti].diverged < agg[ti].total) {
            points.emplace_back(static_cast<double>(config.T_grid[ti]), agg[ti].metric);
        }
    }
    if (4 * diverged > total) {
        throw DivergenceError("more than 25% of rate runs diverged; the fit is unusable", -1);
    }
    fit = fit_loglog(points);
    fit.diverged = diverged;
    fit.total_runs = total;
    return fit;
}

nlohmann::ordered_json rate_report(const ExperimentConfig& config) {
    RateFit fit = estimate_rate(config);
    nlohmann::ordered_json out;
    out["metric"] = "(1/T) sum_t ||grad F(x_t)||_2, averaged over seeds";
    out["protocol_note"] =
        "synthetic-problem rate protocol constructed for this laboratory; T grid and seed "
        "counts are artifact choices";
    out["T_grid"] = config.T_grid;
    out["seed_count"] = config.seeds.size();
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& [T, m] : fit.per_T_points) pts.push_back({{"T", T}, {"metric", m}});
    out["points"] = pts;
    out["slope"] = fit.slope;
    out["intercept"] = fit.intercept;
    out["r_squared"] = fit.r_squared;
    out["diverged"] = fit.diverged;
    out["total_runs"] = fit.total_runs;
    if (config.scheduled) {
        problems::Problem problem = problems::make_problem(config.problem);
        auto [C2, C3] = resolve_schedule_constants(config, problem);
        out["schedule"] = {{"C2", C2},
                           {"C3", C3},
                           {"beta2_pairing", config.beta2_override < 0.0},
                           {"form", config.form == optimizer::Form::sign ? "sign" : "preconditioned"}};
    }
    return out;
}

nlohmann::ordered_json momentum_ablation(const ExperimentConfig& config) {
    if (config.T_grid.empty()) throw ConfigError("momentum ablation needs a T_grid");
    if (config.seeds.empty()) throw ConfigError("momentum ablation needs seeds");
    problems::Problem problem = problems::make_problem(config.problem);
    const bool noisy = config.problem.sigma0 > 0.0;

    ExperimentConfig sign_cfg = config;
    sign_cfg.scheduled = false;
    sign_cfg.beta1 = 0.0;
    sign_cfg.beta2 = 0.0;
    sign_cfg.bias_correction = false;

    ExperimentConfig doubled_cfg = sign_cfg;
    doubled_cfg.problem.sigma0 = 2.0 * config.problem.sigma0;
    problems::Problem doubled_problem = problems::make_problem(doubled_cfg.problem);

    ExperimentConfig sched_cfg = config;
    sched_cfg.scheduled = true;

    std::vector<SeedAggregate> base = grid_metrics(sign_cfg, problem, config.T_grid, 1u << 20);
    std::vector<SeedAggregate> doubled =
        grid_metrics(doubled_cfg, doubled_problem, config.T_grid, 2u << 20);
    std::vector<SeedAggregate> sched = grid_metrics(sched_cfg, problem, config.T_grid, 3u << 20);

    auto points_json = [&](const std::vector<SeedAggregate>& agg) {
        nlohmann::ordered_json pts = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < agg.size(); ++i) {
            pts.push_back({{"T", config.T_grid[i]},
                           {"metric", agg[i].metric},
                           {"diverged", agg[i].diverged}});
        }
        return pts;
    };

    const double floor_base = base.back().metric;
    const double floor_doubled = doubled.back().metric;
    const double sched_final = sched.back().metric;
    const double flatness = base.front().metric > 0.0 ? floor_base / base.front().metric : 1.0;

    nlohmann::ordered_json out;
    out["signsgd"] = {{"lr", config.lr}, {"points", points_json(base)}, {"plateau", floor_base},
                      {"flatness_ratio", flatness}};
    out["signsgd_sigma0_doubled"] = {{"sigma0", doubled_cfg.problem.sigma0},
                                     {"points", points_json(doubled)},
                                     {"plateau", floor_doubled}};
    auto [C2, C3] = resolve_schedule_constants(sched_cfg, problem);
    out["scheduled"] = {{"C2", C2}, {"C3", C3}, {"points", points_json(sched)},
                        {"final_metric", sched_final}};

    bool pass;
    if (noisy) {
        const double floor_ratio = floor_base > 0.0 ? floor_doubled / floor_base : 0.0;
        const bool plateaus = flatness >= 0.5;
        const bool floor_raises = floor_ratio >= 1.5;
        const bool below_floor = sched_final < floor_base;
        pass = plateaus && floor_raises && below_floor;
        out["checks"] = {{"plateaus", plateaus},
                         {"floor_ratio", floor_ratio},
                         {"floor_raises", floor_raises},
                         {"scheduled_below_floor", below_floor}};
    } else {
        // noiseless: no floor, both variants must converge
        const double drop_sign = base.back().metric / std::max(base.front().metric, 1e-300);
        const double drop_sched = sched.back().metric / std::max(sched.front().metric, 1e-300);
        const bool both_converge = drop_sign < 0.5 && drop_sched < 0.5;
        pass = both_converge;
        out["checks"] = {{"noiseless", true},
                         {"signsgd_drop", drop_sign},
                         {"scheduled_drop", drop_sched},
                         {"both_converge", both_converge}};
    }
    out["pass"] = pass;
    return out;
}

nlohmann::ordered_json dimension_sweep(const ExperimentConfig& config,
                                       const std::vector<std::int64_t>& d_grid) {
    if (d_grid.size() < 2) throw ConfigError("dimension sweep needs at least 2 dimensions");
    if (config.gamma_grid.size() < 3) throw ConfigError("dimension sweep needs a gamma grid with >= 3 values");
    for (std::size_t i = 1; i < config.gamma_grid.size(); ++i) {
        if (config.gamma_grid[i] <= config.gamma_grid[i - 1]) {
            throw ConfigError("gamma grid must be strictly increasing");
        }
    }
    if (config.T < 1) throw ConfigError("dimension sweep needs T >= 1");
    if (config.problem.kind == "rosenbrock_like") {
        throw ConfigError("dimension sweep needs a separable problem family");
    }
    if (config.scheduled && !(config.C2 > 0.0 && config.C3 > 0.0)) {
        throw ConfigError("dimension sweep compares scheduled runs across d at fixed C2, C3; "
                          "set both explicitly");
    }

    const std::size_t ns = config.seeds.size();
    if (ns == 0) throw ConfigError("dimension sweep needs seeds");

    nlohmann::ordered_json per_d = nlohmann::ordered_json::array();
    std::vector<std::pair<double, double>> best_points;
    std::vector<double> sched_metrics;
    bool any_edge = false;

    for (std::size_t di = 0; di < d_grid.size(); ++di) {
        const std::int64_t d = d_grid[di];
        problems::ProblemSpec spec_d = config.problem;
        spec_d.d = static_cast<int>(d);
        spec_d.x0.clear();
        spec_d.x0_fill =
            config.problem.x0_fill * std::pow(static_cast<double>(d), config.x0_dim_exponent);
        spec_d.sigma0 =
            config.problem.sigma0 * std::pow(static_cast<double>(d), config.sigma0_dim_exponent);
        problems::Problem problem_d = problems::make_problem(spec_d);

        // constant-gamma grid search
        const std::size_t ng = config.gamma_grid.size();
        std::vector<CellResult> cells(ng * ns);
        ExperimentConfig const_cfg = config;
        const_cfg.problem = spec_d;
        const_cfg.scheduled = false;
        core::parallel_for(static_cast<std::int64_t>(cells.size()), config.threads,
                           [&](std::int64_t idx) {
                               auto gi = static_cast<std::size_t>(idx) / ns;
                               auto si = static_cast<std::size_t>(idx) % ns;
                               ExperimentConfig c = const_cfg;
                               c.lr = config.gamma_grid[gi];
                               RunSummary s = run_cell(
                                   c, problem_d, config.T, config.seeds[si],
                                   (static_cast<std::uint64_t>(di + 1) << 32) +
                                       static_cast<std::uint64_t>(idx));
                               cells[static_cast<std::size_t>(idx)] = {s.metric, s.diverged};
                           });
        std::vector<double> metric_by_gamma(ng);
        for (std::size_t gi = 0; gi < ng; ++gi) {
            std::vector<CellResult> slice(cells.begin() + static_cast<std::ptrdiff_t>(gi * ns),
                                          cells.begin() + static_cast<std::ptrdiff_t>((gi + 1) * ns));
            SeedAggregate a = aggregate(slice);
            metric_by_gamma[gi] =
                a.diverged == a.total ? std::numeric_limits<double>::infinity() : a.metric;
        }
        std::size_t best = static_cast<std::size_t>(
            std::min_element(metric_by_gamma.begin(), metric_by_gamma.end()) -
            metric_by_gamma.begin());
        if (!std::isfinite(metric_by_gamma[best])) {
            throw DivergenceError("all runs diverged across the gamma grid at d = " +
                                      std::to_string(d),
                                  -1);
        }
        const bool edge = best == 0 || best == ng - 1;
        any_edge = any_edge || edge;
        double best_gamma = config.gamma_grid[best];
        if (!edge && std::isfinite(metric_by_gamma[best - 1]) &&
            std::isfinite(metric_by_gamma[best + 1])) {
            // parabola through the three log-gamma points around the minimum
            double x0 = std::log(config.gamma_grid[best - 1]);
            double x1 = std::log(config.gamma_grid[best]);
            double x2 = std::log(config.gamma_grid[best + 1]);
            double m0 = metric_by_gamma[best - 1];
            double m1 = metric_by_gamma[best];
            double m2 = metric_by_gamma[best + 1];
            double d01 = (m1 - m0) / (x1 - x0);
            double d12 = (m2 - m1) / (x2 - x1);
            double curv = (d12 - d01) / (x2 - x0);
            if (curv > 0.0) {
                double vertex = 0.5 * (x0 + x1) - 0.5 * d01 / curv;
                vertex = std::clamp(vertex, x0, x2);
                best_gamma = std::exp(vertex);
            }
        }
        best_points.emplace_back(static_cast<double>(d), best_gamma);

        nlohmann::ordered_json entry = {{"d", d},
                                        {"x0_fill", spec_d.x0_fill},
                                        {"sigma0", spec_d.sigma0},
                                        {"grid_best_gamma", config.gamma_grid[best]},
                                        {"best_gamma", best_gamma},
                                        {"metric_at_best", metric_by_gamma[best]},
                                        {"grid_edge", edge}};

        if (config.scheduled) {
            ExperimentConfig sched_cfg = config;
            sched_cfg.problem = spec_d;
            std::vector<SeedAggregate> sm = grid_metrics(sched_cfg, problem_d, {config.T},
                                                         (static_cast<std::uint64_t>(di + 1) << 40));
            sched_metrics.push_back(sm.front().metric);
            entry["scheduled_metric"] = sm.front().metric;
        }
        per_d.push_back(entry);
    }

    RateFit gamma_fit = fit_loglog(best_points);

    nlohmann::ordered_json out;
    out["T"] = config.T;
    out["per_d"] = per_d;
    out["gamma_slope"] = gamma_fit.slope;
    out["gamma_slope_r_squared"] = gamma_fit.r_squared;
    out["grid_edge_hit"] = any_edge;
    bool slope_ok = std::abs(gamma_fit.slope + 0.5) <= 0.15;
    bool sched_ok = true;
    double sched_ratio = 1.0;
    if (!sched_metrics.empty()) {
        double lo = *std::min_element(sched_metrics.begin(), sched_metrics.end());
        double hi = *std::max_element(sched_metrics.begin(), sched_metrics.end());
        sched_ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        sched_ok = sched_ratio < 2.0;
        out["scheduled_metric_ratio"] = sched_ratio;
    }

    bool eps_ok = true;
    if (config.scheduled && !config.epsilon_grid.empty()) {
        const std::int64_t d_mid = d_grid[d_grid.size() / 2];
        problems::ProblemSpec spec_d = config.problem;
        spec_d.d = static_cast<int>(d_mid);
        spec_d.x0.clear();
        spec_d.x0_fill =
            config.problem.x0_fill * std::pow(static_cast<double>(d_mid), config.x0_dim_exponent);
        spec_d.sigma0 = config.problem.sigma0 *
                        std::pow(static_cast<double>(d_mid), config.sigma0_dim_exponent);
        problems::Problem problem_d = problems::make_problem(spec_d);
        std::vector<double> eps_metrics;
        nlohmann::ordered_json eps_json = nlohmann::ordered_json::array();
        for (std::size_t ei = 0; ei < config.epsilon_grid.size(); ++ei) {
            ExperimentConfig eps_cfg = config;
            eps_cfg.problem = spec_d;
            eps_cfg.epsilon = config.epsilon_grid[ei];
            std::vector<SeedAggregate> em = grid_metrics(eps_cfg, problem_d, {config.T},
                                                         (static_cast<std::uint64_t>(ei + 1) << 48));
            eps_metrics.push_back(em.front().metric);
            eps_json.push_back({{"epsilon", config.epsilon_grid[ei]}, {"metric", em.front().metric}});
        }
        double lo = *std::min_element(eps_metrics.begin(), eps_metrics.end());
        double hi = *std::max_element(eps_metrics.begin(), eps_metrics.end());
        double spread = lo > 0.0 ? hi / lo - 1.0 : std::numeric_limits<double>::infinity();
        eps_ok = spread < 0.05;
        out["epsilon_sweep"] = {{"d", d_mid}, {"points", eps_json}, {"relative_spread", spread}};
    }

    out["checks"] = {{"gamma_slope_in_band", slope_ok},
                     {"scheduled_dimension_free", sched_ok},
                     {"epsilon_independent", eps_ok}};
    out["pass"] = slope_ok && sched_ok && eps_ok;
    return out;
}

nlohmann::ordered_json audit_theorem_bound(const ExperimentConfig& config,
                                           const schedules::OracleConstants& consts) {
    std::vector<std::string> errors;
    problems::Problem problem = problems::make_problem(config.problem);
    if (!problem.smoothness.certified) {
        errors.push_back("audit requires certified smoothness constants");
    }
    if (config.seeds.size() < 16) errors.push_back("audit requires >= 16 seeds");
    std::vector<std::int64_t> T_values = config.T_grid.empty()
                                             ? std::vector<std::int64_t>{config.T}
                                             : config.T_grid;
    if (T_values.front() < 1) errors.push_back("audit requires T >= 1 (set T or T_grid)");
    if (!config.scheduled && !(config.beta1 * config.beta1 < config.beta2)) {
        errors.push_back("audit requires beta1^2 < beta2");
    }
    if (!errors.empty()) {
        std::string msg = "audit preconditions violated:";
        for (const std::string& e : errors) msg += " " + e + ";";
        throw ConfigError(msg);
    }

    const int d = problem.d;
    const double grad_norm_x0 = core::norm(problem.grad(problem.x0), core::Norm::l2);
    const std::size_t ns = config.seeds.size();

    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    bool all_hold = true;

    for (std::size_t ti = 0; ti < T_values.size(); ++ti) {
        const std::int64_t T = T_values[ti];
        optimizer::AdamParams params = make_params_impl(config, problem, T);
        const double gamma = params.lr(1);
        const double one_minus_beta1 = 1.0 - params.beta1;
        const double R = schedules::compute_R(params.beta1, params.beta2);

        struct SeedData {
            double A = 0.0;  // (1/T) sum ||u_t o grad F(x_t)||_1
            double B = 0.0;  // (1/T) sum ||grad F(x_t)||_2
            std::vector<double> grad_l2;
            std::vector<double> u_mean;
            bool diverged = false;
        };
        std::vector<SeedData> data(ns);
        core::parallel_for(static_cast<std::int64_t>(ns), config.threads, [&](std::int64_t si) {
            optimizer::RunOptions opts;
            opts.T = T;
            opts.form = config.form;
            opts.divergence_cap = config.divergence_cap;
            core::RngStream rng =
                cell_stream(config.seeds[static_cast<std::size_t>(si)],
                            static_cast<std::uint64_t>(T),
                            (static_cast<std::uint64_t>(ti + 1) << 52) +
                                static_cast<std::uint64_t>(si));
            SeedData& sd = data[static_cast<std::size_t>(si)];
            try {
                optimizer::Trajectory traj = optimizer::run(problem, params, opts, rng);
                sd.A = mean_of(traj.u_dot_grad_l1);
                long double b = 0.0L;
                sd.grad_l2.reserve(traj.rows.size());
                sd.u_mean.reserve(traj.rows.size());
                for (const optimizer::TrajectoryRow& row : traj.rows) {
                    b += row.grad_l2;
                    sd.grad_l2.push_back(row.grad_l2);
                    sd.u_mean.push_back(row.u_mean);
                }
                sd.B = static_cast<double>(b / traj.rows.size());
            } catch (const DivergenceError&) {
                sd.diverged = true;
            }
        });
        for (const SeedData& sd : data) {
            if (sd.diverged) {
                throw DivergenceError("audit run diverged at T = " + std::to_string(T), -1);
            }
        }

        // E-form inputs: per-step means across seeds
        std::vector<double> mean_grad(static_cast<std::size_t>(T), 0.0);
        double v_bar = std::numeric_limits<double>::infinity();
        for (std::int64_t t = 0; t < T; ++t) {
            long double g = 0.0L, u = 0.0L;
            for (const SeedData& sd : data) {
                g += sd.grad_l2[static_cast<std::size_t>(t)];
                u += sd.u_mean[static_cast<std::size_t>(t)];
            }
            mean_grad[static_cast<std::size_t>(t)] = static_cast<double>(g / ns);
            v_bar = std::min(v_bar, static_cast<double>(u / ns));
        }
        const double C0 = diagnostics::check_condition1(mean_grad).C0;

        const double bracket =
            gamma * R * R * d * consts.q * consts.L1 / 2.0 +
            2.0 * C0 * R * std::sqrt(static_cast<double>(d)) * consts.sigma1 *
                std::sqrt(consts.p * one_minus_beta1) +
            2.0 * gamma * R * R * d * consts.q * consts.L1 / one_minus_beta1;

        core::SampleStats lhs_stats;
        for (const SeedData& sd : data) lhs_stats.push(sd.A - bracket * sd.B);
        const double lhs = lhs_stats.mean();
        const double lhs_se =
            ns > 1 ? std::sqrt(lhs_stats.variance() / static_cast<double>(ns)) : 0.0;

        nlohmann::ordered_json readings = nlohmann::ordered_json::array();
        for (schedules::SigmaHatReading reading :
             {schedules::SigmaHatReading::stated, schedules::SigmaHatReading::proof}) {
            schedules::OracleConstants c = consts;
            c.C0 = C0;
            c.L_hat = consts.L_hat * config.lhat_scale;
            c.sigma_hat = schedules::sigma_hat(problem.noise.sigma0, problem.noise.sigma1,
                                               problem.noise.p, reading);
            double rhs = schedules::theorem_rhs_at(c, R, d, T, gamma, one_minus_beta1,
                                                   grad_norm_x0);
            bool holds = lhs - 3.0 * lhs_se <= rhs;
            all_hold = all_hold && holds;
            readings.push_back(
                {{"reading", reading == schedules::SigmaHatReading::stated ? "stated" : "proof"},
                 {"sigma_hat", c.sigma_hat},
                 {"rhs", rhs},
                 {"holds", holds},
                 {"slack", rhs - lhs}});
        }

        entries.push_back({{"T", T},
                           {"gamma", gamma},
                           {"beta1", params.beta1},
                           {"beta2", params.beta2},
                           {"R", R},
                           {"C0", C0},
                           {"v_bar_empirical", v_bar},
                           {"bracket_coefficient", bracket},
                           {"lhs_mean", lhs},
                           {"lhs_stderr", lhs_se},
                           {"readings", readings}});
    }

    nlohmann::ordered_json out;
    out["problem"] = config.problem.kind;
    out["d"] = d;
    out["seed_count"] = ns;
    out["lhat_scale"] = config.lhat_scale;
    out["lhs_note"] = "exact gradients only; the noisy oracle never enters the estimator";
    out["entries"] = entries;
    out["pass"] = all_hold;
    return out;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << contents;
    if (!out) throw ConfigError("write failed: " + path);
}

void write_json_file(const std::string& path, const nlohmann::ordered_json& value) {
    write_text_file(path, value.dump(2) + "\n");
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const nlohmann::ordered_json& resolved_config) {
    nlohmann::ordered_json manifest;
    manifest["command"] = command;
    manifest["version"] = kVersion;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(core::fnv1a64(resolved_config.dump())));
    manifest["config_hash"] = hex;
    manifest["config"] = resolved_config;
    write_json_file(out_dir + "/run-manifest.json", manifest);
}

std::vector<double> read_csv_column(const std::string& path, const std::string& column) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty CSV: " + path);
    std::vector<std::string> header;
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
    auto it = std::find(header.begin(), header.end(), column);
    if (it == header.end()) throw ConfigError("column '" + column + "' not found in " + path);
    const std::size_t target = static_cast<std::size_t>(it - header.begin());
    std::vector<double> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::size_t i = 0;
        std::string value;
        while (std::getline(ls, value, ',')) {
            if (i == target) {
                out.push_back(std::strtod(value.c_str(), nullptr));
                break;
            }
            ++i;
        }
    }
    return out;
}

std::vector<std::pair<std::int64_t, core::Vector>> read_dump_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty CSV: " + path);
    std::vector<std::pair<std::int64_t, core::Vector>> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string value;
        std::getline(ls, value, ',');
        std::int64_t step = std::strtoll(value.c_str(), nullptr, 10);
        core::Vector row;
        while (std::getline(ls, value, ',')) row.push_back(std::strtod(value.c_str(), nullptr));
        out.emplace_back(step, std::move(row));
    }
    return out;
}

}  // namespace harness
}  // namespace optlab
