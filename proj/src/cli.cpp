#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "optlab/diagnostics.hpp"
#include "optlab/harness.hpp"

#include <CLI11.hpp>

namespace optlab {
namespace harness {

namespace {

optimizer::Form parse_form(const std::string& s) {
    if (s == "preconditioned") return optimizer::Form::preconditioned;
    if (s == "sign") return optimizer::Form::sign;
    throw ConfigError("unknown form '" + s + "' (expected preconditioned or sign)");
}

schedules::Mode parse_mode(const std::string& s) {
    if (s == "general_case1") return schedules::Mode::general_case1;
    if (s == "oracle_case2") return schedules::Mode::oracle_case2;
    if (s == "corollary32") return schedules::Mode::corollary32;
    throw ConfigError("unknown schedule mode '" + s + "'");
}

schedules::SigmaHatReading parse_reading(const std::string& s) {
    if (s == "stated") return schedules::SigmaHatReading::stated;
    if (s == "proof") return schedules::SigmaHatReading::proof;
    throw ConfigError("unknown sigma-hat reading '" + s + "' (expected stated or proof)");
}

// resolved options that feed the config hash; execution details (threads,
// out_dir) stay out so reruns compare byte-identical
nlohmann::ordered_json resolved_config_json(const ExperimentConfig& cfg, std::uint64_t base_seed,
                                            const std::string& form_str,
                                            const std::string& mode_str,
                                            const std::string& reading_str) {
    nlohmann::ordered_json j;
    j["problem"] = {{"kind", cfg.problem.kind},   {"d", cfg.problem.d},
                    {"lambda", cfg.problem.lambda}, {"sigma0", cfg.problem.sigma0},
                    {"sigma1", cfg.problem.sigma1}, {"p", cfg.problem.p},
                    {"x0_fill", cfg.problem.x0_fill}};
    j["run"] = {{"T", cfg.T},
                {"lr", cfg.lr},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"epsilon", cfg.epsilon},
                {"bias_correction", cfg.bias_correction},
                {"form", form_str},
                {"u_dump_every", cfg.u_dump_every},
                {"divergence_cap", cfg.divergence_cap}};
    j["schedule"] = {{"enabled", cfg.scheduled},
                     {"C2", cfg.C2},
                     {"C3", cfg.C3},
                     {"mode", mode_str},
                     {"beta2_override", cfg.beta2_override},
                     {"reading", reading_str},
                     {"v_bar", cfg.v_bar}};
    j["grid"] = {{"T", cfg.T_grid},
                 {"d", cfg.d_grid},
                 {"gamma", cfg.gamma_grid},
                 {"epsilon", cfg.epsilon_grid},
                 {"x0_dim_exponent", cfg.x0_dim_exponent},
                 {"sigma0_dim_exponent", cfg.sigma0_dim_exponent}};
    j["audit"] = {{"lhat_scale", cfg.lhat_scale}};
    j["seed"] = base_seed;
    j["seeds"] = cfg.seeds;
    return j;
}

// Lemma 2 style checks for the verify-lemmas suite: the R formula brackets
// and a Monte-Carlo max-u probe against exogenous gradient sequences.
void append_lemma2_entries(std::vector<diagnostics::LemmaCheckEntry>& entries,
                           core::RngStream rng) {
    double min_R = std::numeric_limits<double>::infinity();
    double max_upper_ratio = 0.0;
    for (int i = 0; i < 50; ++i) {
        double b1 = i / 50.0;
        double b2 = b1 + 0.5 * (1.0 - b1);
        double R = schedules::compute_R(b1, b2);
        min_R = std::min(min_R, R);
        max_upper_ratio = std::max(max_upper_ratio, R / std::sqrt((1.0 - b1) / (1.0 - b2)));
    }
    entries.push_back({"lemma2 R >= 1 on 50-point grid", 1.0, min_R, min_R >= 1.0 - 1e-12});
    entries.push_back({"lemma2 R <= sqrt((1-b1)/(1-b2)) when b1 <= b2 on 50-point grid",
                       max_upper_ratio, 1.0, max_upper_ratio <= 1.0 + 1e-12});

    const std::pair<double, double> pairs[] = {
        {0.9, 0.999}, {0.9, 0.9},  {0.0, 0.5},    {0.99, 0.999}, {0.5, 0.5},
        {0.8, 0.7},   {0.3, 0.95}, {0.95, 0.925}, {0.1, 0.1},    {0.6, 0.9},
    };
    double max_ratio = 0.0;
    int pair_idx = 0;
    for (auto [b1, b2] : pairs) {
        core::RngStream pair_rng = rng.split(static_cast<std::uint64_t>(pair_idx++));
        double R = schedules::compute_R(b1, b2);
        optimizer::AdamParams params;
        params.beta1 = b1;
        params.beta2 = b2;
        params.epsilon = 1e-12;
        params.lr = optimizer::constant_lr(0.0);
        for (int seq = 0; seq < 400; ++seq) {
            optimizer::AdamState state(1);
            core::Vector x(1, 0.0);
            for (int t = 0; t < 30; ++t) {
                double g;
                double u01 = pair_rng.next_uniform();
                if (u01 < 0.1) {
                    g = 0.0;
                } else if (u01 < 0.5) {
                    g = pair_rng.next_normal();
                } else if (u01 < 0.8) {
                    g = std::exp(3.0 * pair_rng.next_normal()) *
                        (pair_rng.next_u64() & 1 ? 1.0 : -1.0);
                } else {
                    g = (t % 2 ? 1.0 : -1.0) * 1e6;
                }
                optimizer::StepRecord rec =
                    optimizer::step_sign_form(state, params, core::Vector{g}, x);
                max_ratio = std::max(max_ratio, rec.u_coords[0] / R);
            }
        }
    }
    entries.push_back({"lemma2 max u/R over 10 (b1,b2) pairs x 400 sequences", max_ratio, 1.0,
                       max_ratio <= 1.0 + 1e-12});
}

struct CheckConditionsOptions {
    std::string in_dir;
    bool no_fits = false;
    int ks_group_size = 2000;
    int ks_trials = 200;
};

int run_single(const ExperimentConfig& cfg, std::uint64_t base_seed) {
    if (cfg.T < 1) throw ConfigError("run needs T >= 1 (set [run] T)");
    problems::Problem problem = problems::make_problem(cfg.problem);
    optimizer::AdamParams params = make_params(cfg, problem, cfg.T);
    optimizer::RunOptions opts;
    opts.T = cfg.T;
    opts.form = cfg.form;
    opts.divergence_cap = cfg.divergence_cap;
    opts.u_dump_every = cfg.u_dump_every > 0 ? cfg.u_dump_every : std::max<std::int64_t>(1, cfg.T / 64);
    core::RngStream rng = cell_stream(base_seed, static_cast<std::uint64_t>(cfg.T), 0);
    optimizer::Trajectory traj = optimizer::run(problem, params, opts, rng);
    optimizer::write_trajectory_csv(traj, cfg.out_dir + "/trajectory.csv");
    optimizer::write_u_dump_csv(traj, cfg.out_dir + "/u_dump.csv");
    optimizer::write_grad_dump_csv(traj, cfg.out_dir + "/grad_dump.csv");
    std::printf("run: T=%lld final_loss=%s metric_files=%s\n",
                static_cast<long long>(cfg.T), core::format_double(traj.final_loss).c_str(),
                (cfg.out_dir + "/{trajectory,u_dump,grad_dump}.csv").c_str());
    return 0;
}

int run_check_conditions(const ExperimentConfig& cfg, std::uint64_t base_seed,
                         const CheckConditionsOptions& opts) {
    const std::string dir = opts.in_dir.empty() ? cfg.out_dir : opts.in_dir;
    diagnostics::ReportInputs inputs;
    inputs.grad_l2_series = read_csv_column(dir + "/trajectory.csv", "grad_l2");
    for (auto& [step, row] : read_dump_csv(dir + "/grad_dump.csv")) {
        inputs.grad_checkpoints.push_back(std::move(row));
    }
    for (auto& [step, row] : read_dump_csv(dir + "/u_dump.csv")) {
        inputs.u_checkpoints.push_back(std::move(row));
    }
    inputs.ks_group_size = opts.ks_group_size;
    inputs.ks_trials = opts.ks_trials;
    inputs.threads = cfg.threads;
    problems::Problem problem;
    if (!opts.no_fits) {
        problem = problems::make_problem(cfg.problem);
        inputs.fit_problem = &problem;
    }
    nlohmann::ordered_json report =
        diagnostics::diagnostics_report(inputs, core::RngStream(base_seed, 0xC0DD5));
    write_json_file(cfg.out_dir + "/conditions.json", report);
    bool pass = true;
    for (const auto& [key, value] : report["verdicts"].items()) pass = pass && value.get<bool>();
    std::printf("check-conditions: %s (report: %s)\n", pass ? "pass" : "FAIL",
                (cfg.out_dir + "/conditions.json").c_str());
    return pass ? 0 : 1;
}

int run_verify_lemmas(const ExperimentConfig& cfg, std::uint64_t base_seed) {
    core::RngStream rng(base_seed, 0x1E77A5);
    std::vector<diagnostics::LemmaCheckEntry> entries = diagnostics::lemma_check_suite(rng.split(1));
    append_lemma2_entries(entries, rng.split(2));
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    bool all_hold = true;
    for (const auto& e : entries) {
        checks.push_back({{"name", e.name}, {"lhs", e.lhs}, {"rhs", e.rhs}, {"holds", e.holds}});
        all_hold = all_hold && e.holds;
    }
    nlohmann::ordered_json out;
    out["seed"] = base_seed;
    out["lemma_checks"] = checks;
    out["all_hold"] = all_hold;
    write_json_file(cfg.out_dir + "/lemmas.json", out);
    std::printf("verify-lemmas: %zu checks, %s\n", entries.size(),
                all_hold ? "all hold" : "VIOLATIONS FOUND");
    return all_hold ? 0 : 1;
}

int run_rate(const ExperimentConfig& cfg) {
    nlohmann::ordered_json report = rate_report(cfg);
    write_json_file(cfg.out_dir + "/rate.json", report);
    std::string csv = "T,metric\n";
    for (const auto& point : report["points"]) {
        csv += core::format_double(point["T"].get<double>()) + "," +
               core::format_double(point["metric"].get<double>()) + "\n";
    }
    write_text_file(cfg.out_dir + "/rate_points.csv", csv);
    std::printf("rate: slope=%s r2=%s over %zu T values\n",
                core::format_double(report["slope"].get<double>()).c_str(),
                core::format_double(report["r_squared"].get<double>()).c_str(),
                report["points"].size());
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"numerical laboratory for preconditioned and sign-like adaptive optimization"};
    app.require_subcommand(1);
    app.fallthrough();

    ExperimentConfig cfg;
    std::uint64_t base_seed = 1;
    int seed_count = 8;
    std::string form_str = "preconditioned";
    std::string mode_str = "oracle_case2";
    std::string reading_str = "proof";
    std::vector<std::uint64_t> explicit_seeds;

    app.set_config("--config", "",
                   "TOML-style configuration file; keys mirror the long option names "
                   "(problem.kind, run.T, grid.T, ...)");
    // keep dotted keys intact so `problem.kind` in a file binds the option of
    // the same name instead of being split into a section path
    app.get_config_formatter_base()->parentSeparator(':');
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.add_option("--seed", base_seed, "base RNG seed");
    app.add_option("--seed-count", seed_count, "number of seeds (base, base+1, ...)");
    app.add_option("--seeds", explicit_seeds, "explicit seed list (overrides --seed/--seed-count)");
    app.add_option("--out-dir", cfg.out_dir, "output directory");
    app.add_option("--threads", cfg.threads, "worker threads");

    app.add_option("--problem.kind", cfg.problem.kind, "quadratic|quartic|rosenbrock_like|logsumexp");
    app.add_option("--problem.d", cfg.problem.d, "dimension");
    app.add_option("--problem.lambda", cfg.problem.lambda, "quadratic curvature");
    app.add_option("--problem.sigma0", cfg.problem.sigma0, "additive noise scale");
    app.add_option("--problem.sigma1", cfg.problem.sigma1, "gradient-coupled noise scale");
    app.add_option("--problem.p", cfg.problem.p, "noise growth exponent in [0,2]");
    app.add_option("--problem.x0_fill", cfg.problem.x0_fill, "initial coordinate value");

    app.add_option("--run.T", cfg.T, "horizon for single runs");
    app.add_option("--run.lr", cfg.lr, "constant learning rate");
    app.add_option("--run.beta1", cfg.beta1, "momentum beta1");
    app.add_option("--run.beta2", cfg.beta2, "second-moment beta2");
    app.add_option("--run.epsilon", cfg.epsilon, "denominator epsilon");
    app.add_flag("--run.bias_correction", cfg.bias_correction, "enable bias correction");
    app.add_option("--run.form", form_str, "preconditioned|sign");
    app.add_option("--run.u_dump_every", cfg.u_dump_every, "checkpoint stride for u/grad dumps");
    app.add_option("--run.divergence_cap", cfg.divergence_cap, "divergence threshold");

    app.add_flag("--schedule.enabled", cfg.scheduled, "use the T-dependent schedule");
    app.add_option("--schedule.C2", cfg.C2, "lr constant (0 = derive from certificates)");
    app.add_option("--schedule.C3", cfg.C3, "momentum constant (0 = derive)");
    app.add_option("--schedule.mode", mode_str, "general_case1|oracle_case2|corollary32");
    app.add_option("--schedule.beta2_override", cfg.beta2_override,
                   "fixed beta2 (< 0 pairs beta2 = beta1)");
    app.add_option("--schedule.reading", reading_str, "sigma-hat reading: stated|proof");
    app.add_option("--schedule.v_bar", cfg.v_bar, "lower bound estimate for min_T warnings");

    app.add_option("--grid.T", cfg.T_grid, "T grid");
    app.add_option("--grid.d", cfg.d_grid, "dimension grid");
    app.add_option("--grid.gamma", cfg.gamma_grid, "constant-lr grid for the dimension sweep");
    app.add_option("--grid.epsilon", cfg.epsilon_grid, "epsilon grid");
    app.add_option("--grid.x0_dim_exponent", cfg.x0_dim_exponent, "x0_fill ~ d^this in sweeps");
    app.add_option("--grid.sigma0_dim_exponent", cfg.sigma0_dim_exponent, "sigma0 ~ d^this in sweeps");

    app.add_option("--audit.lhat_scale", cfg.lhat_scale, "L-hat mis-set factor (negative control)");

    CLI::App* sub_run = app.add_subcommand("run", "single trajectory to CSV");
    CLI::App* sub_rate = app.add_subcommand("rate", "convergence-rate fit over the T grid");
    CLI::App* sub_ablate = app.add_subcommand("ablate-momentum", "signSGD floor vs scheduled runs");
    CLI::App* sub_sweep = app.add_subcommand("sweep-dim", "best-gamma scaling and epsilon sweep");
    CLI::App* sub_audit = app.add_subcommand("audit-bound", "descent-bound audit with error bars");
    CheckConditionsOptions cc;
    CLI::App* sub_check = app.add_subcommand("check-conditions", "diagnostics on a trajectory dump");
    sub_check->add_option("--in-dir", cc.in_dir, "directory with trajectory/u/grad CSVs");
    sub_check->add_flag("--no-fits", cc.no_fits, "skip smoothness/variance fitting");
    sub_check->add_option("--ks-group-size", cc.ks_group_size, "KS group size");
    sub_check->add_option("--ks-trials", cc.ks_trials, "KS trials");
    CLI::App* sub_lemmas = app.add_subcommand("verify-lemmas", "lemma and proposition suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        cfg.form = parse_form(form_str);
        cfg.mode = parse_mode(mode_str);
        cfg.reading = parse_reading(reading_str);
        if (cfg.threads < 1) throw ConfigError("--threads must be >= 1");
        if (!explicit_seeds.empty()) {
            cfg.seeds = explicit_seeds;
        } else {
            if (seed_count < 1) throw ConfigError("--seed-count must be >= 1");
            for (int i = 0; i < seed_count; ++i) {
                cfg.seeds.push_back(base_seed + static_cast<std::uint64_t>(i));
            }
        }
        std::filesystem::create_directories(cfg.out_dir);

        const std::string command = app.get_subcommands().front()->get_name();
        write_run_manifest(cfg.out_dir, command,
                           resolved_config_json(cfg, base_seed, form_str, mode_str, reading_str));

        if (sub_run->parsed()) return run_single(cfg, base_seed);
        if (sub_rate->parsed()) return run_rate(cfg);
        if (sub_ablate->parsed()) {
            nlohmann::ordered_json report = momentum_ablation(cfg);
            write_json_file(cfg.out_dir + "/ablation.json", report);
            std::printf("ablate-momentum: %s\n", report["pass"].get<bool>() ? "pass" : "FAIL");
            return report["pass"].get<bool>() ? 0 : 1;
        }
        if (sub_sweep->parsed()) {
            nlohmann::ordered_json report = dimension_sweep(cfg, cfg.d_grid);
            write_json_file(cfg.out_dir + "/dimension_sweep.json", report);
            std::printf("sweep-dim: slope=%s %s\n",
                        core::format_double(report["gamma_slope"].get<double>()).c_str(),
                        report["pass"].get<bool>() ? "pass" : "FAIL");
            return report["pass"].get<bool>() ? 0 : 1;
        }
        if (sub_audit->parsed()) {
            problems::Problem problem = problems::make_problem(cfg.problem);
            schedules::OracleConstants consts = certificate_constants(cfg, problem);
            nlohmann::ordered_json report = audit_theorem_bound(cfg, consts);
            write_json_file(cfg.out_dir + "/audit.json", report);
            std::printf("audit-bound: %s\n", report["pass"].get<bool>() ? "pass" : "FAIL");
            return report["pass"].get<bool>() ? 0 : 1;
        }
        if (sub_check->parsed()) return run_check_conditions(cfg, base_seed, cc);
        if (sub_lemmas->parsed()) return run_verify_lemmas(cfg, base_seed);
        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "check failure: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace harness
}  // namespace optlab
