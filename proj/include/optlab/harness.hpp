#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "optlab/core.hpp"
#include "optlab/optimizer.hpp"
#include "optlab/problems.hpp"
#include "optlab/schedules.hpp"

#include <json.hpp>

namespace optlab {
namespace harness {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentConfig {
    problems::ProblemSpec problem;

    // constant-parameter path (scheduled == false)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool bias_correction = false;
    double lr = 0.01;

    // schedule path: gamma = C2 / (T^{3/4} sqrt(d)), 1 - beta1 = C3 / sqrt(T)
    bool scheduled = false;
    schedules::Mode mode = schedules::Mode::oracle_case2;
    double C2 = 0.0;  // 0 with oracle_case2 = derive from problem certificates
    double C3 = 0.0;
    double beta2_override = -1.0;  // < 0 pairs beta2 = beta1(T), making R = 1
    schedules::SigmaHatReading reading = schedules::SigmaHatReading::proof;
    double v_bar = 1.0;  // a-priori estimate used only for min_T warnings

    optimizer::Form form = optimizer::Form::preconditioned;
    std::int64_t T = 0;  // single-run horizon (run/ablate/sweep subcommands)
    std::vector<std::int64_t> T_grid;
    std::vector<std::uint64_t> seeds;

    // dimension sweep family: x0_fill and sigma0 rescale as d^exponent so one
    // spec replicates into a comparable problem at every grid dimension
    std::vector<std::int64_t> d_grid;
    std::vector<double> gamma_grid;
    std::vector<double> epsilon_grid{1e-12, 1e-8, 1e-4};
    double x0_dim_exponent = -0.25;
    double sigma0_dim_exponent = 0.0;

    std::string out_dir = ".";
    int threads = 1;
    std::int64_t u_dump_every = 0;
    double divergence_cap = 1e12;
    double lhat_scale = 1.0;  // audit negative-control knob
};

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> per_T_points;  // (T, metric)
    int diverged = 0;
    int total_runs = 0;
};

// least-squares line through (log x, log y)
RateFit fit_loglog(const std::vector<std::pair<double, double>>& points);

// deterministic per-cell stream: same results for any thread count
core::RngStream cell_stream(std::uint64_t seed, std::uint64_t T, std::uint64_t cell);

struct RunSummary {
    double metric = 0.0;  // (1/T) sum_t ||grad F(x_t)||_2, exact gradients
    bool diverged = false;
};

// scheduled or constant-parameter Adam run reduced to the running-average
// gradient-norm metric
RunSummary run_cell(const ExperimentConfig& config, const problems::Problem& problem,
                    std::int64_t T, std::uint64_t seed, std::uint64_t cell_tag);

// resolves (C2, C3): explicit values win, otherwise derived from the problem
// certificates via oracle_constants (requires the beta2 = beta1 pairing)
std::pair<double, double> resolve_schedule_constants(const ExperimentConfig& config,
                                                     const problems::Problem& problem);

// Adam parameters for one run at horizon T, scheduled or constant
optimizer::AdamParams make_params(const ExperimentConfig& config,
                                  const problems::Problem& problem, std::int64_t T);

RateFit estimate_rate(const ExperimentConfig& config);

nlohmann::ordered_json rate_report(const ExperimentConfig& config);

nlohmann::ordered_json momentum_ablation(const ExperimentConfig& config);

nlohmann::ordered_json dimension_sweep(const ExperimentConfig& config,
                                       const std::vector<std::int64_t>& d_grid);

nlohmann::ordered_json audit_theorem_bound(const ExperimentConfig& config,
                                           const schedules::OracleConstants& consts);

// fills OracleConstants from the problem certificates (C0, C1 start at 1 and
// are replaced by measured values inside the audit)
schedules::OracleConstants certificate_constants(const ExperimentConfig& config,
                                                 const problems::Problem& problem);

void write_text_file(const std::string& path, const std::string& contents);
void write_json_file(const std::string& path, const nlohmann::ordered_json& value);
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const nlohmann::ordered_json& resolved_config);

// CSV loaders for check-conditions (inverse of the optimizer CSV writers)
std::vector<double> read_csv_column(const std::string& path, const std::string& column);
std::vector<std::pair<std::int64_t, core::Vector>> read_dump_csv(const std::string& path);

int cli_main(int argc, const char* const* argv);

}  // namespace harness
}  // namespace optlab
