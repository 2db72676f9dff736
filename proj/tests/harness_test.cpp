#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "optlab/harness.hpp"

#include <doctest.h>

using namespace optlab;

namespace {

harness::ExperimentConfig quartic_config() {
    harness::ExperimentConfig cfg;
    cfg.problem.kind = "quartic";
    cfg.problem.d = 4;
    cfg.problem.sigma0 = 1.0;
    return cfg;
}

std::filesystem::path scratch_dir(const char* tag) {
    std::filesystem::path p = std::filesystem::temp_directory_path() /
                              (std::string("optlab-test-") + tag);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("harness") {
    TEST_CASE("log-log fit recovers an exact power law") {
        std::vector<std::pair<double, double>> pts;
        for (double x : {10.0, 100.0, 1000.0, 10000.0}) pts.emplace_back(x, 3.0 / std::sqrt(x));
        harness::RateFit fit = harness::fit_loglog(pts);
        CHECK(fit.slope == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
        CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fit.per_T_points.size() == 4);
    }

    TEST_CASE("log-log fit rejects unusable inputs") {
        CHECK_THROWS_AS(harness::fit_loglog({{10.0, 1.0}}), ConfigError);
        CHECK_THROWS_AS(harness::fit_loglog({{-1.0, 1.0}, {2.0, 1.0}}), ConfigError);
        CHECK_THROWS_AS(harness::fit_loglog({{5.0, 1.0}, {5.0, 2.0}}), ConfigError);
    }

    TEST_CASE("cell streams are deterministic and distinct") {
        CHECK(harness::cell_stream(1, 1024, 7).next_u64() ==
              harness::cell_stream(1, 1024, 7).next_u64());
        CHECK(harness::cell_stream(1, 1024, 7).next_u64() !=
              harness::cell_stream(1, 1024, 8).next_u64());
        CHECK(harness::cell_stream(1, 1024, 7).next_u64() !=
              harness::cell_stream(1, 2048, 7).next_u64());
        CHECK(harness::cell_stream(2, 1024, 7).next_u64() !=
              harness::cell_stream(1, 1024, 7).next_u64());
    }

    TEST_CASE("constant-parameter path copies the config") {
        harness::ExperimentConfig cfg = quartic_config();
        cfg.beta1 = 0.8;
        cfg.beta2 = 0.95;
        cfg.epsilon = 1e-6;
        cfg.lr = 0.25;
        problems::Problem p = problems::make_problem(cfg.problem);
        optimizer::AdamParams params = harness::make_params(cfg, p, 100);
        CHECK(params.beta1 == 0.8);
        CHECK(params.beta2 == 0.95);
        CHECK(params.epsilon == 1e-6);
        CHECK(params.lr(0) == 0.25);
        CHECK_FALSE(params.theory_mode);
    }

    TEST_CASE("scheduled path applies the horizon formulas") {
        harness::ExperimentConfig cfg = quartic_config();
        cfg.scheduled = true;
        cfg.C2 = 2.0;
        cfg.C3 = 2.0;
        problems::Problem p = problems::make_problem(cfg.problem);
        optimizer::AdamParams params = harness::make_params(cfg, p, 16);
        // gamma = C2 / (T^{3/4} sqrt(d)) = 2 / (8 * 2), 1 - beta1 = C3 / sqrt(T)
        CHECK(params.lr(0) == doctest::Approx(0.125));
        CHECK(params.lr(15) == doctest::Approx(0.125));
        CHECK(params.beta1 == doctest::Approx(0.5));
        CHECK(params.beta2 == doctest::Approx(0.5));
        CHECK(params.theory_mode);

        cfg.beta2_override = 0.9;
        params = harness::make_params(cfg, p, 16);
        CHECK(params.beta2 == doctest::Approx(0.9));
        CHECK(params.beta1 == doctest::Approx(0.5));
    }

    TEST_CASE("schedule constants: explicit values win, derivation needs the pairing") {
        harness::ExperimentConfig cfg = quartic_config();
        cfg.scheduled = true;
        cfg.C2 = 4.0;
        cfg.C3 = 5.0;
        problems::Problem p = problems::make_problem(cfg.problem);
        auto [c2, c3] = harness::resolve_schedule_constants(cfg, p);
        CHECK(c2 == 4.0);
        CHECK(c3 == 5.0);

        cfg.C2 = 0.0;
        cfg.C3 = 0.0;
        auto [d2, d3] = harness::resolve_schedule_constants(cfg, p);
        schedules::OracleConstants consts = harness::certificate_constants(cfg, p);
        auto [e2, e3] = schedules::oracle_constants(consts, 1.0);
        CHECK(d2 == e2);
        CHECK(d3 == e3);

        cfg.mode = schedules::Mode::general_case1;
        CHECK_THROWS_AS(harness::resolve_schedule_constants(cfg, p), ConfigError);
        cfg.mode = schedules::Mode::oracle_case2;
        cfg.beta2_override = 0.999;
        CHECK_THROWS_AS(harness::resolve_schedule_constants(cfg, p), ConfigError);
    }

    TEST_CASE("certificate constants come from the problem") {
        harness::ExperimentConfig cfg = quartic_config();
        cfg.problem.sigma0 = 0.5;
        cfg.problem.sigma1 = 0.5;
        cfg.problem.p = 2.0;
        problems::Problem p = problems::make_problem(cfg.problem);
        schedules::OracleConstants consts = harness::certificate_constants(cfg, p);
        CHECK(consts.F0_minus_Fstar == doctest::Approx(4.0));
        CHECK(consts.L_hat == doctest::Approx(p.smoothness.l_hat()));
        // at p = 2 both sigma-hat readings collapse to sigma0
        CHECK(consts.sigma_hat == doctest::Approx(0.5));
        CHECK(consts.q == doctest::Approx(2.0 / 3.0));
        CHECK(consts.sigma1 == 0.5);
        CHECK(consts.p == 2.0);

        harness::ExperimentConfig bad = cfg;
        bad.problem.kind = "rosenbrock_like";
        problems::Problem rb = problems::make_problem(bad.problem);
        CHECK_THROWS_AS(harness::certificate_constants(bad, rb), ConfigError);
    }

    TEST_CASE("run_cell is deterministic per (seed, T, cell)") {
        harness::ExperimentConfig cfg = quartic_config();
        cfg.lr = 0.01;
        problems::Problem p = problems::make_problem(cfg.problem);
        harness::RunSummary a = harness::run_cell(cfg, p, 64, 3, 11);
        harness::RunSummary b = harness::run_cell(cfg, p, 64, 3, 11);
        CHECK(a.metric == b.metric);
        CHECK_FALSE(a.diverged);
        harness::RunSummary c = harness::run_cell(cfg, p, 64, 3, 12);
        CHECK(a.metric != c.metric);

        cfg.lr = 1e30;
        cfg.divergence_cap = 1e10;
        harness::RunSummary boom = harness::run_cell(cfg, p, 64, 3, 11);
        CHECK(boom.diverged);
    }

    TEST_CASE("rate estimation validates its grid up front") {
        harness::ExperimentConfig cfg = quartic_config();
        cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8};

        cfg.T_grid = {64, 128};
        CHECK_THROWS_AS(harness::estimate_rate(cfg), ConfigError);

        cfg.T_grid = {64, 32, 128, 256, 4096};
        CHECK_THROWS_AS(harness::estimate_rate(cfg), ConfigError);

        cfg.T_grid = {64, 128, 256, 512};  // only an 8x span
        CHECK_THROWS_AS(harness::estimate_rate(cfg), ConfigError);

        cfg.T_grid = {4, 16, 64, 256};
        cfg.seeds = {1, 2, 3};
        CHECK_THROWS_AS(harness::estimate_rate(cfg), ConfigError);
    }

    TEST_CASE("rate estimation fits a decreasing metric on a small grid") {
        harness::ExperimentConfig cfg;
        cfg.problem.kind = "quadratic";
        cfg.problem.d = 2;
        cfg.problem.sigma0 = 0.1;
        cfg.lr = 0.05;
        cfg.T_grid = {4, 16, 64, 256};
        cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8};
        cfg.threads = 2;
        harness::RateFit fit = harness::estimate_rate(cfg);
        CHECK(fit.total_runs == 32);
        CHECK(fit.diverged == 0);
        CHECK(fit.slope < 0.0);
        CHECK(fit.per_T_points.size() == 4);
    }

    TEST_CASE("CSV readers invert the trajectory writers") {
        problems::ProblemSpec spec;
        spec.kind = "quadratic";
        spec.d = 3;
        spec.sigma0 = 0.5;
        problems::Problem p = problems::make_problem(spec);
        optimizer::AdamParams params;
        params.lr = optimizer::constant_lr(0.05);
        optimizer::RunOptions opts;
        opts.T = 20;
        opts.u_dump_every = 5;
        core::RngStream rng(31, 0);
        optimizer::Trajectory traj = optimizer::run(p, params, opts, rng);

        std::filesystem::path dir = scratch_dir("csv-roundtrip");
        std::string traj_path = (dir / "trajectory.csv").string();
        std::string dump_path = (dir / "u_dump.csv").string();
        optimizer::write_trajectory_csv(traj, traj_path);
        optimizer::write_u_dump_csv(traj, dump_path);

        std::vector<double> grad_l2 = harness::read_csv_column(traj_path, "grad_l2");
        REQUIRE(grad_l2.size() == traj.rows.size());
        for (std::size_t i = 0; i < grad_l2.size(); ++i) {
            CHECK(grad_l2[i] == traj.rows[i].grad_l2);
        }

        auto dumps = harness::read_dump_csv(dump_path);
        REQUIRE(dumps.size() == traj.u_dumps.size());
        for (std::size_t i = 0; i < dumps.size(); ++i) {
            CHECK(dumps[i].first == traj.u_dumps[i].first);
            REQUIRE(dumps[i].second.size() == traj.u_dumps[i].second.size());
            for (std::size_t j = 0; j < dumps[i].second.size(); ++j) {
                CHECK(dumps[i].second[j] == traj.u_dumps[i].second[j]);
            }
        }

        CHECK_THROWS_AS(harness::read_csv_column(traj_path, "no_such_column"), ConfigError);
        CHECK_THROWS_AS(harness::read_csv_column((dir / "missing.csv").string(), "step"),
                        ConfigError);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("run manifest is byte-stable for a fixed config") {
        std::filesystem::path dir_a = scratch_dir("manifest-a");
        std::filesystem::path dir_b = scratch_dir("manifest-b");
        nlohmann::ordered_json cfg;
        cfg["problem"] = {{"kind", "quadratic"}, {"d", 4}};
        cfg["seed"] = 7;
        harness::write_run_manifest(dir_a.string(), "run", cfg);
        harness::write_run_manifest(dir_b.string(), "run", cfg);
        std::string a = slurp(dir_a / "run-manifest.json");
        CHECK(a == slurp(dir_b / "run-manifest.json"));

        nlohmann::ordered_json parsed = nlohmann::ordered_json::parse(a);
        CHECK(parsed["command"] == "run");
        CHECK(parsed["version"] == harness::kVersion);
        CHECK(parsed["config"]["seed"] == 7);
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(core::fnv1a64(cfg.dump())));
        CHECK(parsed["config_hash"] == hex);
        std::filesystem::remove_all(dir_a);
        std::filesystem::remove_all(dir_b);
    }
}
