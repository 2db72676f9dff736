#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "optlab/core.hpp"
#include "optlab/problems.hpp"

#include <json.hpp>

namespace optlab {
namespace diagnostics {

struct Condition1Result {
    double C0 = 1.0;  // sqrt(mean of squared norms) / mean of norms
    bool degenerate = false;
};

// grad_norms are exact-gradient l2 norms along a trajectory.
Condition1Result check_condition1(const std::vector<double>& grad_norms);

struct Prop21Result {
    double ratio;  // (mean of t^{-2a}) / (mean of t^{-a})^2 over t = 1..T
    double bound;  // 2 (1-a)^2 / (1-2a)
    bool holds;
};

Prop21Result check_proposition21(double alpha, std::int64_t T);

// How the two KS groups are drawn from the coordinate pool. `split_halves`
// samples group A uniformly from the first half of the pool and group B from
// the second half, so a pool assembled from two different distributions is
// detected. `uniform` draws both groups uniformly from the whole pool, which
// is an exact permutation null (calibration check only; it cannot reject a
// mixed pool by construction).
enum class GroupPairing { split_halves, uniform };

struct Condition2Result {
    double mean_p = 0.0;
    double reject_rate = 0.0;  // fraction of trials with p < 0.05
    int trials = 0;
    int group_size = 0;
    GroupPairing pairing = GroupPairing::split_halves;
    bool skipped = false;  // pool too small for a meaningful group size
};

// u_dump rows are per-checkpoint coordinate vectors; they are concatenated in
// row order to form the pool.
Condition2Result check_condition2(const std::vector<core::Vector>& u_dump, int group_size,
                                  int trials, core::RngStream rng,
                                  GroupPairing pairing = GroupPairing::split_halves,
                                  int threads = 1);

struct Condition3Result {
    double C1 = 1.0;  // sqrt(d) ||grad||_2 / ||grad||_1
    bool degenerate = false;
};

Condition3Result check_condition3(const core::Vector& grad);

struct Lemma3Result {
    double lhs;        // E |Sign(Z) - Sign(C)|
    double rhs;        // 2 E |Z - C| / |C|
    double mc_stderr;  // standard error of the rhs - lhs estimator
    bool holds;        // lhs <= rhs + 3 stderr
};

Lemma3Result check_lemma3(const std::function<double(core::RngStream&)>& sampler, double C,
                          std::int64_t n, core::RngStream rng);

// Named scalar distributions (all with finite mean) used by the standard sweep.
std::vector<std::pair<std::string, std::function<double(core::RngStream&)>>>
lemma3_distribution_suite();

struct Lemma4Result {
    double x_plus;          // (a + b^{alpha/beta})^{1/alpha}
    double value_at_x;      // a/x^alpha + b/x^beta evaluated at x_plus
    bool holds_at_x;        // value_at_x <= 1
    bool half_violates;     // s_+/2 fails the inequality in s-space (s = x^alpha)
    bool max_term_bracket;  // s_+/2 <= max(a, b^{alpha/beta}) <= s_+
};

// Requires a, b > 0 and 0 < alpha < beta.
Lemma4Result check_lemma4(double a, double b, double alpha, double beta);

struct FitResult {
    double a = 0.0;         // L0 or sigma0
    double b = 0.0;         // L1 or sigma1
    double exponent = 0.0;  // q or p
    double residual = 0.0;  // mean envelope slack / weighted rms error
    std::string region;
    bool clamped = false;
    bool exponent_degenerate = false;
};

// Two-phase smoothness fit. The exponent q is a Theil-Sen slope through
// per-bin maxima of short-probe secant ratios in log-log space, sampled over
// an adaptive radial range; L0 and L1 then solve the envelope
// ratio <= L0 + L1 ||grad F(x)||^q over pair samples at the certificate's
// radius scale, subject to >= 99% coverage. exponent_degenerate reports
// whether the data pinned q down at all; a flat envelope can still set b = 0.
FitResult fit_smoothness(const problems::Problem& problem, int pairs, core::RngStream rng);

// Least-squares fit of V(x) = sigma0^2 + sigma1^2 ||grad F(x)||^p against
// Monte-Carlo variance estimates, relative-error weighted, grid
// p in {0, 0.25, ..., 2} plus one refinement pass around the best cell.
FitResult fit_variance(const problems::Problem& problem, int points, int draws_per_point,
                       core::RngStream rng);

// Descent-lemma and smoothness-envelope checks over random pairs drawn from
// the problem's certified region.
struct CertificateCheck {
    std::int64_t pairs = 0;
    std::int64_t descent_violations = 0;   // F(y) <= F(x) + <g, y-x> + (L(x)/2)||y-x||^2
    std::int64_t envelope_violations = 0;  // ||grad F(y) - grad F(x)|| <= L(x) ||y-x||
    double worst_descent_margin = 0.0;     // max of lhs - rhs (negative = slack everywhere)
    double worst_envelope_margin = 0.0;
};

CertificateCheck check_certificates(const problems::Problem& problem, std::int64_t pairs,
                                    core::RngStream rng);

struct ReportInputs {
    std::vector<double> grad_l2_series;          // condition 1 input
    std::vector<core::Vector> grad_checkpoints;  // condition 3 series
    std::vector<core::Vector> u_checkpoints;     // condition 2 pools
    int ks_group_size = 2000;
    int ks_trials = 200;
    double c0_pass_ratio = 0.1;   // pass when C0 <= ratio * sqrt(T)
    double ks_pass_mean_p = 0.2;  // pass when within-step mean p exceeds this
    double c1_pass_max = 3.0;     // pass when every C1 stays below this
    const problems::Problem* fit_problem = nullptr;  // enables the fits block
    int fit_pairs = 4000;
    int fit_points = 24;
    int fit_draws = 2000;
    int threads = 1;
};

struct ConditionReport {
    double C0 = 1.0;
    bool c0_degenerate = false;
    std::vector<double> C1_series;
    double C1_max = 1.0;
    bool c1_degenerate_any = false;
    double ks_mean_p = 1.0;  // within-step headline numbers
    double ks_reject_rate = 0.0;
    int ks_trials = 0;
    int ks_group_size = 0;
    Condition2Result within_step;
    Condition2Result across_steps;
    bool condition1_pass = true;
    bool condition2_pass = true;
    bool condition3_pass = true;
};

ConditionReport build_condition_report(const ReportInputs& in, core::RngStream rng);

// Standard lemma/proposition sweep entries: {name, lhs, rhs, holds}.
struct LemmaCheckEntry {
    std::string name;
    double lhs;
    double rhs;
    bool holds;
};

std::vector<LemmaCheckEntry> lemma_check_suite(core::RngStream rng);

// Assembles the JSON report:
// {condition1, condition2, condition3, lemma_checks, fits, verdicts}.
nlohmann::ordered_json diagnostics_report(const ReportInputs& in, core::RngStream rng);

}  // namespace diagnostics
}  // namespace optlab
