#pragma once

#include <cstdint>
#include <utility>

#include "optlab/core.hpp"

namespace optlab {
namespace schedules {

enum class Mode { general_case1, oracle_case2, corollary32 };

// The aggregated noise constant sigma_hat appears in two forms: the theorem
// statement prints sigma0 + sqrt((2-p)/2) with no sigma1 factor, the proof
// derives sigma0 + sqrt((2-p)/2) * sigma1. Both are computed and audits report
// under each.
enum class SigmaHatReading { stated, proof };

double sigma_hat(double sigma0, double sigma1, double p, SigmaHatReading reading);
double l_hat(double L0, double L1, double q);

struct ScheduleSpec {
    double C2 = 1.0;  // lr constant: gamma = C2 / (T^{3/4} d^{1/2})
    double C3 = 1.0;  // momentum constant: 1 - beta1 = C3 / T^{1/2}
    std::int64_t T = 1;
    std::int64_t d = 1;
    double R = 1.0;      // Lemma 2 bound for the paired (beta1, beta2)
    double v_bar = 1.0;  // lower bound on E[u]; estimated post hoc by the harness
    Mode mode = Mode::oracle_case2;
};

struct OracleConstants {
    double F0_minus_Fstar = 0.0;
    double L_hat = 0.0;
    double sigma_hat = 0.0;
    double sigma1 = 0.0;
    double p = 0.0;
    double q = 0.0;
    double L1 = 0.0;
    double C0 = 1.0;
    double C1 = 1.0;
};

// R = (1 - beta1) / sqrt((1 - beta2)(1 - beta1^2/beta2)), the uniform bound on
// every u coordinate; requires beta1^2 < beta2 < 1.
double compute_R(double beta1, double beta2);

// gamma = C2 * T^{-3/4} * d^{-1/2}, constant in t.
double schedule_lr(double C2, std::int64_t T, std::int64_t d, std::int64_t t);

// beta1 = 1 - C3 * T^{-1/2}; accepts C3 <= sqrt(T) so beta1 stays in [0,1).
double schedule_beta1(double C3, std::int64_t T);

// Lowest-bound constants (C2_hat, C3_hat) as functions of F0 - F*, R, sigma_hat, L_hat.
std::pair<double, double> oracle_constants(const OracleConstants& consts, double R);

// Smallest T for which the schedule's perturbation terms total at most v_bar/2;
// floors at 1. general_case1 / oracle_case2 use the full three-term expression,
// corollary32 drops the C0 C1 sigma1 term and swaps C1 for d^{1/2}.
std::int64_t min_T_threshold(const OracleConstants& consts, const ScheduleSpec& spec);

// Right-hand side of the convergence bound at explicit (gamma, 1 - beta1).
double theorem_rhs_at(const OracleConstants& consts, double R, std::int64_t d, std::int64_t T,
                      double gamma, double one_minus_beta1, double grad_norm_x0);

// Same with gamma and beta1 derived from the spec's (C2, C3, T, d).
double theorem_rhs(const OracleConstants& consts, const ScheduleSpec& spec, double grad_norm_x0);

}  // namespace schedules
}  // namespace optlab
