#include "optlab/schedules.hpp"

#include <cmath>
#include <string>

namespace optlab {
namespace schedules {

double sigma_hat(double sigma0, double sigma1, double p, SigmaHatReading reading) {
    const double root = std::sqrt((2.0 - p) / 2.0);
    return reading == SigmaHatReading::stated ? sigma0 + root : sigma0 + root * sigma1;
}

double l_hat(double L0, double L1, double q) { return L0 + (1.0 - q) * L1; }

double compute_R(double beta1, double beta2) {
    if (!(beta2 < 1.0) || !(beta1 * beta1 < beta2)) {
        throw ConfigError("compute_R: requires beta1^2 < beta2 < 1 (got beta1=" +
                          std::to_string(beta1) + ", beta2=" + std::to_string(beta2) + ")");
    }
    return (1.0 - beta1) / std::sqrt((1.0 - beta2) * (1.0 - beta1 * beta1 / beta2));
}

double schedule_lr(double C2, std::int64_t T, std::int64_t d, std::int64_t) {
    if (T < 1) throw ConfigError("schedule_lr: T must be >= 1");
    if (d < 1) throw ConfigError("schedule_lr: d must be >= 1");
    return C2 / (std::pow(static_cast<double>(T), 0.75) * std::sqrt(static_cast<double>(d)));
}

double schedule_beta1(double C3, std::int64_t T) {
    if (T < 1) throw ConfigError("schedule_beta1: T must be >= 1");
    const double sqrt_T = std::sqrt(static_cast<double>(T));
    if (C3 > sqrt_T) {
        throw ConfigError("schedule_beta1: C3 must be <= sqrt(T) for beta1 >= 0");
    }
    return 1.0 - C3 / sqrt_T;
}

std::pair<double, double> oracle_constants(const OracleConstants& consts, double R) {
    if (!(consts.sigma_hat > 0.0) || !(consts.L_hat > 0.0)) {
        throw ConfigError("oracle_constants: sigma_hat and L_hat must be > 0 "
                          "(noiseless or curvature-free cases use the corollary32 mode)");
    }
    if (!(R > 0.0)) throw ConfigError("oracle_constants: R must be > 0");
    const double gap = consts.F0_minus_Fstar;
    const double c2 = std::pow(gap, 0.75) /
                      (std::pow(2.0, 0.25) * R * std::sqrt(consts.sigma_hat) *
                       std::pow(consts.L_hat, 0.25));
    const double c3 = std::sqrt(2.0) * std::sqrt(consts.L_hat) * std::sqrt(gap) / consts.sigma_hat;
    return {c2, c3};
}

std::int64_t min_T_threshold(const OracleConstants& consts, const ScheduleSpec& spec) {
    if (!(spec.v_bar > 0.0)) throw ConfigError("min_T_threshold: v_bar must be > 0");
    const double qL1 = consts.q * consts.L1;
    double base;
    if (spec.mode == Mode::corollary32) {
        const double root_d = std::sqrt(static_cast<double>(spec.d));
        base = 4.0 * spec.C2 * spec.R * spec.R * root_d * qL1 / (spec.C3 * spec.v_bar) +
               std::cbrt(spec.C2 * spec.R * spec.R * root_d * qL1 / spec.v_bar);
    } else {
        base = 4.0 * consts.C0 * consts.C1 * std::sqrt(spec.C3) * std::sqrt(consts.p) * spec.R *
                   consts.sigma1 / spec.v_bar +
               4.0 * consts.C1 * spec.C2 * spec.R * spec.R * qL1 / (spec.C3 * spec.v_bar) +
               std::cbrt(consts.C1 * spec.C2 * spec.R * spec.R * qL1 / spec.v_bar);
    }
    const double threshold = std::pow(base, 4.0);
    if (!(threshold > 1.0)) return 1;
    return static_cast<std::int64_t>(std::ceil(threshold));
}

double theorem_rhs_at(const OracleConstants& consts, double R, std::int64_t d, std::int64_t T,
                      double gamma, double one_minus_beta1, double grad_norm_x0) {
    const double dd = static_cast<double>(d);
    const double root_d = std::sqrt(dd);
    const double TT = static_cast<double>(T);
    return consts.F0_minus_Fstar / (gamma * TT) +
           2.0 * R * root_d * grad_norm_x0 / (TT * one_minus_beta1) +
           2.0 * std::sqrt(one_minus_beta1) * R * root_d * consts.sigma_hat +
           2.0 * gamma * R * R * dd * consts.L_hat / one_minus_beta1 +
           gamma * R * R * dd * consts.L_hat / (2.0 * TT);
}

double theorem_rhs(const OracleConstants& consts, const ScheduleSpec& spec, double grad_norm_x0) {
    const double gamma = schedule_lr(spec.C2, spec.T, spec.d, 0);
    const double beta1 = schedule_beta1(spec.C3, spec.T);
    return theorem_rhs_at(consts, spec.R, spec.d, spec.T, gamma, 1.0 - beta1, grad_norm_x0);
}

}  // namespace schedules
}  // namespace optlab
