#include <cmath>

#include "optlab/schedules.hpp"

#include <doctest.h>

using namespace optlab;

TEST_SUITE("schedules") {
    TEST_CASE("R at the textbook pair") {
        // (1 - 0.9) / sqrt((1 - 0.999)(1 - 0.81/0.999)), evaluated independently
        CHECK(schedules::compute_R(0.9, 0.999) == doctest::Approx(7.2702917999).epsilon(1e-9));
    }

    TEST_CASE("R is exactly 1 under the beta2 = beta1 pairing") {
        for (double beta : {0.1, 0.5, 0.9, 0.99}) {
            CHECK(schedules::compute_R(beta, beta) == 1.0);
        }
    }

    TEST_CASE("R bounds on a grid") {
        for (int i = 0; i < 50; ++i) {
            double b1 = i / 50.0;
            double b2 = b1 * b1 + (1.0 - b1 * b1) * 0.5;  // strictly between beta1^2 and 1
            double R = schedules::compute_R(b1, b2);
            CHECK(R >= 1.0 - 1e-12);
            if (b1 <= b2) {
                CHECK(R <= std::sqrt((1.0 - b1) / (1.0 - b2)) + 1e-12);
            }
        }
    }

    TEST_CASE("R rejects beta1^2 >= beta2") {
        CHECK_THROWS_AS(schedules::compute_R(0.95, 0.9), ConfigError);
        CHECK_THROWS_AS(schedules::compute_R(0.5, 1.0), ConfigError);
    }

    TEST_CASE("sigma_hat readings") {
        using schedules::SigmaHatReading;
        CHECK(schedules::sigma_hat(1.0, 2.0, 1.0, SigmaHatReading::stated) ==
              doctest::Approx(1.0 + std::sqrt(0.5)));
        CHECK(schedules::sigma_hat(1.0, 2.0, 1.0, SigmaHatReading::proof) ==
              doctest::Approx(1.0 + 2.0 * std::sqrt(0.5)));
        // at p = 2 the sigma1 term vanishes and the readings agree
        CHECK(schedules::sigma_hat(0.5, 3.0, 2.0, SigmaHatReading::stated) == doctest::Approx(0.5));
        CHECK(schedules::sigma_hat(0.5, 3.0, 2.0, SigmaHatReading::proof) == doctest::Approx(0.5));
        // noiseless: the stated reading keeps a phantom sqrt((2-p)/2)
        CHECK(schedules::sigma_hat(0.0, 0.0, 0.0, SigmaHatReading::stated) == doctest::Approx(1.0));
        CHECK(schedules::sigma_hat(0.0, 0.0, 0.0, SigmaHatReading::proof) == doctest::Approx(0.0));
    }

    TEST_CASE("l_hat interpolates the smoothness constants") {
        CHECK(schedules::l_hat(2.0, 3.0, 0.0) == doctest::Approx(5.0));
        CHECK(schedules::l_hat(2.0, 3.0, 1.0) == doctest::Approx(2.0));
        CHECK(schedules::l_hat(12.0, 6.0, 2.0 / 3.0) == doctest::Approx(14.0));
    }

    TEST_CASE("schedule formulas") {
        CHECK(schedules::schedule_lr(2.0, 16, 4, 0) == doctest::Approx(2.0 / (8.0 * 2.0)));
        CHECK(schedules::schedule_lr(2.0, 16, 4, 7) ==
              schedules::schedule_lr(2.0, 16, 4, 0));  // constant in t
        CHECK(schedules::schedule_beta1(2.0, 16) == doctest::Approx(0.5));
        CHECK(schedules::schedule_beta1(4.0, 16) == doctest::Approx(0.0));
        CHECK_THROWS_AS(schedules::schedule_beta1(5.0, 16), ConfigError);
        CHECK_THROWS_AS(schedules::schedule_lr(1.0, 0, 4, 0), ConfigError);
    }

    TEST_CASE("oracle constants at unit inputs") {
        schedules::OracleConstants consts;
        consts.F0_minus_Fstar = 1.0;
        consts.L_hat = 1.0;
        consts.sigma_hat = 1.0;
        auto [c2, c3] = schedules::oracle_constants(consts, 1.0);
        CHECK(c2 == doctest::Approx(std::pow(2.0, -0.25)));
        CHECK(c3 == doctest::Approx(std::sqrt(2.0)));
    }

    TEST_CASE("oracle constants scale as the closed form says") {
        schedules::OracleConstants consts;
        consts.F0_minus_Fstar = 16.0;
        consts.L_hat = 4.0;
        consts.sigma_hat = 2.0;
        auto [c2, c3] = schedules::oracle_constants(consts, 2.0);
        // C2 = gap^{3/4} / (2^{1/4} R sigma^{1/2} L^{1/4})
        CHECK(c2 == doctest::Approx(8.0 / (std::pow(2.0, 0.25) * 2.0 * std::sqrt(2.0) *
                                           std::sqrt(2.0))));
        // C3 = sqrt(2 L) sqrt(gap) / sigma
        CHECK(c3 == doctest::Approx(std::sqrt(2.0) * 2.0 * 4.0 / 2.0));
        CHECK_THROWS_AS(schedules::oracle_constants(schedules::OracleConstants{}, 1.0),
                        ConfigError);
    }

    TEST_CASE("theorem rhs at explicit parameters") {
        schedules::OracleConstants consts;
        consts.F0_minus_Fstar = 1.0;
        consts.L_hat = 1.0;
        consts.sigma_hat = 1.0;
        double rhs = schedules::theorem_rhs_at(consts, 1.0, 4, 100, 0.1, 0.5, 3.0);
        // 0.1 + 0.24 + 2 sqrt(0.5) * 2 + 1.6 + 0.002, each term by hand
        CHECK(rhs == doctest::Approx(4.7704271247461903).epsilon(1e-12));
    }

    TEST_CASE("theorem rhs through the schedule matches the explicit form") {
        schedules::OracleConstants consts;
        consts.F0_minus_Fstar = 2.0;
        consts.L_hat = 3.0;
        consts.sigma_hat = 1.5;
        schedules::ScheduleSpec spec;
        spec.C2 = 1.0;
        spec.C3 = 2.0;
        spec.T = 256;
        spec.d = 8;
        spec.R = 1.0;
        double gamma = schedules::schedule_lr(1.0, 256, 8, 0);
        double omb = 2.0 / 16.0;
        CHECK(schedules::theorem_rhs(consts, spec, 1.0) ==
              doctest::Approx(schedules::theorem_rhs_at(consts, 1.0, 8, 256, gamma, omb, 1.0)));
    }

    TEST_CASE("min_T threshold grows with the perturbation constants") {
        schedules::OracleConstants consts;
        consts.q = 2.0 / 3.0;
        consts.L1 = 6.0;
        consts.sigma1 = 1.0;
        consts.p = 2.0;
        consts.C0 = 2.0;
        consts.C1 = 1.5;
        schedules::ScheduleSpec spec;
        spec.C2 = 1.0;
        spec.C3 = 2.0;
        spec.d = 16;
        spec.R = 1.0;
        spec.v_bar = 1.0;
        std::int64_t base = schedules::min_T_threshold(consts, spec);
        CHECK(base >= 1);
        spec.v_bar = 0.1;
        CHECK(schedules::min_T_threshold(consts, spec) > base);
        spec.v_bar = 1.0;

        // the corollary32 variant drops the sigma1 term, the general one keeps it
        schedules::ScheduleSpec c32 = spec;
        c32.mode = schedules::Mode::corollary32;
        std::int64_t c32_small_sigma1 = schedules::min_T_threshold(consts, c32);
        std::int64_t general_small_sigma1 = schedules::min_T_threshold(consts, spec);
        consts.sigma1 = 100.0;
        CHECK(schedules::min_T_threshold(consts, c32) == c32_small_sigma1);
        CHECK(schedules::min_T_threshold(consts, spec) > general_small_sigma1);

        spec.v_bar = 0.0;
        CHECK_THROWS_AS(schedules::min_T_threshold(consts, spec), ConfigError);
    }
}
