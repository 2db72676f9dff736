#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "optlab/core.hpp"

#include <doctest.h>

using namespace optlab;

TEST_SUITE("core") {
    TEST_CASE("norms") {
        core::Vector v{3.0, -4.0};
        CHECK(core::norm(v, core::Norm::l1) == doctest::Approx(7.0));
        CHECK(core::norm(v, core::Norm::l2) == doctest::Approx(5.0));
        CHECK(core::norm({}, core::Norm::l2) == 0.0);
    }

    TEST_CASE("rng determinism and stream independence") {
        core::RngStream a(42, 1);
        core::RngStream b(42, 1);
        for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

        core::RngStream c(42, 2);
        core::RngStream d(43, 1);
        int same_c = 0;
        int same_d = 0;
        core::RngStream ref(42, 1);
        for (int i = 0; i < 64; ++i) {
            std::uint64_t r = ref.next_u64();
            same_c += r == c.next_u64();
            same_d += r == d.next_u64();
        }
        CHECK(same_c == 0);
        CHECK(same_d == 0);
    }

    TEST_CASE("rng draw index is scheduling-independent") {
        core::RngStream a(7, 0);
        a.next_u64();
        a.next_u64();
        core::RngStream b(7, 0);
        b.next_u64();
        b.next_u64();
        CHECK(a.next_u64() == b.next_u64());
    }

    TEST_CASE("uniform lands in (0, 1]") {
        core::RngStream rng(123, 0);
        for (int i = 0; i < 10000; ++i) {
            double u = rng.next_uniform();
            CHECK(u > 0.0);
            CHECK(u <= 1.0);
        }
    }

    TEST_CASE("normal moments") {
        core::RngStream rng(5, 9);
        core::SampleStats stats;
        for (int i = 0; i < 200000; ++i) stats.push(rng.next_normal());
        CHECK(std::fabs(stats.mean()) < 0.01);
        CHECK(stats.variance() == doctest::Approx(1.0).epsilon(0.02));
    }

    TEST_CASE("split streams do not collide") {
        core::RngStream parent(99, 4);
        core::RngStream s1 = parent.split(1);
        core::RngStream s2 = parent.split(2);
        int same = 0;
        for (int i = 0; i < 64; ++i) same += s1.next_u64() == s2.next_u64();
        CHECK(same == 0);
        // splitting is a const operation on the parent
        core::RngStream r1 = parent.split(1);
        core::RngStream s1b = parent.split(1);
        CHECK(r1.next_u64() == s1b.next_u64());
    }

    TEST_CASE("sample stats") {
        core::SampleStats s;
        for (double x : {1.0, 2.0, 3.0, 4.0}) s.push(x);
        CHECK(s.count() == 4);
        CHECK(s.mean() == doctest::Approx(2.5));
        CHECK(s.variance() == doctest::Approx(1.25));
        CHECK(s.min() == 1.0);
        CHECK(s.max() == 4.0);
    }

    TEST_CASE("ks identical samples") {
        std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
        core::KsResult r = core::ks_two_sample(a, a);
        CHECK(r.statistic == doctest::Approx(0.0));
        CHECK(r.p_value == doctest::Approx(1.0));
    }

    TEST_CASE("ks disjoint samples reject") {
        std::vector<double> a;
        std::vector<double> b;
        for (int i = 0; i < 200; ++i) {
            a.push_back(i * 0.01);
            b.push_back(10.0 + i * 0.01);
        }
        core::KsResult r = core::ks_two_sample(a, b);
        CHECK(r.statistic == doctest::Approx(1.0));
        CHECK(r.p_value < 1e-6);
    }

    TEST_CASE("ks p value is roughly uniform under the null") {
        core::RngStream rng(2024, 0);
        int reject = 0;
        const int trials = 400;
        for (int t = 0; t < trials; ++t) {
            std::vector<double> a(500);
            std::vector<double> b(500);
            for (double& x : a) x = rng.next_normal();
            for (double& x : b) x = rng.next_normal();
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            if (core::ks_two_sample(a, b).p_value < 0.05) ++reject;
        }
        // 0.05 +- 4 sigma at 400 trials
        CHECK(reject >= 3);
        CHECK(reject <= 38);
    }

    TEST_CASE("parallel_for matches serial and rethrows") {
        std::vector<std::int64_t> out(1000, -1);
        core::parallel_for(1000, 8, [&](std::int64_t i) { out[static_cast<std::size_t>(i)] = i * i; });
        for (std::int64_t i = 0; i < 1000; ++i) CHECK(out[static_cast<std::size_t>(i)] == i * i);

        CHECK_THROWS_AS(core::parallel_for(16, 4,
                                           [](std::int64_t i) {
                                               if (i == 11) throw ConfigError("boom");
                                           }),
                        ConfigError);
    }

    TEST_CASE("format_double round-trips") {
        for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789, -0.0, 2.0}) {
            std::string s = core::format_double(x);
            CHECK(std::stod(s) == x);
        }
    }

    TEST_CASE("fnv1a64 separates nearby strings") {
        CHECK(core::fnv1a64("a") != core::fnv1a64("b"));
        CHECK(core::fnv1a64("") == 0xCBF29CE484222325ULL);
    }
}
