#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace optlab {

// Thrown for invalid run/experiment configurations; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown when a run blows past the divergence cap; carries the offending step.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, std::int64_t step)
        : std::runtime_error(msg), step(step) {}
    std::int64_t step;
};

namespace core {

using Vector = std::vector<double>;

bool all_finite(const Vector& v);
void require_finite(const Vector& v, const std::string& what);

enum class Norm { l1, l2 };

double norm(const Vector& v, Norm order);

// Counter-based splittable generator. The output sequence is a pure function of
// (seed, stream_id, draw index), so streams are reproducible regardless of how
// work is scheduled across threads. Mixing function is SplitMix64.
class RngStream {
public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    std::uint64_t next_u64();
    double next_uniform();  // (0, 1]
    double next_normal();   // standard normal, Box-Muller

    // Derives an independent stream; children of distinct ids never overlap in practice.
    RngStream split(std::uint64_t substream_id) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
    std::uint64_t base_ = 0;
    std::uint64_t counter_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t mix64(std::uint64_t z);

Vector standard_normal(RngStream& rng, std::size_t d);

// Streaming scalar accumulator; sums kept in long double so 10^6-step
// trajectories do not lose the low bits.
class SampleStats {
public:
    void push(double x);
    std::int64_t count() const { return n_; }
    double mean() const;
    double second_moment() const;
    double variance() const;  // population variance, clamped at 0
    double min() const { return min_; }
    double max() const { return max_; }

private:
    std::int64_t n_ = 0;
    long double sum_ = 0.0L;
    long double sum_sq_ = 0.0L;
    double min_ = std::numeric_limits<double>::infinity();
    double max_ = -std::numeric_limits<double>::infinity();
};

struct KsResult {
    double statistic;
    double p_value;
};

// Two-sample Kolmogorov-Smirnov test. Both samples must be sorted ascending.
// p-value from the asymptotic Kolmogorov series with effective size
// n_e = |a||b|/(|a|+|b|), truncated when a term drops below 1e-12.
KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b);

// Static block partition; results must be written to caller-indexed slots so
// the outcome is independent of the thread count.
void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& body);

// Shortest spelling of x that round-trips through double; used everywhere a
// number lands in a CSV so outputs stay byte-identical across runs.
std::string format_double(double x);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace core
}  // namespace optlab
