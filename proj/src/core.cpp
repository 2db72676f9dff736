#include "optlab/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace optlab {
namespace core {

bool all_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void require_finite(const Vector& v, const std::string& what) {
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (!std::isfinite(v[j])) {
            throw std::invalid_argument(what + ": non-finite entry at coordinate " +
                                        std::to_string(j));
        }
    }
}

double norm(const Vector& v, Norm order) {
    require_finite(v, "norm");
    long double acc = 0.0L;
    if (order == Norm::l1) {
        for (double x : v) acc += std::fabs(static_cast<long double>(x));
        return static_cast<double>(acc);
    }
    for (double x : v) acc += static_cast<long double>(x) * x;
    return static_cast<double>(std::sqrt(acc));
}

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    base_ = mix64(mix64(seed) ^ mix64(stream_id + 0x632BE59BD9B4E019ULL));
}

std::uint64_t RngStream::next_u64() {
    std::uint64_t z = base_ + (counter_++) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double RngStream::next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::next_normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
}

RngStream RngStream::split(std::uint64_t substream_id) const {
    std::uint64_t child = stream_id_;
    child ^= mix64(substream_id) + 0x9E3779B97F4A7C15ULL + (child << 6) + (child >> 2);
    return RngStream(seed_, child);
}

Vector standard_normal(RngStream& rng, std::size_t d) {
    if (d == 0) throw std::invalid_argument("standard_normal: d must be >= 1");
    Vector v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = rng.next_normal();
    return v;
}

void SampleStats::push(double x) {
    ++n_;
    sum_ += x;
    sum_sq_ += static_cast<long double>(x) * x;
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
}

double SampleStats::mean() const {
    return n_ > 0 ? static_cast<double>(sum_ / n_) : 0.0;
}

double SampleStats::second_moment() const {
    return n_ > 0 ? static_cast<double>(sum_sq_ / n_) : 0.0;
}

double SampleStats::variance() const {
    if (n_ == 0) return 0.0;
    long double m = sum_ / n_;
    long double v = sum_sq_ / n_ - m * m;
    return v > 0.0L ? static_cast<double>(v) : 0.0;
}

namespace {

// 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 s) with s = n_e D^2, clamped to [0,1].
double ks_asymptotic_p(double s) {
    if (!(s > 1e-6)) return 1.0;
    double p = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100000; ++k) {
        double term = std::exp(-2.0 * static_cast<double>(k) * k * s);
        p += sign * term;
        if (term < 1e-12) break;
        sign = -sign;
    }
    p *= 2.0;
    return std::clamp(p, 0.0, 1.0);
}

}  // namespace

KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("ks_two_sample: samples must be nonempty");
    }
    if (!std::is_sorted(a.begin(), a.end()) || !std::is_sorted(b.begin(), b.end())) {
        throw std::invalid_argument("ks_two_sample: samples must be sorted ascending");
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    d = std::max(d, std::fabs(1.0 - static_cast<double>(j) / nb));
    d = std::max(d, std::fabs(static_cast<double>(i) / na - 1.0));
    const double ne = na * nb / (na + nb);
    return KsResult{d, ks_asymptotic_p(ne * d * d)};
}

void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& body) {
    if (n <= 0) return;
    int k = std::max(1, threads);
    k = static_cast<int>(std::min<std::int64_t>(k, n));
    if (k == 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(k);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < k; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::int64_t i = w; i < n; i += k) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string format_double(double x) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace core
}  // namespace optlab
