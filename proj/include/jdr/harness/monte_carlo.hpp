#pragma once

#include <jdr/errors.hpp>

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace jdr {

/// Two-sided standard normal quantile for a confidence level in (0, 1).
inline double z_quantile(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ArgumentError("confidence level must lie in (0,1)");
    boost::math::normal_distribution<double> std_normal;
    return boost::math::quantile(std_normal, 0.5 + 0.5 * level);
}

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    double level = 0.99;
    double half_width = 0.0;

    [[nodiscard]] double lower() const noexcept { return mean - half_width; }
    [[nodiscard]] double upper() const noexcept { return mean + half_width; }
    [[nodiscard]] bool contains(double v) const noexcept { return v >= lower() && v <= upper(); }

    /// Exact value, zero uncertainty (deterministic shortcuts, t = T, ...).
    static McEstimate exact(double v, std::size_t n, double level = 0.99) {
        return McEstimate{v, 0.0, n, level, 0.0};
    }
};

/// Combined standard error of the difference of two independent estimates.
inline double combined_stderr(const McEstimate& a, const McEstimate& b) {
    return std::hypot(a.std_error, b.std_error);
}

/// Mean, unbiased sample standard deviation, stderr and z-interval.
inline McEstimate mc_aggregate(std::span<const double> samples, double level = 0.99) {
    if (samples.empty()) throw ArgumentError("mc_aggregate: empty sample stream");
    const double z = z_quantile(level);
    const auto n = samples.size();
    // Welford: stable for long streams with a large common offset.
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t k = 0;
    for (double s : samples) {
        ++k;
        const double delta = s - mean;
        mean += delta / static_cast<double>(k);
        m2 += delta * (s - mean);
    }
    double se = 0.0;
    if (n >= 2) se = std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1)) / static_cast<double>(n));
    return McEstimate{mean, se, n, level, z * se};
}

/// Worker count from the JD_WORKERS environment variable, else hardware.
inline unsigned default_workers() {
    if (const char* env = std::getenv("JD_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return static_cast<unsigned>(w);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n) on a small pool. Each index must write only
/// its own output slot; results are therefore independent of the pool size.
template <class Body>
void parallel_for(std::size_t n, unsigned workers, Body&& body) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    constexpr std::size_t kChunk = 64;
    auto run = [&] {
        try {
            for (;;) {
                const std::size_t begin = next.fetch_add(kChunk);
                if (begin >= n) break;
                const std::size_t end = std::min(n, begin + kChunk);
                for (std::size_t i = begin; i < end; ++i) body(i);
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(n);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace jdr
