#include "neurodiff/sde.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <mutex>
#include <thread>

namespace neurodiff {

namespace {

// SplitMix64 finalizer.
std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// uniform on (0, 1]
double to_unit(std::uint64_t bits) { return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53; }

}  // namespace

double standard_normal(std::uint64_t seed, std::uint64_t step, std::uint64_t component) {
    const std::uint64_t key = mix(mix(mix(seed) ^ step) ^ component);
    const double u1 = to_unit(key);
    const double u2 = to_unit(mix(key ^ 0xd1b54a32d192ed03ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void check_noise_grid(double t0, double t1, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("noise dt must be > 0");
    const double ratio = std::abs(t1 - t0) / dt;
    if (!std::isfinite(ratio)) throw std::invalid_argument("noise dt gives a non-finite step count");
    if (std::abs(ratio - std::round(ratio)) > 1e-6 * std::max(1.0, ratio))
        throw std::invalid_argument("noise dt must divide the time span");
}

void write_csv(std::ostream& os, const MonteCarloSummary& s) {
    const auto old = os.precision(17);
    os << "component,mean,stderr,n_paths,dt,seed\n";
    for (std::size_t c = 0; c < s.mean.size(); ++c)
        os << c + 1 << "," << s.mean[c] << "," << s.std_error[c] << "," << s.n_paths << "," << s.dt << "," << s.seed
           << "\n";
    os.precision(old);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, unsigned threads) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace neurodiff
