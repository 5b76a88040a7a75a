#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace rmlab {

/// Splittable 64-bit generator (splitmix64). Every Monte-Carlo worker owns a
/// stream derived from (seed, stream index), so runs are bit-reproducible
/// regardless of thread scheduling.
class Rng {
  public:
    explicit Rng(std::uint64_t state) : state_(state) {}

    static Rng from_seed(std::uint64_t seed) { return Rng(mix(seed)); }

    /// Derive an independent stream for worker/sample `idx`.
    static Rng derive(std::uint64_t seed, std::uint64_t idx) {
        return Rng(mix(mix(seed) + 0x9E3779B97F4A7C15ULL * (idx + 1)));
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix_out(state_);
    }

    /// Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Index in {0, ..., k-1} with the given cumulative weights (size k, last = 1).
    int pick_cumulative(const std::vector<double>& cum) {
        const double u = next_double();
        int lo = 0, hi = static_cast<int>(cum.size()) - 1;
        while (lo < hi) {
            const int mid = (lo + hi) / 2;
            if (u < cum[mid]) hi = mid; else lo = mid + 1;
        }
        return lo;
    }

    /// Standard normal via Box-Muller (used only by test generators).
    double next_gaussian() {
        double u1 = next_double(), u2 = next_double();
        if (u1 <= 0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

  private:
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        return mix_out(x);
    }
    static std::uint64_t mix_out(std::uint64_t x) {
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    std::uint64_t state_;
};

} // namespace rmlab
