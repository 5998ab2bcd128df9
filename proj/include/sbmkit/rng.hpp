#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbmkit/special.hpp"

namespace sbm {

/// Identifier of the sampling algorithms below, recorded next to run outputs
/// so that results can be tied to the exact random stream that produced them.
inline const char* kRngAlgorithm = "mt19937_64/boxmuller/marsaglia-tsang";

/// Deterministic RNG: mt19937_64 plus hand-rolled samplers, so that the
/// stream of variates is identical across platforms and standard-library
/// versions. Streams are derived from (seed, stream) pairs.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::seed_seq seq{seed & 0xffffffffu, seed >> 32, stream & 0xffffffffu, stream >> 32};
        engine_.seed(seq);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0,1]; safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling keeps the draw exactly uniform
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (one value per call, no caching so the
    /// draw count stays predictable).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; boosted for shape < 1.
    double gamma(double shape) {
        if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    double beta(double a, double b) {
        const double x = gamma(a);
        const double y = gamma(b);
        return x / (x + y);
    }

    /// Dirichlet draw; result overwritten into `out`.
    void dirichlet(std::span<const double> alpha, std::span<double> out) {
        double sum = 0.0;
        for (std::size_t k = 0; k < alpha.size(); ++k) {
            out[k] = gamma(alpha[k]);
            sum += out[k];
        }
        for (std::size_t k = 0; k < alpha.size(); ++k) out[k] /= sum;
    }

    /// Categorical draw from unnormalized log-weights.
    int categorical_from_log(std::span<const double> logw) {
        const double lse = log_sum_exp(logw);
        if (!std::isfinite(lse))
            throw std::runtime_error("categorical_from_log: all weights are zero");
        double u = uniform();
        double cum = 0.0;
        for (std::size_t k = 0; k < logw.size(); ++k) {
            cum += std::exp(logw[k] - lse);
            if (u < cum) return static_cast<int>(k);
        }
        return static_cast<int>(logw.size()) - 1;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct values sampled from {0,...,n-1}, ascending.
    std::vector<std::int32_t> sample_without_replacement(std::int32_t n, std::int32_t k) {
        std::vector<std::int32_t> pool(static_cast<std::size_t>(n));
        std::iota(pool.begin(), pool.end(), 0);
        for (std::int32_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(k));
        std::sort(pool.begin(), pool.end());
        return pool;
    }

  private:
    std::mt19937_64 engine_;
};

/// RNG algorithm identifier recorded in outputs; overridable through the
/// SBMKIT_RNG_ID environment variable (provenance only, never behavior).
inline std::string rng_algorithm_id() {
    if (const char* env = std::getenv("SBMKIT_RNG_ID")) return env;
    return kRngAlgorithm;
}

}  // namespace sbm
