#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace recount {

/// Derives independent 64-bit seeds from a root seed. Named streams keep
/// commands from shifting each other's randomness; indexed substreams give
/// replicates, draws and subjects their own reproducible engines.
struct SeedSequencer {
    std::uint64_t root = 0;

    SeedSequencer() = default;
    explicit SeedSequencer(std::uint64_t root_seed) : root(root_seed) {}

    SeedSequencer stream(std::string_view name) const;
    SeedSequencer substream(std::uint64_t index) const;
    std::uint64_t seed() const { return root; }
};

/// Deterministic random engine. All variate algorithms are implemented here
/// rather than taken from <random> distributions, so identical seeds give
/// identical draws across standard libraries.
class Rng {
public:
    Rng() : engine_(0x9e3779b97f4a7c15ull) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    explicit Rng(const SeedSequencer& s) : engine_(s.seed()) {}

    /// Uniform on (0, 1): 53-bit mantissa, never exactly 0 or 1.
    double u01();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via the AS 241 inverse CDF (one uniform per draw).
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Poisson with the given mean: sequential inversion for small means,
    /// Hormann's PTRS transformed rejection otherwise.
    int poisson(double mean);

    /// Gamma(shape, scale) via Marsaglia-Tsang.
    double gamma(double shape, double scale);

    double chi_square(double df) { return gamma(0.5 * df, 2.0); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace recount
