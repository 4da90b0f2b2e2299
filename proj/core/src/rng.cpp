#include "recount/rng.hpp"

#include "recount/math.hpp"

#include <cmath>

namespace recount {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace

SeedSequencer SeedSequencer::stream(std::string_view name) const {
    return SeedSequencer(splitmix64(root ^ fnv1a(name)));
}

SeedSequencer SeedSequencer::substream(std::uint64_t index) const {
    return SeedSequencer(splitmix64(splitmix64(root) + index));
}

double Rng::u01() {
    // 53 random mantissa bits, offset by half an ulp to avoid exact 0.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection to kill modulo bias.
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() { return normal_quantile(u01()); }

namespace {

// Sequential inversion from zero; reliable for small means.
int poisson_inversion(Rng& rng, double mean) {
    double u = rng.u01();
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u > cdf && k < 2000) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

// Hormann (1993) PTRS transformed rejection, valid for mean >= 10.
int poisson_ptrs(Rng& rng, double mean) {
    const double slam = std::sqrt(mean);
    const double llam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);

    for (;;) {
        double u = rng.u01() - 0.5;
        double v = rng.u01();
        double us = 0.5 - std::fabs(u);
        double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r)
            return static_cast<int>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us))
            continue;
        double k = kf;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            k * llam - mean - std::lgamma(k + 1.0))
            return static_cast<int>(kf);
    }
}

} // namespace

int Rng::poisson(double mean) {
    if (!(mean >= 0.0))
        return 0;
    if (mean < 30.0)
        return poisson_inversion(*this, mean);
    return poisson_ptrs(*this, mean);
}

double Rng::gamma(double shape, double scale) {
    if (shape < 1.0) {
        // Boost: Gamma(a) = Gamma(a+1) * U^(1/a).
        double u = u01();
        return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0)
            continue;
        v = v * v * v;
        double u = u01();
        if (u < 1.0 - 0.0331 * x * x * x * x)
            return scale * d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
            return scale * d * v;
    }
}

} // namespace recount
