#include "recount/quadrature.hpp"

#include "recount/math.hpp"
#include "recount/types.hpp"

#include <cmath>

namespace recount {

namespace {

// Scaled evaluation of the orthonormal Hermite polynomials at z: returns
// p_n and p_{n-1} times exp(-log_scale), so values that transiently exceed
// the double range stay representable. Roots and the Newton ratio
// p_n / p_n' are scale-free.
struct HermiteEval {
    double p_n = 0.0;
    double p_nm1 = 0.0;
    double log_scale = 0.0;
};

HermiteEval hermite_scaled(int n, double z) {
    HermiteEval out;
    double p1 = 0.7511255444649425;  // pi^{-1/4}
    double p2 = 0.0;
    double log_scale = 0.0;
    for (int j = 1; j <= n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
        double mag = std::fabs(p1);
        if (mag > 1e250) {
            p1 *= 1e-250;
            p2 *= 1e-250;
            log_scale += std::log(1e250);
        } else if (mag > 0.0 && mag < 1e-250) {
            p1 *= 1e250;
            p2 *= 1e250;
            log_scale -= std::log(1e250);
        }
    }
    out.p_n = p1;
    out.p_nm1 = p2;
    out.log_scale = log_scale;
    return out;
}

} // namespace

QuadratureRule gauss_hermite_normal(int n) {
    if (n < 1)
        throw validation_error("gauss_hermite_normal: need at least one node");

    // Roots of the physicists' Hermite polynomial, largest first.
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    std::vector<double> log_pnm1(static_cast<std::size_t>(n), 0.0);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) -
                1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * x[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * x[1];
        } else {
            z = 2.0 * z - x[static_cast<std::size_t>(i - 2)];
        }
        HermiteEval h;
        for (int iter = 0; iter < 200; ++iter) {
            h = hermite_scaled(n, z);
            double pp = std::sqrt(2.0 * n) * h.p_nm1;
            double step = h.p_n / pp;
            z -= step;
            if (std::fabs(step) <= 1e-15 * (1.0 + std::fabs(z))) {
                h = hermite_scaled(n, z);
                break;
            }
        }
        x[static_cast<std::size_t>(i)] = z;
        log_pnm1[static_cast<std::size_t>(i)] =
            std::log(std::fabs(h.p_nm1)) + h.log_scale;
    }

    // Assemble the normal-measure rule: node t = sqrt(2) x (negatives first
    // so nodes ascend), weight relations evaluated in log space.
    QuadratureRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    rule.log_weights.resize(static_cast<std::size_t>(n));
    rule.kernel_ratio.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < m; ++i) {
        std::size_t hi = static_cast<std::size_t>(n - 1 - i);
        std::size_t lo = static_cast<std::size_t>(i);
        double xi = x[lo];
        // Physicists' weight w = 1 / (n p_{n-1}(x)^2); dividing by sqrt(pi)
        // converts to the normal measure. The kernel ratio multiplies back
        // e^{x^2}, cancelling the polynomial's growth exactly.
        double log_w = -0.5 * std::log(pi) - std::log(static_cast<double>(n)) -
                       2.0 * log_pnm1[lo];
        double log_kernel = log_w + xi * xi;
        rule.nodes[hi] = std::sqrt(2.0) * xi;
        rule.nodes[lo] = -rule.nodes[hi];
        rule.kernel_ratio[hi] = rule.kernel_ratio[lo] = std::exp(log_kernel);
        rule.weights[hi] = rule.weights[lo] = std::exp(log_w);
        rule.log_weights[hi] = rule.log_weights[lo] = log_w;
    }
    if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return rule;
}

} // namespace recount
