#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace recount {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double log_2pi = 1.8378770664093454836;

/// Stable log(exp(a) + exp(b)).
inline double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    double m = a > b ? a : b;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Stable log of a sum of exponentials; -inf for an empty span.
double log_sum_exp(std::span<const double> terms);

/// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) {
    if (x > 35.0) return x + std::exp(-x);
    if (x < -708.0) return 0.0;
    return std::log1p(std::exp(x));
}

/// Inverse logit q(x) = exp(x) / (1 + exp(x)).
inline double inverse_logit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// log q(x).
inline double log_inverse_logit(double x) { return -log1p_exp(-x); }

/// Poisson log pmf at integer k >= 0 with the mean supplied on the log scale.
/// Computed through lgamma so it stays accurate for counts up to 1e4+.
inline double poisson_log_pmf_logmean(int k, double log_mean) {
    return static_cast<double>(k) * log_mean - std::exp(log_mean) -
           std::lgamma(static_cast<double>(k) + 1.0);
}

inline double poisson_log_pmf(int k, double mean) {
    return static_cast<double>(k) * std::log(mean) - mean -
           std::lgamma(static_cast<double>(k) + 1.0);
}

inline double normal_log_pdf(double x, double mean, double sd) {
    double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * log_2pi;
}

/// Inverse-gamma log density at x > 0 with the shape/scale convention
/// mean = scale / (shape - 1).
inline double inverse_gamma_log_pdf(double x, double shape, double scale) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return shape * std::log(scale) - std::lgamma(shape) -
           (shape + 1.0) * std::log(x) - scale / x;
}

double normal_cdf(double x);

/// Normal quantile function (Wichura's AS 241, double precision).
double normal_quantile(double p);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double regularized_gamma_q(double a, double x);

/// Upper tail of the chi-square distribution with df degrees of freedom.
inline double chi_square_sf(double x, double df) {
    return regularized_gamma_q(0.5 * df, 0.5 * x);
}

/// Kahan-style compensated accumulator for reproducible long sums.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        double y = x - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

} // namespace recount
