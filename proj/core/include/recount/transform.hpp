#pragma once

#include "recount/types.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace recount {

/// Bijection between valid Theta values and an unconstrained vector phi.
///
/// Layout: [beta0, beta1, beta2..., gamma1, log(gamma1 - gamma2),
/// log(gamma2 - gamma3), gamma0, beta3..., log sigma_b, log sigma_u].
/// The log-difference and log-SD coordinates make the intercept ordering
/// and SD positivity automatic, so optimization and sampling never see an
/// invalid parameter vector.
struct ParamLayout {
    std::size_t n_recall = 0;   ///< length of beta2
    std::size_t n_heaping = 0;  ///< length of beta3

    static ParamLayout from_spec(const ModelSpec& spec);

    std::size_t dim() const { return 8 + n_recall + n_heaping; }

    // phi indices
    std::size_t i_beta0() const { return 0; }
    std::size_t i_beta1() const { return 1; }
    std::size_t i_beta2(std::size_t j) const { return 2 + j; }
    std::size_t i_gamma1() const { return 2 + n_recall; }
    std::size_t i_delta2() const { return 3 + n_recall; }
    std::size_t i_delta3() const { return 4 + n_recall; }
    std::size_t i_gamma0() const { return 5 + n_recall; }
    std::size_t i_beta3(std::size_t j) const { return 6 + n_recall + j; }
    std::size_t i_tau_b() const { return 6 + n_recall + n_heaping; }
    std::size_t i_tau_u() const { return 7 + n_recall + n_heaping; }

    Eigen::VectorXd to_unconstrained(const Theta& theta) const;
    Theta from_unconstrained(const Eigen::VectorXd& phi) const;

    /// log |d(coefficients, sigma_b^2, sigma_u^2) / d phi|: the change of
    /// variables onto the coordinates the prior densities are written in.
    double log_jacobian(const Eigen::VectorXd& phi) const;

    /// Constrained-space parameter values in reporting order:
    /// beta0, beta1, beta2..., gamma1, gamma2, gamma3, gamma0, beta3...,
    /// sigma_b, sigma_u.
    Eigen::VectorXd theta_values(const Theta& theta) const;

    /// Names matching theta_values, with covariate slots labelled by the
    /// supplied spec.
    std::vector<std::string> param_names(const ModelSpec& spec) const;

    /// Jacobian d(theta reporting vector)/d(phi), for delta-method SEs.
    Eigen::MatrixXd dtheta_dphi(const Eigen::VectorXd& phi) const;
};

} // namespace recount
