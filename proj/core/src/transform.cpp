#include "recount/transform.hpp"

#include <cmath>

namespace recount {

namespace {

// exp() clamped on both sides: the upper cap keeps values finite, the lower
// floor keeps gamma differences above one ulp and SDs strictly positive, so
// any finite phi maps to a valid Theta.
constexpr double exp_arg_cap = 709.0;
constexpr double exp_arg_floor = -27.0;  // exp(-27) ~ 1.9e-12

double safe_exp(double x) {
    if (x > exp_arg_cap) x = exp_arg_cap;
    if (x < exp_arg_floor) x = exp_arg_floor;
    return std::exp(x);
}

} // namespace

ParamLayout ParamLayout::from_spec(const ModelSpec& spec) {
    ParamLayout layout;
    layout.n_recall = spec.recall_covariate_names.size();
    layout.n_heaping = spec.heaping_covariate_names.size();
    return layout;
}

Eigen::VectorXd ParamLayout::to_unconstrained(const Theta& theta) const {
    theta.validate();
    if (theta.beta2.size() != n_recall || theta.beta3.size() != n_heaping)
        throw validation_error("to_unconstrained: theta shape does not match layout");
    Eigen::VectorXd phi(dim());
    phi(i_beta0()) = theta.beta0;
    phi(i_beta1()) = theta.beta1;
    for (std::size_t j = 0; j < n_recall; ++j) phi(i_beta2(j)) = theta.beta2[j];
    phi(i_gamma1()) = theta.gamma1;
    phi(i_delta2()) = std::log(theta.gamma1 - theta.gamma2);
    phi(i_delta3()) = std::log(theta.gamma2 - theta.gamma3);
    phi(i_gamma0()) = theta.gamma0;
    for (std::size_t j = 0; j < n_heaping; ++j) phi(i_beta3(j)) = theta.beta3[j];
    phi(i_tau_b()) = std::log(theta.sigma_b);
    phi(i_tau_u()) = std::log(theta.sigma_u);
    return phi;
}

Theta ParamLayout::from_unconstrained(const Eigen::VectorXd& phi) const {
    if (static_cast<std::size_t>(phi.size()) != dim())
        throw validation_error("from_unconstrained: phi dimension mismatch");
    Theta theta;
    theta.beta0 = phi(i_beta0());
    theta.beta1 = phi(i_beta1());
    theta.beta2.resize(n_recall);
    for (std::size_t j = 0; j < n_recall; ++j) theta.beta2[j] = phi(i_beta2(j));
    theta.gamma1 = phi(i_gamma1());
    theta.gamma2 = theta.gamma1 - safe_exp(phi(i_delta2()));
    theta.gamma3 = theta.gamma2 - safe_exp(phi(i_delta3()));
    theta.gamma0 = phi(i_gamma0());
    theta.beta3.resize(n_heaping);
    for (std::size_t j = 0; j < n_heaping; ++j) theta.beta3[j] = phi(i_beta3(j));
    theta.sigma_b = safe_exp(phi(i_tau_b()));
    theta.sigma_u = safe_exp(phi(i_tau_u()));
    return theta;
}

double ParamLayout::log_jacobian(const Eigen::VectorXd& phi) const {
    // gamma2, gamma3 contribute exp(delta2), exp(delta3); the variances
    // sigma^2 = exp(2 tau) contribute 2 exp(2 tau) each.
    return phi(i_delta2()) + phi(i_delta3()) + 2.0 * phi(i_tau_b()) +
           2.0 * phi(i_tau_u()) + 2.0 * std::log(2.0);
}

Eigen::VectorXd ParamLayout::theta_values(const Theta& theta) const {
    Eigen::VectorXd v(dim());
    std::size_t p = 0;
    v(p++) = theta.beta0;
    v(p++) = theta.beta1;
    for (double b : theta.beta2) v(p++) = b;
    v(p++) = theta.gamma1;
    v(p++) = theta.gamma2;
    v(p++) = theta.gamma3;
    v(p++) = theta.gamma0;
    for (double b : theta.beta3) v(p++) = b;
    v(p++) = theta.sigma_b;
    v(p++) = theta.sigma_u;
    return v;
}

std::vector<std::string> ParamLayout::param_names(const ModelSpec& spec) const {
    std::vector<std::string> names;
    names.reserve(dim());
    names.push_back("beta0");
    names.push_back("beta1");
    for (const auto& n : spec.recall_covariate_names) names.push_back("beta2[" + n + "]");
    names.push_back("gamma1");
    names.push_back("gamma2");
    names.push_back("gamma3");
    names.push_back("gamma0");
    for (const auto& n : spec.heaping_covariate_names)
        names.push_back("beta3[" + n + "]");
    names.push_back("sigma_b");
    names.push_back("sigma_u");
    return names;
}

Eigen::MatrixXd ParamLayout::dtheta_dphi(const Eigen::VectorXd& phi) const {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim(), dim());
    double e2 = safe_exp(phi(i_delta2()));
    double e3 = safe_exp(phi(i_delta3()));
    std::size_t p = 0;
    jac(p++, i_beta0()) = 1.0;
    jac(p++, i_beta1()) = 1.0;
    for (std::size_t j = 0; j < n_recall; ++j) jac(p++, i_beta2(j)) = 1.0;
    jac(p, i_gamma1()) = 1.0;  // gamma1
    ++p;
    jac(p, i_gamma1()) = 1.0;  // gamma2 = gamma1 - exp(delta2)
    jac(p, i_delta2()) = -e2;
    ++p;
    jac(p, i_gamma1()) = 1.0;  // gamma3 = gamma2 - exp(delta3)
    jac(p, i_delta2()) = -e2;
    jac(p, i_delta3()) = -e3;
    ++p;
    jac(p++, i_gamma0()) = 1.0;
    for (std::size_t j = 0; j < n_heaping; ++j) jac(p++, i_beta3(j)) = 1.0;
    jac(p, i_tau_b()) = safe_exp(phi(i_tau_b()));
    ++p;
    jac(p, i_tau_u()) = safe_exp(phi(i_tau_u()));
    return jac;
}

} // namespace recount
