#pragma once

#include "recount/likelihood.hpp"
#include "recount/optimize.hpp"
#include "recount/rng.hpp"
#include "recount/transform.hpp"
#include "recount/types.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace recount {

struct SimulationDesign;  // simulation.hpp

struct FitOptions {
    /// With the prior disabled the mode is the maximum-likelihood estimate;
    /// that is what the replication of the simulation-study tables uses.
    bool use_prior = true;
    int n_threads = 1;
    bool compute_information = true;
    BfgsOptions bfgs;
    double hessian_step = 1e-3;
    std::optional<Theta> init;

    /// Fix a random-effect SD instead of estimating it (the "independence"
    /// model uses values near zero). Fixed coordinates are excluded from
    /// the optimization and from the information matrix.
    std::optional<double> fix_sigma_b;
    std::optional<double> fix_sigma_u;
};

/// FitOptions with the prior disabled: the mode is then the maximum
/// likelihood estimate.
inline FitOptions maximum_likelihood_options() {
    FitOptions options;
    options.use_prior = false;
    return options;
}

struct ModeResult {
    Theta theta_hat;
    Eigen::VectorXd phi_hat;
    /// Negative finite-difference Hessian of the objective over the free
    /// phi coordinates, symmetrized and ridge-repaired to positive definite.
    Eigen::MatrixXd information;
    std::vector<int> free_indices;  ///< phi coordinates the information covers
    bool converged = false;
    long n_evals = 0;
    int n_iterations = 0;
    double final_gradient_norm = 0.0;
    double objective = 0.0;  ///< log-posterior (or log-likelihood) at the mode
    double loglik = 0.0;     ///< dataset log-likelihood at the mode
    double ridge = 0.0;      ///< ridge added during repair, 0 if none
    ParamLayout layout;
};

/// Heuristic starting point: beta1 = 0.5, beta0 matched to the data scale,
/// spread intercepts, small recall SD, generous heaping SD.
Theta default_init(const Dataset& dataset, const ModelSpec& spec);

/// Maximizes the log-posterior (or log-likelihood) over the unconstrained
/// parameterization with BFGS and finite differences, then evaluates the
/// observed information at the mode.
ModeResult find_posterior_mode(const Dataset& dataset, const ModelSpec& spec,
                               const FitOptions& options = {});

/// Central-difference negative Hessian at phi_hat, symmetrized as
/// (H + H^T)/2. If not positive definite, an escalating ridge
/// 1e-6 * (1 + max diagonal) * 10^k is added until Cholesky succeeds;
/// *ridge_used reports the final value.
Eigen::MatrixXd observed_information(const Objective& objective,
                                     const Eigen::VectorXd& phi_hat,
                                     double rel_step = 1e-3,
                                     double* ridge_used = nullptr,
                                     long* n_evals = nullptr);

struct BootstrapResult {
    std::vector<std::string> param_names;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::MatrixXd estimates;  ///< kept replicates x parameters
    int n_requested = 0;
    int n_dropped = 0;
    double level = 0.95;
};

/// Percentile confidence intervals from B parametric-bootstrap refits:
/// datasets are simulated at theta_hat, refit from a warm start, and the
/// per-parameter level-quantiles of the estimates returned. Replicates
/// that fail to converge are dropped; more than 20% dropped is an error.
BootstrapResult parametric_bootstrap_ci(const Theta& theta_hat,
                                        const SimulationDesign& design,
                                        const ModelSpec& spec, int n_replicates,
                                        double level, const SeedSequencer& seed,
                                        const FitOptions& fit_options = {});

/// Empirical quantile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

} // namespace recount
