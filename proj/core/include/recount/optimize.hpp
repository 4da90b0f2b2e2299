#pragma once

#include <Eigen/Core>

#include <functional>

namespace recount {

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference gradient with per-coordinate step
/// rel_step * max(1, |x_j|). Adds 2*dim to *n_evals when given.
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x,
                            double rel_step = 1e-4, long* n_evals = nullptr);

/// Central-difference Hessian, symmetric by construction.
Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x,
                           double rel_step = 1e-3, long* n_evals = nullptr);

struct BfgsOptions {
    int max_iterations = 500;
    /// Converged when ||grad||_inf <= gradient_tolerance * max(1, |f|).
    double gradient_tolerance = 1e-4;
    /// Stop (converged or not) when the improvement falls below
    /// relative_objective_tolerance * max(1, |f|).
    double relative_objective_tolerance = 1e-9;
    double gradient_step = 1e-4;
    double hessian_step = 1e-3;
    /// Seed the inverse Hessian from a ridge-repaired finite-difference
    /// Hessian at the start, and refresh it whenever progress stalls with a
    /// large gradient. Essential here: coordinate curvatures span six
    /// orders of magnitude, which plain BFGS cannot fix in few iterations.
    bool precondition = true;
    /// Optional curvature seed: inverse Hessian of the negated objective
    /// (for example the inverse information of a nearby fit). Empty means
    /// start from the precondition (or identity).
    Eigen::MatrixXd initial_inverse_hessian;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0.0;
    bool converged = false;
    int n_iterations = 0;
    long n_evals = 0;
    double gradient_norm = 0.0;  ///< scaled: ||grad||_inf / max(1, |f|)
};

/// BFGS ascent with finite-difference gradients and Armijo backtracking.
/// Non-finite objective values are treated as rejected steps. The result
/// value never falls below f(x0).
BfgsResult bfgs_maximize(const Objective& f, const Eigen::VectorXd& x0,
                         const BfgsOptions& options = {});

} // namespace recount
