#include "recount/optimize.hpp"

#include "recount/types.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace recount {

Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x,
                            double rel_step, long* n_evals) {
    Eigen::VectorXd grad(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        double h = rel_step * std::max(1.0, std::fabs(x(j)));
        double old = x(j);
        xp(j) = old + h;
        double fp = f(xp);
        xp(j) = old - h;
        double fm = f(xp);
        xp(j) = old;
        grad(j) = (fp - fm) / (2.0 * h);
    }
    if (n_evals) *n_evals += 2 * x.size();
    return grad;
}

Eigen::MatrixXd fd_hessian(const Objective& f, const Eigen::VectorXd& x,
                           double rel_step, long* n_evals) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd h(n);
    for (Eigen::Index j = 0; j < n; ++j)
        h(j) = rel_step * std::max(1.0, std::fabs(x(j)));

    Eigen::MatrixXd hess(n, n);
    Eigen::VectorXd xp = x;
    const double f0 = f(x);
    long evals = 1;
    for (Eigen::Index i = 0; i < n; ++i) {
        xp(i) = x(i) + h(i);
        double fp = f(xp);
        xp(i) = x(i) - h(i);
        double fm = f(xp);
        xp(i) = x(i);
        evals += 2;
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            xp(i) = x(i) + h(i);
            xp(j) = x(j) + h(j);
            double fpp = f(xp);
            xp(j) = x(j) - h(j);
            double fpm = f(xp);
            xp(i) = x(i) - h(i);
            double fmm = f(xp);
            xp(j) = x(j) + h(j);
            double fmp = f(xp);
            xp(i) = x(i);
            xp(j) = x(j);
            evals += 4;
            double v = (fpp - fpm - fmp + fmm) / (4.0 * h(i) * h(j));
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    if (n_evals) *n_evals += evals;
    return hess;
}

namespace {

// Inverse of the negated, symmetrized, ridge-repaired Hessian of f: the
// natural inverse-Hessian seed for minimizing -f.
Eigen::MatrixXd repaired_inverse_curvature(const Objective& f,
                                           const Eigen::VectorXd& x, double step,
                                           long* n_evals) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd hess = fd_hessian(f, x, step, n_evals);
    if (!hess.allFinite()) return Eigen::MatrixXd();
    Eigen::MatrixXd curv = -0.5 * (hess + hess.transpose());
    double ridge = 0.0;
    for (int k = 0; k < 40; ++k) {
        Eigen::LLT<Eigen::MatrixXd> llt(
            curv + ridge * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success)
            return llt.solve(Eigen::MatrixXd::Identity(n, n));
        ridge = ridge == 0.0 ? 1e-6 * (1.0 + curv.diagonal().maxCoeff()) : 10.0 * ridge;
    }
    return Eigen::MatrixXd();
}

} // namespace

BfgsResult bfgs_maximize(const Objective& f, const Eigen::VectorXd& x0,
                         const BfgsOptions& options) {
    const Eigen::Index n = x0.size();
    BfgsResult result;
    result.x = x0;
    result.value = f(x0);
    result.n_evals = 1;
    if (!std::isfinite(result.value))
        throw numerical_error("bfgs_maximize: objective not finite at the start");

    // Minimize g = -f internally.
    auto grad_g = [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(
            -fd_gradient(f, x, options.gradient_step, &result.n_evals));
    };

    Eigen::VectorXd x = x0;
    double gx = -result.value;
    Eigen::VectorXd grad = grad_g(x);
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
    bool have_curvature = false;
    if (options.initial_inverse_hessian.rows() == n &&
        options.initial_inverse_hessian.cols() == n) {
        hinv = options.initial_inverse_hessian;
        have_curvature = true;
    } else if (options.precondition) {
        Eigen::MatrixXd seed = repaired_inverse_curvature(
            f, x, options.hessian_step, &result.n_evals);
        if (seed.size() > 0) {
            hinv = seed;
            have_curvature = true;
        }
    }
    const double c1 = 1e-4;
    const int max_refreshes = 8;
    int refreshes = 0;

    auto scaled_norm = [&](const Eigen::VectorXd& g, double fval) {
        return g.lpNorm<Eigen::Infinity>() / std::max(1.0, std::fabs(fval));
    };

    auto refresh = [&]() -> bool {
        if (refreshes >= max_refreshes) return false;
        ++refreshes;
        Eigen::MatrixXd seed = repaired_inverse_curvature(
            f, x, options.hessian_step, &result.n_evals);
        if (seed.size() == 0) return false;
        hinv = seed;
        have_curvature = true;
        return true;
    };

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.n_iterations = iter + 1;
        result.gradient_norm = scaled_norm(grad, gx);
        if (result.gradient_norm <= options.gradient_tolerance) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd p = -(hinv * grad);
        double slope = grad.dot(p);
        if (!(slope < 0.0)) {
            if (!refresh()) {
                hinv = Eigen::MatrixXd::Identity(n, n);
                have_curvature = false;
            }
            p = -(hinv * grad);
            slope = grad.dot(p);
            if (!(slope < 0.0)) break;
        }

        // Armijo backtracking; non-finite trial values shrink the step too.
        // The first trial is capped so a raw gradient direction cannot fling
        // the iterate into a degenerate region.
        double t = have_curvature ? 1.0
                                  : std::min(1.0, 8.0 / p.lpNorm<Eigen::Infinity>());
        double g_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + t * p;
            double fv = f(x_new);
            ++result.n_evals;
            g_new = -fv;
            if (std::isfinite(g_new) && g_new <= gx + c1 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // No progress along this direction; try once with fresh
            // curvature before giving up.
            if (refresh()) continue;
            break;
        }

        Eigen::VectorXd grad_new = grad_g(x_new);
        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd y = grad_new - grad;
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!have_curvature) {
                hinv *= sy / y.squaredNorm();
                have_curvature = true;
            }
            Eigen::VectorXd hy = hinv * y;
            double yhy = y.dot(hy);
            // Inverse BFGS update (Sherman-Morrison form).
            hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                    (hy * s.transpose() + s * hy.transpose()) / sy;
        }

        double improvement = gx - g_new;
        x = x_new;
        gx = g_new;
        grad = grad_new;
        result.x = x;
        result.value = -gx;
        result.gradient_norm = scaled_norm(grad, gx);

        if (improvement <=
            options.relative_objective_tolerance * std::max(1.0, std::fabs(gx))) {
            if (result.gradient_norm > options.gradient_tolerance && refresh())
                continue;  // stalled with a live gradient: retry with curvature
            result.converged =
                result.gradient_norm <= options.gradient_tolerance;
            break;
        }
    }
    if (!result.converged)
        result.converged = result.gradient_norm <= options.gradient_tolerance;
    return result;
}

} // namespace recount
