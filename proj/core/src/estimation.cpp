#include "recount/estimation.hpp"

#include "recount/math.hpp"
#include "recount/parallel.hpp"
#include "recount/simulation.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace recount {

Theta default_init(const Dataset& dataset, const ModelSpec& spec) {
    dataset.validate();
    double sum_y = 0.0;
    double sum_x = 0.0;
    std::size_t n = 0;
    for (const auto& s : dataset.subjects) {
        for (const auto& d : s.days) {
            sum_y += d.tlfb_count;
            sum_x += d.ema_count;
            ++n;
        }
    }
    double mean_y = std::max(sum_y / static_cast<double>(n), 0.5);
    double mean_x = std::max(sum_x / static_cast<double>(n), 1.0);

    Theta theta;
    theta.beta1 = 0.5;
    theta.beta0 = std::log(mean_y) - 0.5 * std::log(mean_x);
    theta.beta2.assign(spec.recall_covariate_names.size(), 0.0);
    theta.sigma_b = 0.3;
    theta.gamma1 = -1.0;
    theta.gamma2 = -4.0;
    theta.gamma3 = -7.0;
    theta.gamma0 = 0.1;
    theta.beta3.assign(spec.heaping_covariate_names.size(), 0.0);
    theta.sigma_u = 2.0;
    return theta;
}

namespace {

/// Embeds an optimization over a subset of coordinates into the full
/// phi vector, for fits with pinned random-effect SDs.
struct FreeSubset {
    Eigen::VectorXd base;
    std::vector<int> free;

    Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const {
        Eigen::VectorXd full = base;
        for (std::size_t i = 0; i < free.size(); ++i)
            full(free[i]) = reduced(static_cast<Eigen::Index>(i));
        return full;
    }
    Eigen::VectorXd reduce(const Eigen::VectorXd& full) const {
        Eigen::VectorXd r(static_cast<Eigen::Index>(free.size()));
        for (std::size_t i = 0; i < free.size(); ++i)
            r(static_cast<Eigen::Index>(i)) = full(free[i]);
        return r;
    }
};

} // namespace

Eigen::MatrixXd observed_information(const Objective& objective,
                                     const Eigen::VectorXd& phi_hat, double rel_step,
                                     double* ridge_used, long* n_evals) {
    Eigen::MatrixXd hess = fd_hessian(objective, phi_hat, rel_step, n_evals);
    if (!hess.allFinite())
        throw numerical_error("observed_information: non-finite Hessian entries");
    Eigen::MatrixXd info = -0.5 * (hess + hess.transpose());

    double ridge = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
        double base = 1e-6 * (1.0 + info.diagonal().maxCoeff());
        ridge = base;
        for (int k = 0; k < 40; ++k) {
            Eigen::MatrixXd repaired =
                info + ridge * Eigen::MatrixXd::Identity(info.rows(), info.cols());
            llt.compute(repaired);
            if (llt.info() == Eigen::Success) {
                info = repaired;
                break;
            }
            ridge *= 10.0;
        }
        if (llt.info() != Eigen::Success)
            throw numerical_error(
                "observed_information: could not repair the information matrix");
    }
    if (ridge_used) *ridge_used = ridge;
    return info;
}

ModeResult find_posterior_mode(const Dataset& dataset, const ModelSpec& spec,
                               const FitOptions& options) {
    spec.validate();
    dataset.validate();

    ModeResult result;
    result.layout = ParamLayout::from_spec(spec);
    const ParamLayout& layout = result.layout;

    QuadratureRule rule = gauss_hermite_normal(spec.quadrature_nodes_per_dim);
    LikelihoodEvaluator evaluator(dataset, spec, std::move(rule), options.n_threads);

    Theta init = options.init ? *options.init : default_init(dataset, spec);
    if (options.fix_sigma_b) init.sigma_b = *options.fix_sigma_b;
    if (options.fix_sigma_u) init.sigma_u = *options.fix_sigma_u;
    init.validate();
    spec.check_theta_shape(init);

    Eigen::VectorXd phi0 = layout.to_unconstrained(init);

    FreeSubset subset;
    subset.base = phi0;
    for (std::size_t j = 0; j < layout.dim(); ++j) {
        if (options.fix_sigma_b && j == layout.i_tau_b()) continue;
        if (options.fix_sigma_u && j == layout.i_tau_u()) continue;
        subset.free.push_back(static_cast<int>(j));
    }

    auto full_objective = [&](const Eigen::VectorXd& phi) -> double {
        Theta theta = layout.from_unconstrained(phi);
        double value;
        try {
            value = evaluator.loglik(theta);
        } catch (const numerical_error&) {
            return -std::numeric_limits<double>::infinity();
        }
        if (options.use_prior) value += log_prior(theta, spec.prior_config);
        return value;
    };
    Objective reduced_objective = [&](const Eigen::VectorXd& r) {
        return full_objective(subset.expand(r));
    };

    BfgsResult opt = bfgs_maximize(reduced_objective, subset.reduce(phi0), options.bfgs);

    result.phi_hat = subset.expand(opt.x);
    result.theta_hat = layout.from_unconstrained(result.phi_hat);
    result.converged = opt.converged;
    result.n_evals = opt.n_evals;
    result.n_iterations = opt.n_iterations;
    result.final_gradient_norm = opt.gradient_norm;
    result.objective = opt.value;
    result.loglik = options.use_prior ? evaluator.loglik(result.theta_hat) : opt.value;
    result.free_indices = subset.free;

    if (options.compute_information) {
        result.information =
            observed_information(reduced_objective, opt.x, options.hessian_step,
                                 &result.ridge, &result.n_evals);

        // Newton polish with the exact curvature: BFGS's stopping slop on
        // nearly flat coordinates (the third heaping intercept especially)
        // is larger than downstream agreement checks tolerate.
        Eigen::LLT<Eigen::MatrixXd> llt(result.information);
        Eigen::VectorXd x = opt.x;
        double fx = opt.value;
        for (int polish = 0; polish < 3; ++polish) {
            Eigen::VectorXd grad = fd_gradient(reduced_objective, x,
                                               options.bfgs.gradient_step,
                                               &result.n_evals);
            Eigen::VectorXd step = llt.solve(grad);
            if (!step.allFinite() || step.lpNorm<Eigen::Infinity>() > 1.0) break;
            Eigen::VectorXd xn = x + step;
            double fn = reduced_objective(xn);
            ++result.n_evals;
            if (!std::isfinite(fn) || fn < fx) {
                xn = x + 0.5 * step;
                fn = reduced_objective(xn);
                ++result.n_evals;
                if (!std::isfinite(fn) || fn < fx) break;
            }
            x = xn;
            fx = fn;
            if (step.lpNorm<Eigen::Infinity>() < 1e-7) break;
        }
        if (fx > opt.value) {
            result.phi_hat = subset.expand(x);
            result.theta_hat = layout.from_unconstrained(result.phi_hat);
            result.objective = fx;
            result.loglik =
                options.use_prior ? evaluator.loglik(result.theta_hat) : fx;
            Eigen::VectorXd grad = fd_gradient(reduced_objective, x,
                                               options.bfgs.gradient_step,
                                               &result.n_evals);
            result.final_gradient_norm =
                grad.lpNorm<Eigen::Infinity>() / std::max(1.0, std::fabs(fx));
        }
    }
    return result;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty())
        throw validation_error("percentile: empty sample");
    std::sort(values.begin(), values.end());
    if (q <= 0.0) return values.front();
    if (q >= 1.0) return values.back();
    double pos = q * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

BootstrapResult parametric_bootstrap_ci(const Theta& theta_hat,
                                        const SimulationDesign& design,
                                        const ModelSpec& spec, int n_replicates,
                                        double level, const SeedSequencer& seed,
                                        const FitOptions& fit_options) {
    if (n_replicates < 50)
        throw validation_error("parametric_bootstrap_ci: need at least 50 replicates");
    if (!(level > 0.0 && level < 1.0))
        throw validation_error("parametric_bootstrap_ci: level must be in (0,1)");
    theta_hat.validate();
    spec.check_theta_shape(theta_hat);

    ParamLayout layout = ParamLayout::from_spec(spec);
    const std::size_t dim = layout.dim();

    std::vector<Eigen::VectorXd> estimates(n_replicates);
    std::vector<char> kept(n_replicates, 0);

    FitOptions refit = fit_options;
    refit.init = theta_hat;  // warm start at the generating value
    refit.compute_information = false;
    refit.n_threads = 1;

    parallel_for(static_cast<std::size_t>(n_replicates), fit_options.n_threads,
                 [&](std::size_t b) {
                     SimulatedData sim = generate_dataset(
                         theta_hat, design, spec, seed.substream(b));
                     try {
                         ModeResult fit = find_posterior_mode(sim.dataset, spec, refit);
                         if (fit.converged) {
                             estimates[b] = layout.theta_values(fit.theta_hat);
                             kept[b] = 1;
                         }
                     } catch (const std::exception&) {
                         // dropped and counted below
                     }
                 });

    BootstrapResult out;
    out.param_names = layout.param_names(spec);
    out.n_requested = n_replicates;
    out.level = level;
    int n_kept = static_cast<int>(std::count(kept.begin(), kept.end(), 1));
    out.n_dropped = n_replicates - n_kept;
    if (out.n_dropped > n_replicates / 5) {
        std::ostringstream msg;
        msg << "parametric_bootstrap_ci: " << out.n_dropped << " of " << n_replicates
            << " replicates failed to converge";
        throw numerical_error(msg.str());
    }

    out.estimates.resize(n_kept, static_cast<Eigen::Index>(dim));
    int row = 0;
    for (int b = 0; b < n_replicates; ++b)
        if (kept[b]) out.estimates.row(row++) = estimates[b].transpose();

    out.lower.resize(static_cast<Eigen::Index>(dim));
    out.upper.resize(static_cast<Eigen::Index>(dim));
    double alpha = 1.0 - level;
    for (std::size_t j = 0; j < dim; ++j) {
        std::vector<double> col(out.estimates.rows());
        for (Eigen::Index r = 0; r < out.estimates.rows(); ++r)
            col[static_cast<std::size_t>(r)] = out.estimates(r, static_cast<Eigen::Index>(j));
        out.lower(static_cast<Eigen::Index>(j)) = percentile(col, alpha / 2.0);
        out.upper(static_cast<Eigen::Index>(j)) = percentile(col, 1.0 - alpha / 2.0);
    }
    return out;
}

} // namespace recount
