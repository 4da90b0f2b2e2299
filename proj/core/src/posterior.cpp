#include "recount/posterior.hpp"

#include "recount/math.hpp"
#include "recount/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace recount {

std::function<double(const Eigen::VectorXd&)> make_posterior_log_target(
    const LikelihoodEvaluator& evaluator, const ParamLayout& layout,
    const PriorConfig& prior, bool use_prior) {
    return [&evaluator, layout, prior, use_prior](
               const Eigen::VectorXd& phi) -> double {
        Theta theta = layout.from_unconstrained(phi);
        double lp = use_prior ? log_prior(theta, prior) : 0.0;
        if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
        double ll;
        try {
            ll = evaluator.loglik(theta);
        } catch (const numerical_error&) {
            return -std::numeric_limits<double>::infinity();
        }
        return ll + lp + layout.log_jacobian(phi);
    };
}

std::vector<WeightedDraw> draw_proposals(
    const ModeResult& mode,
    const std::function<double(const Eigen::VectorXd&)>& log_target_phi, int count,
    int df, const SeedSequencer& seed, int n_threads, std::size_t* n_dropped) {
    if (count < 1)
        throw validation_error("draw_proposals: count must be >= 1");
    if (df < 1)
        throw validation_error("draw_proposals: df must be >= 1");
    if (mode.information.rows() == 0)
        throw validation_error("draw_proposals: fit carries no information matrix");

    const Eigen::Index d = mode.information.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(mode.information);
    if (llt.info() != Eigen::Success)
        throw numerical_error("draw_proposals: information matrix is not positive "
                              "definite");
    Eigen::MatrixXd lower = llt.matrixL();

    // log |Sigma| with Sigma = information^{-1}.
    double log_det_sigma = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det_sigma -= 2.0 * std::log(lower(i, i));

    const double nu = static_cast<double>(df);
    const double dd = static_cast<double>(d);
    const double log_norm = std::lgamma(0.5 * (nu + dd)) - std::lgamma(0.5 * nu) -
                            0.5 * dd * std::log(nu * pi) - 0.5 * log_det_sigma;

    Eigen::VectorXd center(d);
    for (Eigen::Index i = 0; i < d; ++i) center(i) = mode.phi_hat(mode.free_indices[i]);

    std::vector<WeightedDraw> draws(static_cast<std::size_t>(count));
    std::vector<char> finite(static_cast<std::size_t>(count), 0);

    parallel_for(static_cast<std::size_t>(count), n_threads, [&](std::size_t i) {
        Rng rng(seed.substream(i));
        Eigen::VectorXd z(d);
        for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
        double chi2 = rng.chi_square(nu);
        double scale = std::sqrt(nu / chi2);

        // x = center + L^{-T} z * scale, so that Cov factor is information^{-1}.
        Eigen::VectorXd step =
            lower.transpose().triangularView<Eigen::Upper>().solve(z);
        Eigen::VectorXd x = center + scale * step;

        Eigen::VectorXd phi = mode.phi_hat;
        for (Eigen::Index j = 0; j < d; ++j) phi(mode.free_indices[j]) = x(j);

        // Proposal log density at x.
        Eigen::VectorXd delta = x - center;
        double mahal = (lower.transpose() * delta).squaredNorm();
        double log_q = log_norm - 0.5 * (nu + dd) * std::log1p(mahal / nu);

        WeightedDraw draw;
        draw.phi = phi;
        draw.theta = mode.layout.from_unconstrained(phi);
        draw.log_weight = log_target_phi(phi) - log_q;
        finite[i] = std::isfinite(draw.log_weight) ? 1 : 0;
        draws[i] = std::move(draw);
    });

    std::vector<WeightedDraw> out;
    out.reserve(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i)
        if (finite[i]) out.push_back(std::move(draws[i]));
    if (n_dropped) *n_dropped = static_cast<std::size_t>(count) - out.size();
    if (out.empty())
        throw numerical_error("draw_proposals: every importance weight was "
                              "non-finite");
    return out;
}

namespace {

std::vector<double> stabilized_weights(const std::vector<WeightedDraw>& draws) {
    double max_lw = -std::numeric_limits<double>::infinity();
    for (const auto& d : draws) max_lw = std::max(max_lw, d.log_weight);
    std::vector<double> w(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i)
        w[i] = std::exp(draws[i].log_weight - max_lw);
    return w;
}

} // namespace

double effective_sample_size(const std::vector<WeightedDraw>& draws) {
    if (draws.empty()) return 0.0;
    std::vector<double> w = stabilized_weights(draws);
    double s1 = 0.0, s2 = 0.0;
    for (double x : w) {
        s1 += x;
        s2 += x * x;
    }
    return s2 > 0.0 ? s1 * s1 / s2 : 0.0;
}

std::vector<Theta> sir_resample(const std::vector<WeightedDraw>& draws,
                                std::size_t size, const SeedSequencer& seed) {
    if (draws.empty())
        throw validation_error("sir_resample: no draws");
    if (size > draws.size())
        throw validation_error("sir_resample: resample size exceeds the number of "
                               "proposals");
    std::vector<double> w = stabilized_weights(draws);
    std::vector<double> cum(w.size());
    std::partial_sum(w.begin(), w.end(), cum.begin());
    double total = cum.back();
    if (!(total > 0.0) || !std::isfinite(total))
        throw numerical_error("sir_resample: all weights are zero or non-finite");

    Rng rng(seed);
    std::vector<Theta> out;
    out.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        double u = rng.u01() * total;
        std::size_t idx = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (idx >= draws.size()) idx = draws.size() - 1;
        out.push_back(draws[idx].theta);
    }
    return out;
}

PosteriorSummary posterior_moments(const std::vector<WeightedDraw>& draws,
                                   const ModeResult& mode, const ModelSpec& spec,
                                   double level) {
    if (draws.empty())
        throw validation_error("posterior_moments: no draws");
    if (!(level > 0.0 && level < 1.0))
        throw validation_error("posterior_moments: level must be in (0,1)");

    const ParamLayout& layout = mode.layout;
    const std::size_t dim = layout.dim();
    std::vector<double> w = stabilized_weights(draws);
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0))
        throw numerical_error("posterior_moments: zero total weight");

    Eigen::MatrixXd values(static_cast<Eigen::Index>(draws.size()),
                           static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < draws.size(); ++i)
        values.row(static_cast<Eigen::Index>(i)) =
            layout.theta_values(draws[i].theta).transpose();

    PosteriorSummary summary;
    summary.n_proposals = draws.size();
    summary.ess = effective_sample_size(draws);

    Eigen::VectorXd mode_values = layout.theta_values(mode.theta_hat);
    std::vector<std::string> names = layout.param_names(spec);
    double lo_q = 0.5 * (1.0 - level);
    double hi_q = 1.0 - lo_q;

    for (std::size_t j = 0; j < dim; ++j) {
        Eigen::Index col = static_cast<Eigen::Index>(j);
        double mean = 0.0;
        for (std::size_t i = 0; i < draws.size(); ++i)
            mean += w[i] * values(static_cast<Eigen::Index>(i), col);
        mean /= total;
        double var = 0.0;
        for (std::size_t i = 0; i < draws.size(); ++i) {
            double dev = values(static_cast<Eigen::Index>(i), col) - mean;
            var += w[i] * dev * dev;
        }
        var /= total;

        // Weighted percentiles from the step CDF of the sorted draws.
        std::vector<std::size_t> order(draws.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return values(static_cast<Eigen::Index>(a), col) <
                   values(static_cast<Eigen::Index>(b), col);
        });
        double cum = 0.0;
        double lo = values(static_cast<Eigen::Index>(order.front()), col);
        double hi = values(static_cast<Eigen::Index>(order.back()), col);
        bool lo_set = false;
        for (std::size_t k = 0; k < order.size(); ++k) {
            cum += w[order[k]] / total;
            double v = values(static_cast<Eigen::Index>(order[k]), col);
            if (!lo_set && cum >= lo_q) {
                lo = v;
                lo_set = true;
            }
            if (cum >= hi_q) {
                hi = v;
                break;
            }
        }

        ParamSummary ps;
        ps.name = names[j];
        ps.mode = mode_values(col);
        ps.mean = mean;
        ps.sd = std::sqrt(std::max(var, 0.0));
        ps.ci_lower = lo;
        ps.ci_upper = hi;
        summary.params.push_back(std::move(ps));
    }
    return summary;
}

} // namespace recount
