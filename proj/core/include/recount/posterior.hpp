#pragma once

#include "recount/estimation.hpp"
#include "recount/rng.hpp"
#include "recount/transform.hpp"
#include "recount/types.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace recount {

/// One proposal draw with its log importance ratio
/// (log target density - log proposal density, both in phi space).
struct WeightedDraw {
    Eigen::VectorXd phi;
    Theta theta;
    double log_weight = 0.0;
};

struct ParamSummary {
    std::string name;
    double mode = 0.0;  ///< coordinate of the joint posterior mode
    double mean = 0.0;
    double sd = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
};

struct PosteriorSummary {
    std::vector<ParamSummary> params;
    double ess = 0.0;  ///< (sum w)^2 / sum w^2
    std::size_t n_proposals = 0;
    std::size_t n_dropped = 0;  ///< non-finite weights
    std::size_t n_resampled = 0;
};

/// Log target in phi space for the Bayesian pipeline: log-likelihood plus
/// log-prior plus the reparameterization Jacobian. With use_prior false the
/// prior term is dropped (a flat prior on the coefficients and variances),
/// matching a maximum-likelihood fit. The evaluator must outlive the
/// returned callable.
std::function<double(const Eigen::VectorXd&)> make_posterior_log_target(
    const LikelihoodEvaluator& evaluator, const ParamLayout& layout,
    const PriorConfig& prior, bool use_prior = true);

/// Draws from a multivariate t proposal centered at the posterior mode with
/// scale equal to the inverse information, and computes each draw's log
/// importance ratio against log_target_phi. Draws with non-finite weights
/// are dropped and counted in *n_dropped. Fixed coordinates of the fit stay
/// pinned at their mode values.
std::vector<WeightedDraw> draw_proposals(
    const ModeResult& mode,
    const std::function<double(const Eigen::VectorXd&)>& log_target_phi, int count,
    int df, const SeedSequencer& seed, int n_threads = 1,
    std::size_t* n_dropped = nullptr);

/// Multinomial resampling with replacement, probabilities proportional to
/// the stabilized importance weights.
std::vector<Theta> sir_resample(const std::vector<WeightedDraw>& draws,
                                std::size_t size, const SeedSequencer& seed);

/// Importance-weighted means, SDs and central credible intervals per
/// parameter (constrained scale). The reported per-parameter "mode" is the
/// joint mode from the optimizer.
PosteriorSummary posterior_moments(const std::vector<WeightedDraw>& draws,
                                   const ModeResult& mode, const ModelSpec& spec,
                                   double level = 0.95);

/// Effective sample size of a set of log weights.
double effective_sample_size(const std::vector<WeightedDraw>& draws);

} // namespace recount
