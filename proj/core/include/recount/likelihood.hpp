#pragma once

#include "recount/quadrature.hpp"
#include "recount/types.hpp"

#include <string>
#include <vector>

namespace recount {

/// Per-subject marginal log-likelihood by two-dimensional tensor-product
/// Gauss-Hermite quadrature over the recall and heaping random effects.
///
/// The constructor precomputes every theta-independent quantity (inverse
/// report sets, day-level designs, lgamma tables), so repeated evaluation
/// inside an optimizer stays cheap. Evaluation is a pure function of theta
/// and may be called concurrently.
class LikelihoodEvaluator {
public:
    LikelihoodEvaluator(const Dataset& dataset, const ModelSpec& spec,
                        QuadratureRule rule, int n_threads = 1);

    /// Marginal log-likelihood contribution of one subject.
    double subject_loglik(const Theta& theta, std::size_t subject_index) const;

    /// Sum over all subjects. Parallelized over subjects; the reduction
    /// runs in subject order so results do not depend on the thread count.
    double loglik(const Theta& theta) const;

    std::size_t n_subjects() const { return subjects_.size(); }
    const QuadratureRule& rule() const { return rule_; }
    const ModelSpec& spec() const { return spec_; }
    int n_threads() const { return n_threads_; }
    void set_n_threads(int n) { n_threads_ = n < 1 ? 1 : n; }

private:
    struct DayEntry {
        int w = 0;
        double lgamma_w1 = 0.0;  // lgamma(w + 1)
        int entry_offset = 0;    // (widx * 4 + class) inside the group block
    };
    struct DayPre {
        int y = 0;
        double ln_x = 0.0;
        std::vector<double> z_recall;
        std::vector<double> z_heaping;
        int group = 0;
        std::vector<DayEntry> entries;
    };
    struct SubjectPre {
        std::string id;
        std::vector<DayPre> days;
        std::vector<std::vector<double>> group_designs;
        std::vector<std::vector<int>> group_w;  // distinct latent counts per group
    };
    struct Workspace;  // reusable per-thread scratch, defined with the impl

    /// Affine map from the node grid to the (b, u) plane. The quadrature is
    /// adaptive: nodes are placed at the subject's conditional mode with a
    /// Cholesky factor of the Laplace covariance, which keeps 20 nodes
    /// accurate even though the integrand is much narrower than the
    /// random-effect priors and often banana-shaped (b and u trade off
    /// through the report sets):
    ///   u(k) = u_center + u_scale * z_k
    ///   b(j, k) = b_center + b_cross * z_k + b_scale * z_j.
    struct AdaptiveGrid {
        double b_center = 0.0;
        double u_center = 0.0;
        double b_scale = 1.0;  ///< conditional SD of b given u
        double u_scale = 1.0;  ///< marginal SD of u
        double b_cross = 0.0;  ///< regression of b on the u axis
    };

    /// First and second moments of (b, u) under the weighted grid terms,
    /// relative to the grid center. Used to detect a mis-fitted grid
    /// (minor-mode capture, ridge, coarse sampling of a sharp bump) and to
    /// rebuild it; the integral itself never uses them.
    struct GridMoments {
        double mean_b = 0.0;
        double mean_u = 0.0;
        double var_b = 0.0;
        double var_u = 0.0;
        double cov_bu = 0.0;
    };

    static Workspace& workspace();
    void prepare_theta(const Theta& theta, const SubjectPre& s, Workspace& ws) const;
    AdaptiveGrid conditional_mode(const Theta& theta, const SubjectPre& s,
                                  Workspace& ws, double start_b,
                                  double start_u) const;
    double subject_loglik_fast(const Theta& theta, const SubjectPre& s,
                               const AdaptiveGrid& grid, Workspace& ws,
                               GridMoments& moments) const;
    double subject_loglik_safe(const Theta& theta, const SubjectPre& s,
                               const AdaptiveGrid& grid, Workspace& ws,
                               GridMoments& moments) const;

    ModelSpec spec_;
    QuadratureRule rule_;
    std::vector<SubjectPre> subjects_;
    int w_max_ = 0;
    int n_threads_ = 1;
};

/// Reference implementation of one subject's marginal log-likelihood,
/// evaluated entirely in log space. Slower than LikelihoodEvaluator but
/// with no fast-path shortcuts; the two agree to close to machine
/// precision.
double subject_loglik(const Theta& theta, const SubjectRecord& subject,
                      const ModelSpec& spec, const QuadratureRule& rule);

/// Marginal log-likelihood of the whole dataset.
double dataset_loglik(const Theta& theta, const Dataset& dataset,
                      const ModelSpec& spec, const QuadratureRule& rule,
                      int n_threads = 1);

/// Log prior density: normal priors on all regression coefficients
/// (beta1 centered per config, the rest at zero) plus inverse-gamma priors
/// on the two random-effect variances. The intercept-ordering constraint
/// enters as an indicator: -inf when violated, with the (theta-free)
/// truncation constant dropped.
double log_prior(const Theta& theta, const PriorConfig& prior);

/// dataset_loglik + log_prior.
double log_posterior(const Theta& theta, const Dataset& dataset,
                     const ModelSpec& spec, const QuadratureRule& rule,
                     const PriorConfig& prior, int n_threads = 1);

/// Bayesian information criterion with the number of subjects as the
/// effective sample size.
double bic(double loglik, int n_params, int n_subjects);

} // namespace recount
