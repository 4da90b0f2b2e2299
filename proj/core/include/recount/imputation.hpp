#pragma once

#include "recount/rng.hpp"
#include "recount/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace recount {

/// One draw of the latent state behind a subject's observed reports:
/// remembered counts, rounding classes and the two random effects. Every
/// (w[t], g[t]) satisfies coarsen(w[t], g[t]) == observed report exactly.
struct LatentImputation {
    std::string subject_id;
    std::vector<int> w;
    std::vector<HeapingClass> g;
    double b = 0.0;
    double u = 0.0;
    int theta_index = 0;  ///< which parameter draw generated it
};

enum class ImputationMode {
    /// The stated procedure: (b, u) are drawn once per subject from their
    /// priors and kept fixed while per-day (w, g) pairs are redrawn until
    /// consistent with the report.
    FixedEffects,
    /// Sensitivity variant: (b, u) are redrawn together with (w, g) on every
    /// per-day rejection, so each accepted day conditions its own effects;
    /// the record keeps the effects of the last accepted day.
    RedrawEffects,
};

struct ImputationOptions {
    ImputationMode mode = ImputationMode::FixedEffects;
    long max_rejects = 1000000;  ///< per-day cap; hitting it fails the subject
    int n_threads = 1;
};

/// A subject skipped because a day exceeded the rejection cap; heavy
/// rejection signals a gross mismatch between theta and the data.
struct ImputationFailure {
    int theta_index = 0;
    std::string subject_id;
    int day_index = 0;
    long rejects = 0;
};

struct ImputationResult {
    std::vector<LatentImputation> imputations;  ///< ordered by (theta_index, subject)
    std::vector<ImputationFailure> failures;
};

/// Acceptance-rejection imputation of the latent state for every
/// (parameter draw, subject) pair.
ImputationResult impute_latents(const std::vector<Theta>& theta_draws,
                                const Dataset& dataset, const ModelSpec& spec,
                                const ImputationOptions& options,
                                const SeedSequencer& seed);

/// Fractions of counts divisible by a base (5, 10 or 20), per day index and
/// overall.
struct HeapFractions {
    int base = 5;
    double overall = 0.0;
    std::vector<std::pair<int, double>> by_day;  ///< (day_index, fraction)
};

/// Counts paired with their day index, ready for divisibility summaries.
std::vector<std::pair<int, int>> observed_day_counts(const Dataset& dataset);
std::vector<std::pair<int, int>> imputed_day_counts(
    const Dataset& dataset, const std::vector<LatentImputation>& imputations);

HeapFractions ppc_heap_fractions(const std::vector<std::pair<int, int>>& day_counts,
                                 int base);

/// User-chosen distribution of the true count on integers >= 1, for
/// prediction when the instantaneous record is missing.
struct TrueCountModel {
    enum class Kind { PointMass, Poisson, NegativeBinomial, Empirical };
    Kind kind = Kind::Poisson;
    int point = 20;              ///< PointMass
    double mean = 20.0;          ///< Poisson / NegativeBinomial, pre-truncation
    double dispersion = 10.0;    ///< NegativeBinomial
    std::vector<int> sample_pool;  ///< Empirical: resampled uniformly

    void validate() const;
    int sample(Rng& rng) const;
    /// Log pmf of the zero-truncated distribution; -inf below 1.
    double log_pmf(int x) const;
};

/// Joint draw of (true count, remembered count, rounding class, effects)
/// consistent with a subject's reports. The ema_count column of the input
/// dataset is ignored.
struct TrueCountImputation {
    std::string subject_id;
    std::vector<int> x;
    std::vector<int> w;
    std::vector<HeapingClass> g;
    double b = 0.0;
    double u = 0.0;
    int theta_index = 0;
};

struct PredictionResult {
    std::vector<TrueCountImputation> imputations;
    std::vector<ImputationFailure> failures;
};

PredictionResult predict_true_counts(const Theta& theta, const Dataset& dataset,
                                     const ModelSpec& spec,
                                     const TrueCountModel& x_model,
                                     int n_imputations,
                                     const ImputationOptions& options,
                                     const SeedSequencer& seed);

} // namespace recount
