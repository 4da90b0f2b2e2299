#pragma once

#include "recount/coarsen.hpp"
#include "recount/types.hpp"

#include <array>
#include <span>

namespace recount {

/// Log of the conditional mean of the remembered count:
/// beta0 + beta1*ln(x) + z_recall.beta2 + b.
double recall_log_mean(const Theta& theta, int x, std::span<const double> z_recall,
                       double b);

/// Class probabilities of the proportional-odds heaping model at latent
/// count w, covariates z_heaping and random effect u. Order: exact,
/// nearest-5, nearest-10, nearest-20. Nonnegative, sums to 1.
std::array<double, 4> heaping_pmf(const Theta& theta, int w,
                                  std::span<const double> z_heaping, double u);

/// Same four probabilities on the log scale, computed without cancellation
/// so extremely small classes keep full relative accuracy.
std::array<double, 4> log_heaping_pmf(const Theta& theta, int w,
                                      std::span<const double> z_heaping, double u);

/// Log probability of one observed report y given both random effects:
/// log sum over inverse_coarsen(y) of Poisson(w; recall mean) times the
/// heaping class probability. Always finite.
double log_obs_prob_given_effects(const Theta& theta, const ObservationDay& day,
                                  std::span<const double> z_recall,
                                  std::span<const double> z_heaping, double b,
                                  double u);

/// exp(log_obs_prob_given_effects); lies in (0, 1).
double obs_prob_given_effects(const Theta& theta, const ObservationDay& day,
                              std::span<const double> z_recall,
                              std::span<const double> z_heaping, double b,
                              double u);

} // namespace recount
