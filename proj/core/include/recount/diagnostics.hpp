#pragma once

#include "recount/imputation.hpp"
#include "recount/quadrature.hpp"
#include "recount/types.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace recount {

/// Plot-ready data: shared x grid plus one or more named series.
struct CurvePoints {
    std::vector<double> x_values;
    std::vector<std::pair<std::string, std::vector<double>>> series;
    std::string metadata;  ///< fixed covariate values, free-form
};

enum class MeanCurveMode {
    ConditionalB0,  ///< exp(beta0 + beta1 ln x + z.beta2), recall effect at 0
    Marginal,       ///< times exp(sigma_b^2 / 2)
};

/// Mean remembered count against the instantaneous count.
CurvePoints mean_recall_curve(const Theta& theta, const std::vector<int>& x_range,
                              std::span<const double> z_recall, MeanCurveMode mode);

/// Rounding-class probabilities against the remembered count, averaged over
/// the heaping random effect by quadrature (or conditional on u = 0 when
/// integrate_u is false). Adds a "p_heaped" series = 1 - P(exact). The
/// z_heaping vector follows the subject-level convention; the visit flag
/// fills any visit_day slot of the spec's heaping covariate list.
CurvePoints marginal_heaping_curve(const Theta& theta, const ModelSpec& spec,
                                   const std::vector<int>& w_range,
                                   std::span<const double> z_heaping, bool visit,
                                   const QuadratureRule& rule,
                                   bool integrate_u = true);

/// Divisibility fractions by 5/10/20 per day, for the observed reports and
/// (when imputations are supplied) the imputed remembered counts.
struct HeapFractionTable {
    struct Row {
        int day_index = 0;
        std::size_t n_observed = 0;
        double observed[3] = {0, 0, 0};  ///< bases 5, 10, 20
        std::size_t n_imputed = 0;
        double imputed[3] = {0, 0, 0};
    };
    std::vector<Row> rows;
    Row overall;
    bool has_imputed = false;
};

HeapFractionTable heap_fraction_table(
    const Dataset& dataset,
    const std::vector<LatentImputation>* imputations = nullptr);

} // namespace recount
