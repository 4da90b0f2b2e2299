#include "recount/diagnostics.hpp"

#include "recount/model.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace recount {

CurvePoints mean_recall_curve(const Theta& theta, const std::vector<int>& x_range,
                              std::span<const double> z_recall, MeanCurveMode mode) {
    theta.validate();
    if (x_range.empty())
        throw validation_error("mean_recall_curve: empty x range");
    double factor =
        mode == MeanCurveMode::Marginal ? std::exp(0.5 * theta.sigma_b * theta.sigma_b)
                                        : 1.0;
    CurvePoints out;
    std::vector<double> mean;
    mean.reserve(x_range.size());
    for (int x : x_range) {
        if (x < 1)
            throw validation_error("mean_recall_curve: x values must be >= 1");
        out.x_values.push_back(static_cast<double>(x));
        mean.push_back(std::exp(recall_log_mean(theta, x, z_recall, 0.0)) * factor);
    }
    out.series.emplace_back("mean_recall", std::move(mean));
    std::ostringstream meta;
    meta << (mode == MeanCurveMode::Marginal ? "marginal over recall effect"
                                             : "conditional on recall effect 0");
    out.metadata = meta.str();
    return out;
}

CurvePoints marginal_heaping_curve(const Theta& theta, const ModelSpec& spec,
                                   const std::vector<int>& w_range,
                                   std::span<const double> z_heaping, bool visit,
                                   const QuadratureRule& rule, bool integrate_u) {
    theta.validate();
    spec.check_theta_shape(theta);
    if (w_range.empty())
        throw validation_error("marginal_heaping_curve: empty w range");
    if (z_heaping.size() != spec.heaping_covariate_names.size())
        throw validation_error("marginal_heaping_curve: z_heaping length does not "
                               "match the spec");

    // Day-effective design: visit_day slots take the flag, others pass through.
    std::vector<double> zh(z_heaping.begin(), z_heaping.end());
    for (std::size_t j = 0; j < spec.heaping_covariate_names.size(); ++j)
        if (spec.heaping_covariate_names[j] == visit_day_covariate)
            zh[j] = visit ? 1.0 : 0.0;

    CurvePoints out;
    std::vector<double> p_exact, p5, p10, p20, heaped;
    for (int w : w_range) {
        if (w < 0)
            throw validation_error("marginal_heaping_curve: w values must be >= 0");
        out.x_values.push_back(static_cast<double>(w));
        std::array<double, 4> acc = {0.0, 0.0, 0.0, 0.0};
        if (integrate_u) {
            for (std::size_t k = 0; k < rule.size(); ++k) {
                auto pmf = heaping_pmf(theta, w, zh, theta.sigma_u * rule.nodes[k]);
                for (int c = 0; c < 4; ++c)
                    acc[static_cast<std::size_t>(c)] +=
                        rule.weights[k] * pmf[static_cast<std::size_t>(c)];
            }
        } else {
            acc = heaping_pmf(theta, w, zh, 0.0);
        }
        p_exact.push_back(acc[0]);
        p5.push_back(acc[1]);
        p10.push_back(acc[2]);
        p20.push_back(acc[3]);
        heaped.push_back(1.0 - acc[0]);
    }
    out.series.emplace_back("p_exact", std::move(p_exact));
    out.series.emplace_back("p_round5", std::move(p5));
    out.series.emplace_back("p_round10", std::move(p10));
    out.series.emplace_back("p_round20", std::move(p20));
    out.series.emplace_back("p_heaped", std::move(heaped));

    std::ostringstream meta;
    meta << (visit ? "visit day" : "nonvisit day") << "; "
         << (integrate_u ? "marginal over heaping effect"
                         : "conditional on heaping effect 0");
    out.metadata = meta.str();
    return out;
}

namespace {

void fold_counts(const std::vector<std::pair<int, int>>& day_counts, bool imputed,
                 std::map<int, HeapFractionTable::Row>& rows,
                 HeapFractionTable::Row& overall) {
    static const int bases[3] = {5, 10, 20};
    for (const auto& [day, count] : day_counts) {
        auto& row = rows[day];
        row.day_index = day;
        auto& n = imputed ? row.n_imputed : row.n_observed;
        auto& n_all = imputed ? overall.n_imputed : overall.n_observed;
        double* frac = imputed ? row.imputed : row.observed;
        double* frac_all = imputed ? overall.imputed : overall.observed;
        ++n;
        ++n_all;
        for (int b = 0; b < 3; ++b) {
            if (count % bases[b] == 0) {
                frac[b] += 1.0;
                frac_all[b] += 1.0;
            }
        }
    }
}

void finalize(HeapFractionTable::Row& row) {
    for (int b = 0; b < 3; ++b) {
        if (row.n_observed > 0)
            row.observed[b] /= static_cast<double>(row.n_observed);
        if (row.n_imputed > 0) row.imputed[b] /= static_cast<double>(row.n_imputed);
    }
}

} // namespace

HeapFractionTable heap_fraction_table(
    const Dataset& dataset, const std::vector<LatentImputation>* imputations) {
    dataset.validate();
    HeapFractionTable table;
    std::map<int, HeapFractionTable::Row> rows;
    fold_counts(observed_day_counts(dataset), false, rows, table.overall);
    if (imputations && !imputations->empty()) {
        table.has_imputed = true;
        fold_counts(imputed_day_counts(dataset, *imputations), true, rows,
                    table.overall);
    }
    for (auto& [day, row] : rows) {
        finalize(row);
        table.rows.push_back(row);
    }
    finalize(table.overall);
    table.overall.day_index = -1;
    return table;
}

} // namespace recount
