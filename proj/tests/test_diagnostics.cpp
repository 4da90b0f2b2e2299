#include "recount/diagnostics.hpp"

#include "recount/imputation.hpp"
#include "recount/quadrature.hpp"
#include "recount/simulation.hpp"

#include <doctest.h>

#include <cmath>

using namespace recount;

namespace {

/// Fitted random-effects parameters from the simple-model analysis table.
Theta table_fit_theta() {
    Theta t;
    t.beta0 = 2.32;
    t.beta1 = 0.27;
    t.sigma_b = std::sqrt(0.09);
    t.gamma1 = -1.50;
    t.gamma2 = -5.21;
    t.gamma3 = -10.15;
    t.gamma0 = 0.11;
    t.beta3 = {-2.96};
    t.sigma_u = std::sqrt(6.65);
    return t;
}

ModelSpec visit_spec() {
    ModelSpec spec;
    spec.heaping_covariate_names = {visit_day_covariate};
    return spec;
}

} // namespace

TEST_CASE("mean recall curve: identity case and lognormal factor") {
    Theta identity = scenario_case2().theta;
    identity.sigma_b = 1e-9;
    std::vector<int> xs = {1, 5, 10, 20, 40};
    CurvePoints curve =
        mean_recall_curve(identity, xs, {}, MeanCurveMode::ConditionalB0);
    REQUIRE(curve.series.size() == 1);
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(curve.series[0].second[i] == doctest::Approx(xs[i]).epsilon(1e-9));

    Theta t = scenario_case1().theta;
    CurvePoints cond = mean_recall_curve(t, xs, {}, MeanCurveMode::ConditionalB0);
    CurvePoints marg = mean_recall_curve(t, xs, {}, MeanCurveMode::Marginal);
    double factor = std::exp(0.5 * t.sigma_b * t.sigma_b);
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(marg.series[0].second[i] ==
              doctest::Approx(cond.series[0].second[i] * factor).epsilon(1e-12));

    CHECK_THROWS_AS(mean_recall_curve(t, {0, 5}, {}, MeanCurveMode::Marginal),
                    validation_error);
}

TEST_CASE("fitted mean-recall curve crosses the identity line near a pack") {
    // With the expanded-model coefficients at the reference covariate
    // profile the curve crosses y = x between 22 and 26.
    Theta t;
    t.beta0 = 2.34;
    t.beta1 = 0.25;
    t.sigma_b = std::sqrt(0.06);
    t.beta2 = {0.07, -0.01, 0.06, 0.08, 0.13, 0.002, -0.14, 0.16, -0.001};
    // Reference profile with mean-centered quantitative predictors
    // (FTND 5.97, NDSS -0.023, noncompliance 10.1%, age 43.5 are the means,
    // so their centered values are zero) and reference categories
    // (definitely addicted, white, female, high-school education).
    std::vector<double> profile(9, 0.0);
    std::vector<int> xs;
    for (int x = 10; x <= 40; ++x) xs.push_back(x);
    CurvePoints curve = mean_recall_curve(t, xs, profile, MeanCurveMode::ConditionalB0);
    double cross = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        double prev = curve.series[0].second[i - 1] - xs[i - 1];
        double cur = curve.series[0].second[i] - xs[i];
        if (prev >= 0.0 && cur < 0.0) cross = curve.x_values[i];
    }
    CHECK(cross >= 22.0);
    CHECK(cross <= 26.0);
}

TEST_CASE("marginal heaping curve hits the reported checkpoints") {
    Theta t = table_fit_theta();
    ModelSpec spec = visit_spec();
    QuadratureRule rule = gauss_hermite_normal(40);  // the checkpoint oracle
    std::vector<int> w41 = {41};
    std::vector<double> z = {0.0};

    CurvePoints nonvisit = marginal_heaping_curve(t, spec, w41, z, false, rule);
    double heaped_nonvisit = nonvisit.series[4].second[0];
    CHECK(std::fabs(heaped_nonvisit - 0.84) < 0.02);

    CurvePoints visit = marginal_heaping_curve(t, spec, w41, z, true, rule);
    double heaped_visit = visit.series[4].second[0];
    double round5_visit = visit.series[1].second[0];
    CHECK(std::fabs(heaped_visit - 0.51) < 0.02);
    CHECK(std::fabs(round5_visit - 0.39) < 0.02);
}

TEST_CASE("marginal heaping curve properties: sums, monotonicity, visit shift") {
    Theta t = table_fit_theta();
    ModelSpec spec = visit_spec();
    QuadratureRule rule = gauss_hermite_normal(20);
    std::vector<int> ws;
    for (int w = 0; w <= 60; w += 2) ws.push_back(w);
    std::vector<double> z = {0.0};

    CurvePoints nonvisit = marginal_heaping_curve(t, spec, ws, z, false, rule);
    CurvePoints visit = marginal_heaping_curve(t, spec, ws, z, true, rule);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        double sum = 0.0;
        for (int c = 0; c < 4; ++c) sum += nonvisit.series[static_cast<std::size_t>(c)].second[i];
        CHECK(std::fabs(sum - 1.0) < 1e-8);
        if (i > 0)
            CHECK(nonvisit.series[4].second[i] >=
                  nonvisit.series[4].second[i - 1] - 1e-12);
        CHECK(visit.series[4].second[i] <= nonvisit.series[4].second[i] + 1e-12);
    }

    // sigma_u -> 0 collapses the mixture to the conditional curve.
    Theta degenerate = t;
    degenerate.sigma_u = 1e-10;
    CurvePoints mixed = marginal_heaping_curve(degenerate, spec, ws, z, false, rule);
    CurvePoints conditional =
        marginal_heaping_curve(degenerate, spec, ws, z, false, rule, false);
    for (std::size_t i = 0; i < ws.size(); ++i)
        CHECK(mixed.series[0].second[i] ==
              doctest::Approx(conditional.series[0].second[i]).epsilon(1e-9));
}

TEST_CASE("heap fraction table mirrors observed and imputed divisibility") {
    Dataset data;
    for (int i = 0; i < 4; ++i) {
        SubjectRecord s;
        s.subject_id = "c" + std::to_string(i);
        for (int d = 1; d <= 2; ++d) {
            ObservationDay day;
            day.day_index = d;
            day.ema_count = 20;
            day.tlfb_count = 20;
            s.days.push_back(day);
        }
        data.subjects.push_back(s);
    }
    HeapFractionTable table = heap_fraction_table(data);
    CHECK_FALSE(table.has_imputed);
    REQUIRE(table.rows.size() == 2);
    for (const auto& row : table.rows)
        for (int b = 0; b < 3; ++b) CHECK(row.observed[b] == 1.0);
    CHECK(table.overall.n_observed == 8);

    // Simulated contrast: reported fraction minus latent fraction > 0.2.
    Scenario sc = scenario_case1();
    sc.design.n_subjects = 60;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(61));
    std::vector<Theta> draws(5, sc.theta);
    ImputationOptions options;
    auto imput = impute_latents(draws, sim.dataset, sc.spec, options,
                                SeedSequencer(62));
    HeapFractionTable sim_table =
        heap_fraction_table(sim.dataset, &imput.imputations);
    CHECK(sim_table.has_imputed);
    CHECK(sim_table.overall.observed[0] - sim_table.overall.imputed[0] > 0.2);
}
