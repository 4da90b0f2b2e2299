#include "recount/simulation.hpp"

#include "recount/coarsen.hpp"
#include "recount/math.hpp"
#include "recount/model.hpp"

#include <doctest.h>

#include <cmath>

using namespace recount;

TEST_CASE("scenario parameterizations reproduce the published moments") {
    Scenario c1 = scenario_case1();
    CHECK(c1.theta.beta0 == 2.358);
    CHECK(c1.theta.beta1 == 0.2628);
    CHECK(c1.theta.sigma_b == doctest::Approx(std::sqrt(0.09)));
    CHECK(c1.theta.sigma_u == doctest::Approx(std::sqrt(7.1)));
    CHECK(c1.design.n_subjects == 100);
    CHECK(c1.design.days_per_subject == 12);

    auto marginal_mean = [](const Theta& t, int x) {
        return std::exp(recall_log_mean(t, x, {}, 0.0)) *
               std::exp(0.5 * t.sigma_b * t.sigma_b);
    };
    CHECK(std::fabs(marginal_mean(c1.theta, 20) - 24.3) < 0.05);
    CHECK(std::fabs(marginal_mean(c1.theta, 30) - 27.0) < 0.05);

    Scenario c2 = scenario_case2();
    CHECK(std::fabs(marginal_mean(c2.theta, 20) - 20.5) < 0.05);
    CHECK(std::fabs(marginal_mean(c2.theta, 30) - 30.8) < 0.05);

    // Lognormal identity: marginal = conditional(b=0) * exp(sigma_b^2/2).
    double conditional = std::exp(recall_log_mean(c1.theta, 20, {}, 0.0));
    CHECK(marginal_mean(c1.theta, 20) ==
          doctest::Approx(conditional * std::exp(0.045)));

    CHECK_THROWS_AS(scenario_by_name("case3"), validation_error);
}

TEST_CASE("generated reports equal the coarsened latents, always") {
    Scenario sc = scenario_case1();
    sc.design.n_subjects = 50;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(2));
    REQUIRE(sim.truth.subjects.size() == 50);
    for (std::size_t i = 0; i < sim.dataset.subjects.size(); ++i) {
        const auto& subj = sim.dataset.subjects[i];
        const auto& truth = sim.truth.subjects[i];
        REQUIRE(truth.w.size() == subj.days.size());
        for (std::size_t t = 0; t < subj.days.size(); ++t) {
            CHECK(coarsen(truth.w[t], truth.g[t]) == subj.days[t].tlfb_count);
            CHECK(subj.days[t].ema_count >= 1);
        }
    }
}

TEST_CASE("forced exact reporting returns the latent count verbatim") {
    Scenario sc = scenario_case2();
    sc.theta.sigma_b = 1e-8;
    sc.theta.sigma_u = 1e-8;
    // P(exact) = 1 - q(gamma1 + eta + u), so a very negative gamma1 pins
    // the exact class.
    sc.theta.gamma1 = -50.0;
    sc.theta.gamma2 = -60.0;
    sc.theta.gamma3 = -70.0;
    sc.design.n_subjects = 20;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(31));
    for (std::size_t i = 0; i < sim.dataset.subjects.size(); ++i)
        for (std::size_t t = 0; t < sim.dataset.subjects[i].days.size(); ++t) {
            CHECK(sim.truth.subjects[i].g[t] == HeapingClass::Exact);
            CHECK(sim.dataset.subjects[i].days[t].tlfb_count ==
                  sim.truth.subjects[i].w[t]);
        }
}

TEST_CASE("heaping is visible in reports but not in latents") {
    Scenario sc = scenario_case1();
    sc.design.n_subjects = 800;  // ~1e4 days
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(5));
    std::size_t y_div5 = 0, w_div5 = 0, n = 0;
    for (std::size_t i = 0; i < sim.dataset.subjects.size(); ++i) {
        for (std::size_t t = 0; t < sim.dataset.subjects[i].days.size(); ++t) {
            y_div5 += sim.dataset.subjects[i].days[t].tlfb_count % 5 == 0 ? 1 : 0;
            w_div5 += sim.truth.subjects[i].w[t] % 5 == 0 ? 1 : 0;
            ++n;
        }
    }
    double y_frac = static_cast<double>(y_div5) / static_cast<double>(n);
    double w_frac = static_cast<double>(w_div5) / static_cast<double>(n);
    CHECK(y_frac > 0.45);
    CHECK(std::fabs(w_frac - 0.2) < 0.03);
}

TEST_CASE("conditional mean and class frequencies match analytic values") {
    Scenario sc = scenario_case1();
    Rng rng(17);
    // E[w | x=20, b] averaged over b: 1e5 draws against the marginal 24.3.
    const int n = 100000;
    double sum_w = 0.0;
    std::array<double, 4> class_counts = {0, 0, 0, 0};
    for (int i = 0; i < n; ++i) {
        double b = rng.normal(0.0, sc.theta.sigma_b);
        double mean = std::exp(recall_log_mean(sc.theta, 20, {}, b));
        sum_w += rng.poisson(mean);
        auto pmf = heaping_pmf(sc.theta, 22, {}, 0.0);
        double v = rng.u01();
        double cum = 0.0;
        for (int c = 0; c < 4; ++c) {
            cum += pmf[static_cast<std::size_t>(c)];
            if (v <= cum) {
                class_counts[static_cast<std::size_t>(c)] += 1.0;
                break;
            }
        }
    }
    double mean_w = sum_w / n;
    // Marginal mean 24.3 with SD(w) ~ sqrt(E var + var E) ~ 8; 3 MC SEs.
    CHECK(std::fabs(mean_w - 24.3) < 3.0 * 8.0 / std::sqrt(static_cast<double>(n)));

    // Class frequencies at (u=0, w=22) against (28.3, 66.3, 5.4, 0.04)%.
    const double expected[4] = {0.283, 0.663, 0.054, 0.0004};
    for (int c = 0; c < 4; ++c) {
        double p = class_counts[static_cast<std::size_t>(c)] / n;
        double se = std::sqrt(expected[c] * (1.0 - expected[c]) / n);
        CHECK(std::fabs(p - expected[c]) < 3.0 * se + 1e-12);
    }
}

TEST_CASE("ema generators respect their contracts") {
    EmaGenerator bad;
    bad.kind = EmaGenerator::Kind::FixedVector;
    bad.values = {20, 0};
    CHECK_THROWS_AS(bad.validate(), validation_error);

    EmaGenerator fixed;
    fixed.kind = EmaGenerator::Kind::FixedVector;
    fixed.values = {10, 20, 30};
    Rng rng(1);
    CHECK(fixed.sample(rng, 1) == 10);
    CHECK(fixed.sample(rng, 2) == 20);
    CHECK(fixed.sample(rng, 4) == 10);

    EmaGenerator nb;
    double sum = 0.0;
    int below5 = 0, above60 = 0;
    for (int i = 0; i < 20000; ++i) {
        int x = nb.sample(rng, 1);
        CHECK(x >= 1);
        sum += x;
        below5 += x < 5 ? 1 : 0;
        above60 += x > 60 ? 1 : 0;
    }
    CHECK(sum / 20000.0 == doctest::Approx(22.0).epsilon(0.03));
    // Counts fall mostly in [5, 60].
    CHECK(below5 < 20000 / 20);
    CHECK(above60 < 20000 / 20);
}

TEST_CASE("visit-day pattern and covariates land in the dataset") {
    Scenario sc = scenario_case2();
    sc.design.n_subjects = 5;
    sc.design.days_per_subject = 16;
    sc.design.visit_days = {3, 8, 15};
    sc.design.covariate_names = {"ftnd"};
    sc.spec.recall_covariate_names = {"ftnd"};
    sc.spec.heaping_covariate_names = {visit_day_covariate};
    sc.theta.beta2 = {0.1};
    sc.theta.beta3 = {-2.5};
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(3));
    for (const auto& s : sim.dataset.subjects) {
        CHECK(s.covariates.count("ftnd") == 1);
        for (const auto& d : s.days)
            CHECK(d.is_visit_day == (d.day_index == 3 || d.day_index == 8 ||
                                     d.day_index == 15));
    }

    Scenario missing = sc;
    missing.design.covariate_names = {};
    CHECK_THROWS_AS(
        generate_dataset(missing.theta, missing.design, missing.spec,
                         SeedSequencer(3)),
        validation_error);
}

TEST_CASE("identical seeds give identical datasets and study reports") {
    Scenario sc = scenario_case2();
    sc.design.n_subjects = 12;
    SimulatedData a = generate_dataset(sc.theta, sc.design, sc.spec,
                                       SeedSequencer(8));
    SimulatedData b = generate_dataset(sc.theta, sc.design, sc.spec,
                                       SeedSequencer(8));
    for (std::size_t i = 0; i < a.dataset.subjects.size(); ++i) {
        CHECK(a.truth.subjects[i].b == b.truth.subjects[i].b);
        for (std::size_t t = 0; t < a.dataset.subjects[i].days.size(); ++t) {
            CHECK(a.dataset.subjects[i].days[t].ema_count ==
                  b.dataset.subjects[i].days[t].ema_count);
            CHECK(a.dataset.subjects[i].days[t].tlfb_count ==
                  b.dataset.subjects[i].days[t].tlfb_count);
        }
    }

    StudyOptions options;
    options.n_replicates = 2;
    ScenarioReport ra = run_simulation_study(sc.theta, sc.design, sc.spec, options,
                                             SeedSequencer(99));
    ScenarioReport rb = run_simulation_study(sc.theta, sc.design, sc.spec, options,
                                             SeedSequencer(99));
    CHECK(ra.mean_estimate == rb.mean_estimate);
    CHECK(ra.coverage_percent == rb.coverage_percent);
    CHECK(ra.n_failed == rb.n_failed);
}

TEST_CASE("a small study aggregates consistent summaries") {
    Scenario sc = scenario_case2();
    sc.design.n_subjects = 35;
    StudyOptions options;
    options.n_replicates = 4;
    ScenarioReport report = run_simulation_study(sc.theta, sc.design, sc.spec,
                                                 options, SeedSequencer(21));
    CHECK(report.n_replicates + report.n_failed == 4);
    REQUIRE(report.n_replicates >= 3);

    // RMSE identity: rmse^2 ~= bias^2 + sd^2 (R-1)/R.
    double r = static_cast<double>(report.n_replicates);
    for (Eigen::Index j = 0; j < report.rmse.size(); ++j) {
        double lhs = report.rmse(j) * report.rmse(j);
        double rhs = report.bias(j) * report.bias(j) +
                     report.sd_estimate(j) * report.sd_estimate(j) * (r - 1.0) / r;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }

    std::string text = format_scenario_report(report);
    CHECK(text.find("beta1") != std::string::npos);
    CHECK(text.find("sigma_u") != std::string::npos);

    StudyOptions bad = options;
    bad.n_replicates = 1;
    CHECK_THROWS_AS(run_simulation_study(sc.theta, sc.design, sc.spec, bad,
                                         SeedSequencer(1)),
                    validation_error);
}
