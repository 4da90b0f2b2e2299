#include "recount/likelihood.hpp"

#include "recount/math.hpp"
#include "recount/model.hpp"
#include "recount/quadrature.hpp"
#include "recount/rng.hpp"
#include "recount/simulation.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace recount;

TEST_CASE("gauss-hermite rule: normalized, symmetric, exact on moments") {
    for (int n : {5, 20, 40}) {
        QuadratureRule rule = gauss_hermite_normal(n);
        double total = 0.0, m2 = 0.0, m4 = 0.0, expz = 0.0;
        for (std::size_t i = 0; i < rule.size(); ++i) {
            total += rule.weights[i];
            m2 += rule.weights[i] * rule.nodes[i] * rule.nodes[i];
            m4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
            expz += rule.weights[i] * std::exp(rule.nodes[i]);
        }
        CHECK(std::fabs(total - 1.0) < 1e-10);
        CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
        if (n >= 20) CHECK(expz == doctest::Approx(std::exp(0.5)).epsilon(1e-12));
        for (std::size_t i = 0; i < rule.size() / 2; ++i)
            CHECK(rule.nodes[i] == -rule.nodes[rule.size() - 1 - i]);
    }
}

namespace {

SubjectRecord one_day_subject(int x, int y) {
    SubjectRecord s;
    s.subject_id = "s1";
    ObservationDay d;
    d.day_index = 1;
    d.ema_count = x;
    d.tlfb_count = y;
    s.days.push_back(d);
    return s;
}

} // namespace

TEST_CASE("degenerate random effects collapse the integral") {
    Theta theta = scenario_case1().theta;
    theta.sigma_b = 1e-12;
    theta.sigma_u = 1e-12;
    ModelSpec spec;
    QuadratureRule rule = gauss_hermite_normal(20);

    SubjectRecord subject = one_day_subject(20, 7);
    double lm = recall_log_mean(theta, 20, {}, 0.0);
    double expected =
        poisson_log_pmf_logmean(7, lm) + log_heaping_pmf(theta, 7, {}, 0.0)[0];
    CHECK(subject_loglik(theta, subject, spec, rule) ==
          doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("permuting a subject's days leaves the log-likelihood unchanged") {
    Scenario sc = scenario_case1();
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(11));
    SubjectRecord subject = sim.dataset.subjects[0];
    QuadratureRule rule = gauss_hermite_normal(20);
    double before = subject_loglik(sc.theta, subject, sc.spec, rule);

    std::reverse(subject.days.begin(), subject.days.end());
    for (std::size_t t = 0; t < subject.days.size(); ++t)
        subject.days[t].day_index = static_cast<int>(t) + 1;
    double after = subject_loglik(sc.theta, subject, sc.spec, rule);
    CHECK(before == doctest::Approx(after).epsilon(1e-12));
}

TEST_CASE("fast evaluator agrees with the reference implementation") {
    Scenario sc = scenario_case1();
    sc.design.n_subjects = 8;
    sc.design.visit_days = {3, 8};
    sc.spec.heaping_covariate_names = {visit_day_covariate};
    sc.theta.beta3 = {-2.0};
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(17));

    QuadratureRule rule = gauss_hermite_normal(20);
    LikelihoodEvaluator eval(sim.dataset, sc.spec, rule, 1);
    Rng rng(5);
    for (int rep = 0; rep < 3; ++rep) {
        Theta theta = sc.theta;
        theta.beta0 += rng.normal(0.0, 0.2);
        theta.beta1 += rng.normal(0.0, 0.1);
        theta.gamma0 += rng.normal(0.0, 0.02);
        theta.beta3[0] += rng.normal(0.0, 0.3);
        for (std::size_t i = 0; i < sim.dataset.subjects.size(); ++i) {
            double fast = eval.subject_loglik(theta, i);
            double slow =
                subject_loglik(theta, sim.dataset.subjects[i], sc.spec, rule);
            CHECK(fast == doctest::Approx(slow).epsilon(1e-10));
        }
    }
}

TEST_CASE("dataset log-likelihood adds per-subject contributions") {
    Scenario sc = scenario_case2();
    sc.design.n_subjects = 1;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(3));
    Dataset two = sim.dataset;
    SubjectRecord copy = two.subjects[0];
    copy.subject_id = "copy";
    two.subjects.push_back(copy);

    QuadratureRule rule = gauss_hermite_normal(20);
    double single = dataset_loglik(sc.theta, sim.dataset, sc.spec, rule);
    double doubled = dataset_loglik(sc.theta, two, sc.spec, rule);
    CHECK(doubled == doctest::Approx(2.0 * single).epsilon(1e-12));

    Dataset empty;
    CHECK_THROWS_AS(dataset_loglik(sc.theta, empty, sc.spec, rule),
                    validation_error);
}

TEST_CASE("thread count does not change the dataset log-likelihood") {
    Scenario sc = scenario_case1();
    sc.design.n_subjects = 12;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(23));
    QuadratureRule rule = gauss_hermite_normal(20);
    double one = dataset_loglik(sc.theta, sim.dataset, sc.spec, rule, 1);
    double four = dataset_loglik(sc.theta, sim.dataset, sc.spec, rule, 4);
    CHECK(one == four);  // bitwise: fixed-order reduction
}

TEST_CASE("quadrature matches a Monte Carlo oracle on one subject") {
    Scenario sc = scenario_case1();
    sc.design.n_subjects = 1;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(29));
    const SubjectRecord& subject = sim.dataset.subjects[0];

    QuadratureRule rule = gauss_hermite_normal(20);
    double quad = subject_loglik(sc.theta, subject, sc.spec, rule);

    // Plain Monte Carlo over the two random effects.
    const int n_draws = 100000;
    Rng rng(31);
    std::vector<double> log_g(n_draws);
    for (int i = 0; i < n_draws; ++i) {
        double b = rng.normal(0.0, sc.theta.sigma_b);
        double u = rng.normal(0.0, sc.theta.sigma_u);
        double acc = 0.0;
        for (const auto& day : subject.days)
            acc += log_obs_prob_given_effects(sc.theta, day, {}, {}, b, u);
        log_g[static_cast<std::size_t>(i)] = acc;
    }
    double m = *std::max_element(log_g.begin(), log_g.end());
    double mean = 0.0;
    for (double lg : log_g) mean += std::exp(lg - m);
    mean /= n_draws;
    double sd = 0.0;
    for (double lg : log_g) {
        double dev = std::exp(lg - m) - mean;
        sd += dev * dev;
    }
    sd = std::sqrt(sd / (n_draws - 1.0) / n_draws);
    double mc_log = m + std::log(mean);
    double se_log = sd / mean;

    CHECK(std::fabs(quad - mc_log) < 3.0 * se_log);
}

TEST_CASE("20 and 40 node rules agree to one part in a million") {
    Scenario sc = scenario_case2();
    sc.design.n_subjects = 5;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(37));
    double l20 = dataset_loglik(sc.theta, sim.dataset, sc.spec,
                                gauss_hermite_normal(20));
    double l40 = dataset_loglik(sc.theta, sim.dataset, sc.spec,
                                gauss_hermite_normal(40));
    CHECK(std::fabs(l20 - l40) / std::fabs(l20) < 1e-6);
}

TEST_CASE("log prior: modes, moments and the ordering indicator") {
    PriorConfig prior;
    Theta theta = scenario_case2().theta;

    // beta1 = 1 maximizes its prior term.
    Theta shifted = theta;
    shifted.beta1 = 1.3;
    Theta at_mode = theta;
    at_mode.beta1 = 1.0;
    CHECK(log_prior(at_mode, prior) > log_prior(shifted, prior));

    // The variance prior peaks at scale/(shape+1).
    Theta sig = theta;
    sig.sigma_b = std::sqrt(prior.variance_ig_scale / (prior.variance_ig_shape + 1.0));
    Theta sig_off = theta;
    sig_off.sigma_b = std::sqrt(0.08);
    // Compare the sigma_b prior terms in isolation.
    double term_mode = inverse_gamma_log_pdf(sig.sigma_b * sig.sigma_b, 3.0, 2.0);
    double term_off = inverse_gamma_log_pdf(sig_off.sigma_b * sig_off.sigma_b, 3.0, 2.0);
    CHECK(term_mode > term_off);

    Theta bad = theta;
    bad.gamma2 = bad.gamma1 + 1.0;  // ordering violated
    CHECK(log_prior(bad, prior) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("bic formula and comparisons") {
    CHECK(bic(-7000.0, 8, 100) == doctest::Approx(14036.84).epsilon(1e-6));
    CHECK(bic(-7000.0, 6, 100) < bic(-7000.0, 8, 100));
    CHECK_THROWS_AS(bic(-10.0, 3, 0), validation_error);
}

TEST_CASE("log posterior adds likelihood and prior") {
    Scenario sc = scenario_case2();
    sc.design.n_subjects = 3;
    SimulatedData sim = generate_dataset(sc.theta, sc.design, sc.spec,
                                         SeedSequencer(41));
    QuadratureRule rule = gauss_hermite_normal(20);
    PriorConfig prior;
    double lp = log_posterior(sc.theta, sim.dataset, sc.spec, rule, prior);
    double ll = dataset_loglik(sc.theta, sim.dataset, sc.spec, rule);
    CHECK(lp == doctest::Approx(ll + log_prior(sc.theta, prior)).epsilon(1e-12));
    CHECK(std::isfinite(lp));

    Theta bad = sc.theta;
    bad.gamma2 = bad.gamma1 + 1.0;
    CHECK(log_posterior(bad, sim.dataset, sc.spec, rule, prior) ==
          -std::numeric_limits<double>::infinity());
}
