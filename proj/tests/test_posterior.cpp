#include <set>
#include "recount/posterior.hpp"

#include "recount/math.hpp"
#include "recount/simulation.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>

using namespace recount;

namespace {

/// Fabricates a ModeResult with a given center and information matrix, as a
/// synthetic sampling target (no data involved).
ModeResult synthetic_mode(const Eigen::VectorXd& center,
                          const Eigen::MatrixXd& information) {
    ModeResult mode;
    ModelSpec spec;
    mode.layout = ParamLayout::from_spec(spec);
    REQUIRE(center.size() == static_cast<Eigen::Index>(mode.layout.dim()));
    mode.phi_hat = center;
    mode.theta_hat = mode.layout.from_unconstrained(center);
    mode.information = information;
    mode.free_indices.clear();
    for (std::size_t j = 0; j < mode.layout.dim(); ++j)
        mode.free_indices.push_back(static_cast<int>(j));
    mode.converged = true;
    return mode;
}

Eigen::VectorXd default_center() {
    ModelSpec spec;
    ParamLayout layout = ParamLayout::from_spec(spec);
    return layout.to_unconstrained(scenario_case2().theta);
}

double log_t_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                     const Eigen::MatrixXd& information, double df) {
    Eigen::Index d = x.size();
    Eigen::LLT<Eigen::MatrixXd> llt(information);
    Eigen::MatrixXd lower = llt.matrixL();
    double log_det_sigma = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det_sigma -= 2.0 * std::log(lower(i, i));
    double mahal = (lower.transpose() * (x - mu)).squaredNorm();
    return std::lgamma(0.5 * (df + d)) - std::lgamma(0.5 * df) -
           0.5 * d * std::log(df * pi) - 0.5 * log_det_sigma -
           0.5 * (df + d) * std::log1p(mahal / df);
}

double log_gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& information) {
    Eigen::Index d = x.size();
    Eigen::LLT<Eigen::MatrixXd> llt(information);
    Eigen::MatrixXd lower = llt.matrixL();
    double log_det_info = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det_info += 2.0 * std::log(lower(i, i));
    double mahal = (lower.transpose() * (x - mu)).squaredNorm();
    return 0.5 * log_det_info - 0.5 * d * log_2pi - 0.5 * mahal;
}

} // namespace

TEST_CASE("self-importance: sampling a t target gives flat weights") {
    Eigen::VectorXd center = default_center();
    Eigen::MatrixXd info =
        Eigen::MatrixXd::Identity(center.size(), center.size()) * 4.0;
    ModeResult mode = synthetic_mode(center, info);

    auto target = [&](const Eigen::VectorXd& phi) {
        return log_t_density(phi, center, info, 5.0) + 3.7;  // arbitrary constant
    };
    std::size_t dropped = 9;
    auto draws = draw_proposals(mode, target, 4000, 5, SeedSequencer(31), 1, &dropped);
    CHECK(dropped == 0);
    REQUIRE(draws.size() == 4000);
    for (const auto& d : draws)
        CHECK(d.log_weight == doctest::Approx(3.7).epsilon(1e-9));
    CHECK(effective_sample_size(draws) == doctest::Approx(4000.0).epsilon(1e-9));
}

TEST_CASE("gaussian target under a t5 proposal keeps a healthy ESS") {
    Eigen::VectorXd center = default_center();
    Eigen::MatrixXd info(center.size(), center.size());
    info.setIdentity();
    info *= 2.5;
    ModeResult mode = synthetic_mode(center, info);

    // Closed-form weight oracle: both densities known analytically.
    auto target = [&](const Eigen::VectorXd& phi) {
        return log_gaussian_density(phi, center, info);
    };
    auto draws = draw_proposals(mode, target, 4000, 5, SeedSequencer(37));
    double ess = effective_sample_size(draws);
    CHECK(ess / 4000.0 > 0.5);
    CHECK(ess / 4000.0 < 1.0);
}

TEST_CASE("importance estimates converge at the root-K rate") {
    Eigen::VectorXd center = default_center();
    Eigen::MatrixXd info =
        Eigen::MatrixXd::Identity(center.size(), center.size()) * 3.0;
    ModeResult mode = synthetic_mode(center, info);
    Eigen::VectorXd shifted = center;
    shifted(0) += 0.2;  // target mean differs from the proposal center
    auto target = [&](const Eigen::VectorXd& phi) {
        return log_gaussian_density(phi, shifted, info);
    };

    auto mean_error = [&](int k) {
        double total = 0.0;
        const int reps = 20;
        for (int rep = 0; rep < reps; ++rep) {
            auto draws = draw_proposals(mode, target, k, 5,
                                        SeedSequencer(1000 + rep * 17 + k));
            double max_lw = -1e300;
            for (const auto& d : draws) max_lw = std::max(max_lw, d.log_weight);
            double num = 0.0, den = 0.0;
            for (const auto& d : draws) {
                double w = std::exp(d.log_weight - max_lw);
                num += w * d.phi(0);
                den += w;
            }
            total += std::fabs(num / den - shifted(0));
        }
        return total / reps;
    };

    double e500 = mean_error(500);
    double e2000 = mean_error(2000);
    double e8000 = mean_error(8000);
    CHECK(e2000 < e500);
    CHECK(e8000 < e2000);
    CHECK(e8000 < 0.5 * e500);  // expected factor 4 at the root-K rate
}

TEST_CASE("resampling: equal weights draw uniformly, a dominant weight wins") {
    Eigen::VectorXd center = default_center();
    ModelSpec spec;
    ParamLayout layout = ParamLayout::from_spec(spec);

    std::vector<WeightedDraw> draws;
    for (int i = 0; i < 200; ++i) {
        WeightedDraw d;
        Eigen::VectorXd phi = center;
        phi(0) = static_cast<double>(i);  // marker
        d.phi = phi;
        d.theta = layout.from_unconstrained(phi);
        d.log_weight = -12.0;  // equal
        draws.push_back(d);
    }
    auto resampled = sir_resample(draws, 200, SeedSequencer(4));
    REQUIRE(resampled.size() == 200);
    std::set<int> distinct;
    for (const auto& t : resampled) distinct.insert(static_cast<int>(t.beta0));
    CHECK(distinct.size() > 100);  // with replacement: ~63% distinct expected

    draws[17].log_weight = 40.0;  // dominates everything
    auto winner = sir_resample(draws, 50, SeedSequencer(5));
    for (const auto& t : winner) CHECK(t.beta0 == doctest::Approx(17.0));

    for (auto& d : draws) d.log_weight = -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(sir_resample(draws, 10, SeedSequencer(6)), numerical_error);
    CHECK_THROWS_AS(sir_resample(draws, 10000, SeedSequencer(6)), validation_error);
}

TEST_CASE("resampled mean matches the weighted mean of proposals") {
    Eigen::VectorXd center = default_center();
    Eigen::MatrixXd info =
        Eigen::MatrixXd::Identity(center.size(), center.size()) * 5.0;
    ModeResult mode = synthetic_mode(center, info);
    Eigen::VectorXd shifted = center;
    shifted(1) += 0.15;
    auto target = [&](const Eigen::VectorXd& phi) {
        return log_gaussian_density(phi, shifted, info);
    };
    auto draws = draw_proposals(mode, target, 4000, 5, SeedSequencer(11));

    double max_lw = -1e300;
    for (const auto& d : draws) max_lw = std::max(max_lw, d.log_weight);
    double num = 0.0, den = 0.0, num2 = 0.0;
    for (const auto& d : draws) {
        double w = std::exp(d.log_weight - max_lw);
        num += w * d.theta.beta1;
        num2 += w * d.theta.beta1 * d.theta.beta1;
        den += w;
    }
    double weighted_mean = num / den;
    double weighted_sd = std::sqrt(num2 / den - weighted_mean * weighted_mean);

    auto resampled = sir_resample(draws, 1000, SeedSequencer(12));
    double res_mean = 0.0;
    for (const auto& t : resampled) res_mean += t.beta1;
    res_mean /= static_cast<double>(resampled.size());
    double mc_err = 3.0 * weighted_sd / std::sqrt(1000.0);
    CHECK(std::fabs(res_mean - weighted_mean) < mc_err);
}

TEST_CASE("sir draws reproduce the weighted distribution (KS check)") {
    Eigen::VectorXd center = default_center();
    Eigen::MatrixXd info =
        Eigen::MatrixXd::Identity(center.size(), center.size()) * 3.0;
    ModeResult mode = synthetic_mode(center, info);
    auto target = [&](const Eigen::VectorXd& phi) {
        return log_gaussian_density(phi, center, info);
    };
    auto draws = draw_proposals(mode, target, 4000, 5, SeedSequencer(21));
    auto resampled = sir_resample(draws, 1000, SeedSequencer(22));

    // Weighted CDF of proposals vs empirical CDF of the resample, on beta0.
    std::vector<std::pair<double, double>> wcdf;  // (value, weight)
    double max_lw = -1e300;
    for (const auto& d : draws) max_lw = std::max(max_lw, d.log_weight);
    double total = 0.0;
    for (const auto& d : draws) {
        double w = std::exp(d.log_weight - max_lw);
        wcdf.emplace_back(d.theta.beta0, w);
        total += w;
    }
    std::sort(wcdf.begin(), wcdf.end());
    std::vector<double> res_values;
    for (const auto& t : resampled) res_values.push_back(t.beta0);
    std::sort(res_values.begin(), res_values.end());

    double ks = 0.0;
    double cum = 0.0;
    std::size_t ri = 0;
    for (const auto& [value, weight] : wcdf) {
        cum += weight / total;
        while (ri < res_values.size() && res_values[ri] <= value) ++ri;
        double empirical = static_cast<double>(ri) / res_values.size();
        ks = std::max(ks, std::fabs(empirical - cum));
    }
    CHECK(ks < 0.05);
}

TEST_CASE("posterior moments: degenerate and synthetic-gaussian checks") {
    Eigen::VectorXd center = default_center();
    ModelSpec spec;
    ParamLayout layout = ParamLayout::from_spec(spec);
    ModeResult mode = synthetic_mode(
        center, Eigen::MatrixXd::Identity(center.size(), center.size()));

    std::vector<WeightedDraw> single(1);
    single[0].phi = center;
    single[0].theta = layout.from_unconstrained(center);
    single[0].log_weight = -3.0;
    PosteriorSummary s = posterior_moments(single, mode, spec);
    Eigen::VectorXd values = layout.theta_values(single[0].theta);
    for (std::size_t j = 0; j < s.params.size(); ++j) {
        CHECK(s.params[j].mean ==
              doctest::Approx(values(static_cast<Eigen::Index>(j))));
        CHECK(s.params[j].sd == 0.0);
        CHECK(s.params[j].ci_lower <= s.params[j].ci_upper);
    }

    // Synthetic Gaussian posterior in phi: weighted mean/SD of beta0 should
    // match the target within 3 MC standard errors.
    Eigen::MatrixXd info =
        Eigen::MatrixXd::Identity(center.size(), center.size()) * 4.0;
    ModeResult mode2 = synthetic_mode(center, info);
    Eigen::VectorXd shifted = center;
    shifted(0) += 0.1;
    auto target = [&](const Eigen::VectorXd& phi) {
        return log_gaussian_density(phi, shifted, info);
    };
    auto draws = draw_proposals(mode2, target, 8000, 5, SeedSequencer(41));
    PosteriorSummary g = posterior_moments(draws, mode2, spec);
    double true_sd = std::sqrt(1.0 / 4.0);
    double ess = g.ess;
    CHECK(std::fabs(g.params[0].mean - shifted(0)) < 3.0 * true_sd / std::sqrt(ess));
    CHECK(g.params[0].sd == doctest::Approx(true_sd).epsilon(0.1));
    // Central interval of a gaussian: mean +- 1.96 sd.
    CHECK(g.params[0].ci_lower ==
          doctest::Approx(shifted(0) - 1.96 * true_sd).epsilon(0.05));
    CHECK(g.params[0].ci_upper ==
          doctest::Approx(shifted(0) + 1.96 * true_sd).epsilon(0.05));
    CHECK(g.params[0].mode == doctest::Approx(center(0)));
}

TEST_CASE("constraints hold for every reported draw") {
    Eigen::VectorXd center = default_center();
    Eigen::MatrixXd info =
        Eigen::MatrixXd::Identity(center.size(), center.size()) * 0.5;
    ModeResult mode = synthetic_mode(center, info);
    auto target = [&](const Eigen::VectorXd& phi) {
        return log_t_density(phi, center, info, 5.0);
    };
    auto draws = draw_proposals(mode, target, 2000, 5, SeedSequencer(51));
    for (const auto& d : draws) {
        CHECK(d.theta.gamma1 > d.theta.gamma2);
        CHECK(d.theta.gamma2 > d.theta.gamma3);
        CHECK(d.theta.sigma_b > 0.0);
        CHECK(d.theta.sigma_u > 0.0);
    }
}
