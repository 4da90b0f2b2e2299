#include "recount/simulation.hpp"

#include "recount/math.hpp"
#include "recount/model.hpp"
#include "recount/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace recount {

void EmaGenerator::validate() const {
    switch (kind) {
        case Kind::NegativeBinomial:
            if (!(mean > 0.0) || !(dispersion > 0.0))
                throw validation_error("ema generator: mean and dispersion must be "
                                       "positive");
            break;
        case Kind::FixedVector:
        case Kind::Empirical:
            if (values.empty())
                throw validation_error("ema generator: no values supplied");
            for (int v : values)
                if (v < 1)
                    throw validation_error(
                        "ema generator: counts must be >= 1 (got " +
                        std::to_string(v) + ")");
            break;
    }
}

int EmaGenerator::sample(Rng& rng, int day_number) const {
    switch (kind) {
        case Kind::NegativeBinomial: {
            // Gamma-Poisson mixture, resampled until >= 1.
            for (;;) {
                double lambda = rng.gamma(dispersion, mean / dispersion);
                int x = rng.poisson(lambda);
                if (x >= 1) return x;
            }
        }
        case Kind::FixedVector:
            return values[static_cast<std::size_t>(day_number - 1) % values.size()];
        case Kind::Empirical:
            return values[rng.below(values.size())];
    }
    return 1;
}

void SimulationDesign::validate() const {
    if (n_subjects < 1 || days_per_subject < 1)
        throw validation_error("simulation design: need at least one subject and "
                               "one day");
    ema.validate();
    for (int v : visit_days)
        if (v < 1)
            throw validation_error("simulation design: visit day indices are 1-based");
}

namespace {

Scenario make_scenario(std::string name, double beta0, double beta1,
                       double sigma_b2, double gamma1, double gamma2, double gamma3,
                       double gamma0, double sigma_u2) {
    Scenario sc;
    sc.name = std::move(name);
    sc.theta.beta0 = beta0;
    sc.theta.beta1 = beta1;
    sc.theta.sigma_b = std::sqrt(sigma_b2);
    sc.theta.gamma1 = gamma1;
    sc.theta.gamma2 = gamma2;
    sc.theta.gamma3 = gamma3;
    sc.theta.gamma0 = gamma0;
    sc.theta.sigma_u = std::sqrt(sigma_u2);
    sc.design.n_subjects = 100;
    sc.design.days_per_subject = 12;
    return sc;
}

} // namespace

Scenario scenario_case1() {
    return make_scenario("case1", 2.358, 0.2628, 0.09, -1.485, -5.280, -10.141,
                         0.1098, 7.1);
}

Scenario scenario_case2() {
    return make_scenario("case2", 0.0, 1.0, 0.05, -1.07, -4.37, -6.52, 0.088, 5.9);
}

Scenario scenario_by_name(const std::string& name) {
    if (name == "case1") return scenario_case1();
    if (name == "case2") return scenario_case2();
    throw validation_error("unknown scenario '" + name + "' (case1 or case2)");
}

SimulatedData generate_dataset(const Theta& theta, const SimulationDesign& design,
                               const ModelSpec& spec, const SeedSequencer& seed) {
    theta.validate();
    design.validate();
    spec.validate();
    spec.check_theta_shape(theta);
    for (const auto& name : spec.recall_covariate_names)
        if (name != visit_day_covariate &&
            std::find(design.covariate_names.begin(), design.covariate_names.end(),
                      name) == design.covariate_names.end())
            throw validation_error("covariate '" + name +
                                   "' is in the model but not in the design");
    for (const auto& name : spec.heaping_covariate_names)
        if (name != visit_day_covariate &&
            std::find(design.covariate_names.begin(), design.covariate_names.end(),
                      name) == design.covariate_names.end())
            throw validation_error("covariate '" + name +
                                   "' is in the model but not in the design");

    SimulatedData out;
    out.dataset.covariate_names = design.covariate_names;
    out.dataset.subjects.resize(static_cast<std::size_t>(design.n_subjects));
    out.truth.subjects.resize(static_cast<std::size_t>(design.n_subjects));

    for (int i = 0; i < design.n_subjects; ++i) {
        Rng rng(seed.substream(static_cast<std::uint64_t>(i)));
        SubjectRecord& subj = out.dataset.subjects[static_cast<std::size_t>(i)];
        LatentTruth::Subject& truth = out.truth.subjects[static_cast<std::size_t>(i)];

        std::ostringstream id;
        id << "S" << std::setw(4) << std::setfill('0') << (i + 1);
        subj.subject_id = id.str();

        truth.b = rng.normal(0.0, theta.sigma_b);
        truth.u = rng.normal(0.0, theta.sigma_u);
        for (const auto& name : design.covariate_names)
            subj.covariates[name] = rng.normal();

        subj.z_recall.assign(spec.recall_covariate_names.size(), 0.0);
        for (std::size_t j = 0; j < spec.recall_covariate_names.size(); ++j)
            if (spec.recall_covariate_names[j] != visit_day_covariate)
                subj.z_recall[j] = subj.covariates.at(spec.recall_covariate_names[j]);
        subj.z_heaping.assign(spec.heaping_covariate_names.size(), 0.0);
        for (std::size_t j = 0; j < spec.heaping_covariate_names.size(); ++j)
            if (spec.heaping_covariate_names[j] != visit_day_covariate)
                subj.z_heaping[j] = subj.covariates.at(spec.heaping_covariate_names[j]);

        subj.days.resize(static_cast<std::size_t>(design.days_per_subject));
        truth.w.resize(subj.days.size());
        truth.g.resize(subj.days.size());
        for (int t = 0; t < design.days_per_subject; ++t) {
            ObservationDay& day = subj.days[static_cast<std::size_t>(t)];
            day.day_index = t + 1;
            day.is_visit_day =
                std::find(design.visit_days.begin(), design.visit_days.end(), t + 1) !=
                design.visit_days.end();
            day.ema_count = design.ema.sample(rng, t + 1);
            if (day.ema_count < 1)
                throw validation_error("ema generator produced a count below 1");

            std::vector<double> zr(spec.recall_covariate_names.size());
            for (std::size_t j = 0; j < zr.size(); ++j)
                zr[j] = spec.recall_design_value(subj, day, j);
            std::vector<double> zh(spec.heaping_covariate_names.size());
            for (std::size_t j = 0; j < zh.size(); ++j)
                zh[j] = spec.heaping_design_value(subj, day, j);

            double mean = std::exp(recall_log_mean(theta, day.ema_count, zr, truth.b));
            int w = rng.poisson(mean);
            auto pg = heaping_pmf(theta, w, zh, truth.u);
            double v = rng.u01();
            int cls = 3;
            double cum = 0.0;
            for (int c = 0; c < 4; ++c) {
                cum += pg[static_cast<std::size_t>(c)];
                if (v <= cum) {
                    cls = c;
                    break;
                }
            }
            HeapingClass g = static_cast<HeapingClass>(cls + 1);
            day.tlfb_count = coarsen(w, g);
            truth.w[static_cast<std::size_t>(t)] = w;
            truth.g[static_cast<std::size_t>(t)] = g;
        }
    }
    return out;
}

namespace {

Eigen::VectorXd hessian_ci_halfwidths(const ModeResult& fit, double level) {
    // Delta-method SEs in the constrained parameterization from the
    // phi-space information.
    const ParamLayout& layout = fit.layout;
    if (fit.free_indices.size() != layout.dim())
        throw validation_error("hessian CIs need a fit with no fixed parameters");
    Eigen::MatrixXd cov = fit.information.llt().solve(
        Eigen::MatrixXd::Identity(fit.information.rows(), fit.information.cols()));
    Eigen::MatrixXd jac = layout.dtheta_dphi(fit.phi_hat);
    Eigen::MatrixXd cov_theta = jac * cov * jac.transpose();
    double z = normal_quantile(0.5 * (1.0 + level));
    Eigen::VectorXd half(cov_theta.rows());
    for (Eigen::Index j = 0; j < cov_theta.rows(); ++j)
        half(j) = z * std::sqrt(std::max(cov_theta(j, j), 0.0));
    return half;
}

} // namespace

ScenarioReport run_simulation_study(const Theta& truth,
                                    const SimulationDesign& design,
                                    const ModelSpec& spec, const StudyOptions& options,
                                    const SeedSequencer& seed) {
    if (options.n_replicates < 2)
        throw validation_error("run_simulation_study: need at least 2 replicates");
    truth.validate();
    spec.check_theta_shape(truth);

    ParamLayout layout = ParamLayout::from_spec(spec);
    const Eigen::Index dim = static_cast<Eigen::Index>(layout.dim());

    std::vector<Eigen::VectorXd> estimates(options.n_replicates);
    std::vector<Eigen::VectorXd> lower(options.n_replicates);
    std::vector<Eigen::VectorXd> upper(options.n_replicates);
    std::vector<char> kept(options.n_replicates, 0);

    parallel_for(
        static_cast<std::size_t>(options.n_replicates), options.n_threads,
        [&](std::size_t r) {
            SeedSequencer rep_seed = seed.substream(r);
            SimulatedData sim =
                generate_dataset(truth, design, spec, rep_seed.stream("data"));
            FitOptions fit_options = options.fit;
            fit_options.n_threads = 1;
            try {
                ModeResult fit = find_posterior_mode(sim.dataset, spec, fit_options);
                if (!fit.converged) return;
                estimates[r] = layout.theta_values(fit.theta_hat);
                if (options.ci_method == CiMethod::Hessian) {
                    Eigen::VectorXd half = hessian_ci_halfwidths(fit, options.ci_level);
                    lower[r] = estimates[r] - half;
                    upper[r] = estimates[r] + half;
                } else {
                    // Refits warm-start at the fitted value with its local
                    // curvature, which cuts each replicate's cost sharply.
                    FitOptions boot_options = fit_options;
                    boot_options.bfgs.initial_inverse_hessian =
                        fit.information.llt().solve(Eigen::MatrixXd::Identity(
                            fit.information.rows(), fit.information.cols()));
                    BootstrapResult boot = parametric_bootstrap_ci(
                        fit.theta_hat, design, spec, options.bootstrap_replicates,
                        options.ci_level, rep_seed.stream("boot"), boot_options);
                    lower[r] = boot.lower;
                    upper[r] = boot.upper;
                }
                kept[r] = 1;
            } catch (const std::exception&) {
                // replicate dropped and counted
            }
        });

    int n_kept = static_cast<int>(std::count(kept.begin(), kept.end(), 1));
    ScenarioReport report;
    report.param_names = layout.param_names(spec);
    report.true_values = layout.theta_values(truth);
    report.n_replicates = n_kept;
    report.n_failed = options.n_replicates - n_kept;
    report.ci_method = options.ci_method;
    report.ci_level = options.ci_level;
    if (report.n_failed > options.n_replicates / 5)
        throw numerical_error("run_simulation_study: more than 20% of replicates "
                              "failed (" +
                              std::to_string(report.n_failed) + " of " +
                              std::to_string(options.n_replicates) + ")");

    report.mean_estimate = Eigen::VectorXd::Zero(dim);
    report.sd_estimate = Eigen::VectorXd::Zero(dim);
    report.bias = Eigen::VectorXd::Zero(dim);
    report.rmse = Eigen::VectorXd::Zero(dim);
    report.coverage_percent = Eigen::VectorXd::Zero(dim);

    for (int r = 0; r < options.n_replicates; ++r) {
        if (!kept[r]) continue;
        report.mean_estimate += estimates[r];
        for (Eigen::Index j = 0; j < dim; ++j) {
            double err = estimates[r](j) - report.true_values(j);
            report.rmse(j) += err * err;
            if (lower[r](j) <= report.true_values(j) &&
                report.true_values(j) <= upper[r](j))
                report.coverage_percent(j) += 1.0;
        }
    }
    report.mean_estimate /= static_cast<double>(n_kept);
    report.rmse = (report.rmse / static_cast<double>(n_kept)).cwiseSqrt();
    report.coverage_percent *= 100.0 / static_cast<double>(n_kept);
    report.bias = report.mean_estimate - report.true_values;

    for (int r = 0; r < options.n_replicates; ++r) {
        if (!kept[r]) continue;
        Eigen::VectorXd dev = estimates[r] - report.mean_estimate;
        report.sd_estimate += dev.cwiseProduct(dev);
    }
    report.sd_estimate =
        (report.sd_estimate / static_cast<double>(std::max(n_kept - 1, 1))).cwiseSqrt();
    return report;
}

std::string format_scenario_report(const ScenarioReport& report) {
    std::ostringstream os;
    os << "Parameter        True value  Mean of est  SD of est      Bias    "
          "sqrt(MSE)  Coverage "
       << std::fixed << std::setprecision(0) << report.ci_level * 100 << "% CI (%)\n";
    for (std::size_t j = 0; j < report.param_names.size(); ++j) {
        Eigen::Index i = static_cast<Eigen::Index>(j);
        os << std::left << std::setw(16) << report.param_names[j] << std::right
           << std::fixed << std::setprecision(4) << std::setw(11)
           << report.true_values(i) << std::setw(13) << report.mean_estimate(i)
           << std::setw(11) << report.sd_estimate(i) << std::setw(10)
           << report.bias(i) << std::setw(11) << report.rmse(i)
           << std::setprecision(1) << std::setw(13) << report.coverage_percent(i)
           << "\n";
    }
    os << "replicates kept: " << report.n_replicates
       << ", failed: " << report.n_failed << ", ci: "
       << (report.ci_method == CiMethod::Hessian ? "hessian" : "bootstrap") << "\n";
    return os.str();
}

} // namespace recount
