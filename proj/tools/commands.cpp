#include "commands.hpp"

#include "recount/diagnostics.hpp"
#include "recount/estimation.hpp"
#include "recount/imputation.hpp"
#include "recount/io.hpp"
#include "recount/likelihood.hpp"
#include "recount/posterior.hpp"
#include "recount/simulation.hpp"
#include "recount/version.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace recount::cli {

namespace {

using nlohmann::json;

int effective_threads(const RunConfig& config) {
    if (config.threads > 0) return config.threads;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<std::string> provenance_comments(const RunConfig& config) {
    return {"config=" + run_config_to_json(config),
            "config_hash=" + config_hash(config),
            "seed=" + std::to_string(config.seed),
            "version=" + std::string(version_string)};
}

ModelSpec spec_from_config(const RunConfig& config) {
    ModelSpec spec;
    spec.recall_covariate_names = config.recall_covariates;
    spec.heaping_covariate_names = config.heaping_covariates;
    spec.quadrature_nodes_per_dim = config.quadrature_nodes;
    spec.prior_config = config.prior;
    spec.validate();
    return spec;
}

std::string out_path(const RunConfig& config, const std::string& fallback) {
    return config.out.empty() ? fallback : config.out;
}

Dataset load_bound_dataset(const RunConfig& config, const ModelSpec& spec) {
    if (config.dataset.empty())
        throw validation_error("config: 'dataset' is required for this command");
    Dataset data = load_dataset(config.dataset);
    bind_model(data, spec);
    return data;
}

json run_config_json(const RunConfig& config) {
    return json::parse(run_config_to_json(config));
}

json theta_json(const Theta& theta) {
    return json::parse(theta_to_json_string(theta));
}

Theta theta_from_values(const Eigen::VectorXd& values, std::size_t n_recall,
                        std::size_t n_heaping) {
    if (static_cast<std::size_t>(values.size()) != 8 + n_recall + n_heaping)
        throw validation_error("fit artifact: parameter row has the wrong length");
    Theta theta;
    std::size_t p = 0;
    theta.beta0 = values(static_cast<Eigen::Index>(p++));
    theta.beta1 = values(static_cast<Eigen::Index>(p++));
    theta.beta2.resize(n_recall);
    for (std::size_t j = 0; j < n_recall; ++j)
        theta.beta2[j] = values(static_cast<Eigen::Index>(p++));
    theta.gamma1 = values(static_cast<Eigen::Index>(p++));
    theta.gamma2 = values(static_cast<Eigen::Index>(p++));
    theta.gamma3 = values(static_cast<Eigen::Index>(p++));
    theta.gamma0 = values(static_cast<Eigen::Index>(p++));
    theta.beta3.resize(n_heaping);
    for (std::size_t j = 0; j < n_heaping; ++j)
        theta.beta3[j] = values(static_cast<Eigen::Index>(p++));
    theta.sigma_b = values(static_cast<Eigen::Index>(p++));
    theta.sigma_u = values(static_cast<Eigen::Index>(p++));
    theta.validate();
    return theta;
}

struct FitArtifact {
    Theta theta_hat;
    std::vector<Theta> sir_draws;
    std::vector<std::string> recall_covariates;
    std::vector<std::string> heaping_covariates;
};

FitArtifact load_fit_artifact(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw validation_error("cannot open fit artifact '" + path + "'");
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw validation_error("fit artifact '" + path + "' is not valid JSON: " +
                               e.what());
    }
    if (j.value("artifact", "") != "fit")
        throw validation_error("'" + path + "' is not a fit artifact");

    FitArtifact out;
    out.recall_covariates =
        j.at("config").value("recall_covariates", std::vector<std::string>{});
    out.heaping_covariates =
        j.at("config").value("heaping_covariates", std::vector<std::string>{});
    out.theta_hat = theta_from_json_string(j.at("theta_hat").dump());
    for (const auto& row : j.value("sir_draws", json::array())) {
        Eigen::VectorXd values(row.size());
        for (std::size_t c = 0; c < row.size(); ++c)
            values(static_cast<Eigen::Index>(c)) = row[c].get<double>();
        out.sir_draws.push_back(theta_from_values(values,
                                                  out.recall_covariates.size(),
                                                  out.heaping_covariates.size()));
    }
    return out;
}

void write_json_artifact(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os)
        throw validation_error("cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

/// Parameters for curves/predict: either a fit artifact or a plain JSON
/// parameter file ({"theta": {...}}).
Theta load_parameters(const RunConfig& config) {
    if (!config.fit_artifact.empty())
        return load_fit_artifact(config.fit_artifact).theta_hat;
    if (!config.params_file.empty()) {
        std::ifstream is(config.params_file);
        if (!is)
            throw validation_error("cannot open params file '" + config.params_file +
                                   "'");
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw validation_error(std::string("params file parse error: ") +
                                   e.what());
        }
        if (j.contains("theta")) return theta_from_json_string(j["theta"].dump());
        return theta_from_json_string(j.dump());
    }
    throw validation_error("config: provide 'fit_artifact' or 'params_file'");
}

ImputationOptions imputation_options(const RunConfig& config) {
    ImputationOptions options;
    options.max_rejects = config.max_rejects;
    options.mode = config.impute_mode == "redraw" ? ImputationMode::RedrawEffects
                                                  : ImputationMode::FixedEffects;
    options.n_threads = effective_threads(config);
    return options;
}

json failures_json(const std::vector<ImputationFailure>& failures) {
    json arr = json::array();
    for (const auto& f : failures)
        arr.push_back({{"theta_index", f.theta_index},
                       {"subject_id", f.subject_id},
                       {"day", f.day_index},
                       {"rejects", f.rejects}});
    return arr;
}

} // namespace

int cmd_simulate(const RunConfig& config) {
    Scenario scenario = scenario_by_name(config.scenario);
    scenario.design.n_subjects = config.n_subjects;
    scenario.design.days_per_subject = config.days_per_subject;
    scenario.spec.quadrature_nodes_per_dim = config.quadrature_nodes;

    Theta theta = scenario.theta;
    if (!config.params_file.empty()) theta = load_parameters(config);

    SeedSequencer seed(config.seed);
    SimulatedData sim =
        generate_dataset(theta, scenario.design, scenario.spec, seed.stream("sim"));

    auto comments = provenance_comments(config);
    std::string data_path = out_path(config, "dataset.csv");
    save_dataset_csv(data_path, sim.dataset, comments);
    std::string truth_path = data_path + ".truth.csv";
    save_latent_truth_csv(truth_path, sim, comments);
    std::cout << "wrote " << data_path << " (" << sim.dataset.n_subjects()
              << " subjects, " << sim.dataset.n_days() << " days) and "
              << truth_path << "\n";
    return exit_ok;
}

int cmd_fit(const RunConfig& config) {
    ModelSpec spec = spec_from_config(config);
    Dataset data = load_bound_dataset(config, spec);
    SeedSequencer seed(config.seed);

    FitOptions options;
    options.use_prior = config.use_prior;
    options.n_threads = effective_threads(config);
    options.bfgs.max_iterations = config.max_iterations;
    options.bfgs.gradient_tolerance = config.gradient_tolerance;
    options.bfgs.relative_objective_tolerance = config.objective_tolerance;

    ModeResult fit = find_posterior_mode(data, spec, options);
    ParamLayout layout = fit.layout;

    QuadratureRule rule = gauss_hermite_normal(spec.quadrature_nodes_per_dim);
    LikelihoodEvaluator evaluator(data, spec, rule, options.n_threads);
    auto target = make_posterior_log_target(evaluator, layout,
                                            spec.prior_config, config.use_prior);

    std::size_t dropped = 0;
    auto draws = draw_proposals(fit, target, config.proposals, config.t_dof,
                                seed.stream("fit"), options.n_threads, &dropped);
    PosteriorSummary posterior = posterior_moments(draws, fit, spec);
    posterior.n_dropped = dropped;
    auto resampled = sir_resample(draws, static_cast<std::size_t>(config.resample),
                                  seed.stream("sir"));
    posterior.n_resampled = resampled.size();

    json out;
    out["artifact"] = "fit";
    out["version"] = version_string;
    out["config"] = run_config_json(config);
    out["config_hash"] = config_hash(config);
    out["seed"] = config.seed;
    out["n_subjects"] = data.n_subjects();
    out["n_days"] = data.n_days();
    out["theta_hat"] = theta_json(fit.theta_hat);
    out["param_names"] = layout.param_names(spec);
    out["converged"] = fit.converged;
    out["n_iterations"] = fit.n_iterations;
    out["n_evals"] = fit.n_evals;
    out["final_gradient_norm"] = fit.final_gradient_norm;
    out["ridge"] = fit.ridge;
    out["loglik"] = fit.loglik;
    out["log_posterior"] = fit.objective;
    out["n_params"] = layout.dim();
    out["bic"] =
        bic(fit.loglik, static_cast<int>(layout.dim()),
            static_cast<int>(data.n_subjects()));

    json info = json::array();
    for (Eigen::Index r = 0; r < fit.information.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < fit.information.cols(); ++c)
            row.push_back(fit.information(r, c));
        info.push_back(row);
    }
    out["information"] = info;
    out["free_indices"] = fit.free_indices;
    json phi = json::array();
    for (Eigen::Index i = 0; i < fit.phi_hat.size(); ++i)
        phi.push_back(fit.phi_hat(i));
    out["phi_hat"] = phi;

    json post;
    post["ess"] = posterior.ess;
    post["n_proposals"] = config.proposals;
    post["n_dropped"] = posterior.n_dropped;
    post["n_resampled"] = posterior.n_resampled;
    json params = json::array();
    for (const auto& p : posterior.params)
        params.push_back({{"name", p.name},
                          {"mode", p.mode},
                          {"mean", p.mean},
                          {"sd", p.sd},
                          {"ci_lower", p.ci_lower},
                          {"ci_upper", p.ci_upper}});
    post["params"] = params;
    out["posterior"] = post;

    json sir = json::array();
    for (const auto& theta : resampled) {
        Eigen::VectorXd values = layout.theta_values(theta);
        json row = json::array();
        for (Eigen::Index i = 0; i < values.size(); ++i) row.push_back(values(i));
        sir.push_back(row);
    }
    out["sir_draws"] = sir;

    std::string path = out_path(config, "fit.json");
    write_json_artifact(path, out);
    std::cout << "wrote " << path << " (converged=" << (fit.converged ? "yes" : "no")
              << ", loglik=" << fit.loglik << ", ess=" << posterior.ess << ")\n";
    return fit.converged ? exit_ok : exit_flagged;
}

int cmd_simstudy(const RunConfig& config) {
    Scenario scenario = scenario_by_name(config.scenario);
    scenario.design.n_subjects = config.n_subjects;
    scenario.design.days_per_subject = config.days_per_subject;
    scenario.spec.quadrature_nodes_per_dim = config.quadrature_nodes;

    StudyOptions options;
    options.n_replicates = config.replicates;
    options.ci_method =
        config.ci_method == "bootstrap" ? CiMethod::Bootstrap : CiMethod::Hessian;
    options.bootstrap_replicates = config.bootstrap_replicates;
    options.n_threads = effective_threads(config);

    SeedSequencer seed(config.seed);
    ScenarioReport report = run_simulation_study(
        scenario.theta, scenario.design, scenario.spec, options, seed.stream("study"));

    json out;
    out["artifact"] = "simstudy";
    out["version"] = version_string;
    out["config"] = run_config_json(config);
    out["config_hash"] = config_hash(config);
    out["seed"] = config.seed;
    out["scenario"] = config.scenario;
    out["n_replicates"] = report.n_replicates;
    out["n_failed"] = report.n_failed;
    out["ci_method"] = config.ci_method;
    json rows = json::array();
    for (std::size_t j = 0; j < report.param_names.size(); ++j) {
        Eigen::Index i = static_cast<Eigen::Index>(j);
        rows.push_back({{"parameter", report.param_names[j]},
                        {"true_value", report.true_values(i)},
                        {"mean_estimate", report.mean_estimate(i)},
                        {"sd_estimate", report.sd_estimate(i)},
                        {"bias", report.bias(i)},
                        {"rmse", report.rmse(i)},
                        {"coverage_percent", report.coverage_percent(i)}});
    }
    out["parameters"] = rows;

    std::string path = out_path(config, "simstudy.json");
    write_json_artifact(path, out);
    std::string table = format_scenario_report(report);
    std::string text_path = path + ".txt";
    std::ofstream ts(text_path);
    for (const auto& c : provenance_comments(config)) ts << "# " << c << "\n";
    ts << table;
    std::cout << table;
    std::cout << "wrote " << path << " and " << text_path << "\n";
    return exit_ok;
}

int cmd_impute(const RunConfig& config) {
    if (config.fit_artifact.empty())
        throw validation_error("config: 'fit_artifact' is required for impute");
    FitArtifact fit = load_fit_artifact(config.fit_artifact);

    RunConfig effective = config;
    effective.recall_covariates = fit.recall_covariates;
    effective.heaping_covariates = fit.heaping_covariates;
    ModelSpec spec = spec_from_config(effective);
    Dataset data = load_bound_dataset(config, spec);

    if (fit.sir_draws.empty())
        throw validation_error("fit artifact has no resampled parameter draws");
    std::size_t n_draws = std::min(static_cast<std::size_t>(config.theta_draws),
                                   fit.sir_draws.size());
    std::vector<Theta> draws(fit.sir_draws.begin(),
                             fit.sir_draws.begin() + static_cast<long>(n_draws));

    SeedSequencer seed(config.seed);
    ImputationResult result = impute_latents(draws, data, spec,
                                             imputation_options(config),
                                             seed.stream("impute"));

    auto comments = provenance_comments(config);
    comments.push_back("theta_draws=" + std::to_string(n_draws));
    comments.push_back("failures=" + std::to_string(result.failures.size()));
    std::string path = out_path(config, "imputations.csv");
    write_imputations_csv(path, data, result.imputations, comments);
    std::cout << "wrote " << path << " (" << result.imputations.size()
              << " imputations, " << result.failures.size() << " failures)\n";
    return exit_ok;
}

int cmd_check(const RunConfig& config) {
    if (config.fit_artifact.empty())
        throw validation_error("config: 'fit_artifact' is required for check");
    FitArtifact fit = load_fit_artifact(config.fit_artifact);

    RunConfig effective = config;
    effective.recall_covariates = fit.recall_covariates;
    effective.heaping_covariates = fit.heaping_covariates;
    ModelSpec spec = spec_from_config(effective);
    Dataset data = load_bound_dataset(config, spec);

    if (fit.sir_draws.empty())
        throw validation_error("fit artifact has no resampled parameter draws");
    std::size_t n_draws = std::min(static_cast<std::size_t>(config.theta_draws),
                                   fit.sir_draws.size());
    std::vector<Theta> draws(fit.sir_draws.begin(),
                             fit.sir_draws.begin() + static_cast<long>(n_draws));

    SeedSequencer seed(config.seed);
    ImputationResult result = impute_latents(draws, data, spec,
                                             imputation_options(config),
                                             seed.stream("impute"));
    HeapFractionTable table = heap_fraction_table(data, &result.imputations);

    auto comments = provenance_comments(config);
    comments.push_back("failures=" + std::to_string(result.failures.size()));
    std::string path = out_path(config, "check.csv");
    write_heap_table_csv(path, table, comments);

    std::printf("overall divisibility: observed 5/10/20 = %.3f/%.3f/%.3f, "
                "imputed = %.3f/%.3f/%.3f\n",
                table.overall.observed[0], table.overall.observed[1],
                table.overall.observed[2], table.overall.imputed[0],
                table.overall.imputed[1], table.overall.imputed[2]);
    std::cout << "wrote " << path << "\n";
    return exit_ok;
}

int cmd_predict(const RunConfig& config) {
    Theta theta = load_parameters(config);
    RunConfig effective = config;
    if (!config.fit_artifact.empty()) {
        FitArtifact fit = load_fit_artifact(config.fit_artifact);
        effective.recall_covariates = fit.recall_covariates;
        effective.heaping_covariates = fit.heaping_covariates;
    }
    ModelSpec spec = spec_from_config(effective);
    Dataset data = load_bound_dataset(config, spec);
    TrueCountModel x_model = parse_true_count_model(config.x_model);

    SeedSequencer seed(config.seed);
    PredictionResult result =
        predict_true_counts(theta, data, spec, x_model, config.n_imputations,
                            imputation_options(config), seed.stream("predict"));

    auto comments = provenance_comments(config);
    comments.push_back("x_model=" + config.x_model);
    comments.push_back("failures=" + std::to_string(result.failures.size()));
    std::string path = out_path(config, "predictions.csv");
    write_predictions_csv(path, data, result.imputations, comments);

    json summary;
    summary["artifact"] = "predict";
    summary["config"] = run_config_json(config);
    summary["failures"] = failures_json(result.failures);
    write_json_artifact(path + ".meta.json", summary);
    std::cout << "wrote " << path << " (" << result.imputations.size()
              << " imputations, " << result.failures.size() << " failures)\n";
    return exit_ok;
}

int cmd_curves(const RunConfig& config) {
    Theta theta = load_parameters(config);
    RunConfig effective = config;
    if (!config.fit_artifact.empty()) {
        FitArtifact fit = load_fit_artifact(config.fit_artifact);
        effective.recall_covariates = fit.recall_covariates;
        effective.heaping_covariates = fit.heaping_covariates;
    }
    ModelSpec spec = spec_from_config(effective);
    spec.check_theta_shape(theta);

    CurvePoints curve;
    if (config.curve == "recall") {
        int lo = config.range_min >= 1 ? config.range_min : 1;
        int hi = config.range_max >= lo ? config.range_max : 60;
        std::vector<int> xs;
        for (int x = lo; x <= hi; ++x) xs.push_back(x);
        std::vector<double> z(spec.recall_covariate_names.size(), 0.0);
        curve = mean_recall_curve(theta, xs, z,
                                  config.marginal ? MeanCurveMode::Marginal
                                                  : MeanCurveMode::ConditionalB0);
    } else {
        int lo = config.range_min >= 0 ? config.range_min : 0;
        int hi = config.range_max >= lo ? config.range_max : 60;
        std::vector<int> ws;
        for (int w = lo; w <= hi; ++w) ws.push_back(w);
        std::vector<double> z(spec.heaping_covariate_names.size(), 0.0);
        QuadratureRule rule = gauss_hermite_normal(spec.quadrature_nodes_per_dim);
        curve = marginal_heaping_curve(theta, spec, ws, z, config.visit, rule,
                                       config.marginal);
    }

    std::string path = out_path(config, "curves.csv");
    write_curve_csv(path, curve, provenance_comments(config));
    std::cout << "wrote " << path;
    if (config.svg) {
        write_curve_svg(path + ".svg", curve);
        std::cout << " and " << path << ".svg";
    }
    std::cout << "\n";
    return exit_ok;
}

} // namespace recount::cli
