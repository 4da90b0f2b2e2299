#include "commands.hpp"

#include "recount/types.hpp"
#include "recount/version.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <string>

using namespace recount;
using namespace recount::cli;

namespace {

/// Shared flags; any explicitly given flag overrides the config file.
void add_common_options(CLI::App* cmd, std::string& config_path, RunConfig& config) {
    cmd->add_option("--config", config_path,
                    "JSON config file (a fit/report artifact with an embedded "
                    "config works too)");
    cmd->add_option("--seed", config.seed, "root seed; named substreams derive "
                                           "from it");
    cmd->add_option("--threads", config.threads, "worker threads (0 = all cores)");
    cmd->add_option("--out", config.out, "output path");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage latent model for heaped, mis-remembered count "
                 "reports"};
    app.set_version_flag("--version", version_string);
    app.require_subcommand(1);

    struct Pending {
        RunConfig flags;          // values set on the command line
        std::string config_path;  // optional config file
        CLI::App* cmd = nullptr;
        std::function<int(const RunConfig&)> run;
    };
    std::vector<Pending> pending(7);

    auto wire = [&](std::size_t i, const char* name, const char* help,
                    std::function<int(const RunConfig&)> fn) {
        pending[i].cmd = app.add_subcommand(name, help);
        pending[i].run = std::move(fn);
        add_common_options(pending[i].cmd, pending[i].config_path, pending[i].flags);
        return pending[i].cmd;
    };

    CLI::App* simulate =
        wire(0, "simulate", "generate a synthetic dataset from a scenario",
             cmd_simulate);
    simulate->add_option("--scenario", pending[0].flags.scenario, "case1 or case2");
    simulate->add_option("--n", pending[0].flags.n_subjects, "subjects");
    simulate->add_option("--days", pending[0].flags.days_per_subject,
                         "days per subject");
    simulate->add_option("--params", pending[0].flags.params_file,
                         "JSON file with explicit parameters");

    CLI::App* fit = wire(1, "fit", "posterior mode, information, importance "
                                   "sampling and SIR summaries",
                         cmd_fit);
    fit->add_option("--dataset", pending[1].flags.dataset, "input CSV");
    fit->add_option("--recall-covariates", pending[1].flags.recall_covariates,
                    "baseline covariate columns for the recall model");
    fit->add_option("--heaping-covariates", pending[1].flags.heaping_covariates,
                    "covariates for the heaping model (visit_day allowed)");
    fit->add_option("--nodes", pending[1].flags.quadrature_nodes,
                    "quadrature nodes per dimension");
    fit->add_option("--proposals", pending[1].flags.proposals, "importance draws");
    fit->add_option("--resample", pending[1].flags.resample, "SIR resample size");
    fit->add_flag("--no-prior,!--prior",
                  [&flags = pending[1].flags](std::int64_t count) {
                      flags.use_prior = count <= 0;
                  },
                  "maximum-likelihood fit instead of the posterior mode")
        ->take_last();

    CLI::App* simstudy =
        wire(2, "simstudy", "replicate simulate-fit-summarize study", cmd_simstudy);
    simstudy->add_option("--scenario", pending[2].flags.scenario, "case1 or case2");
    simstudy->add_option("--replicates", pending[2].flags.replicates, "replicates");
    simstudy->add_option("--n", pending[2].flags.n_subjects, "subjects");
    simstudy->add_option("--days", pending[2].flags.days_per_subject,
                         "days per subject");
    simstudy->add_option("--ci", pending[2].flags.ci_method,
                         "hessian or bootstrap confidence intervals");
    simstudy->add_option("--bootstrap-replicates",
                         pending[2].flags.bootstrap_replicates,
                         "refits per bootstrap interval");

    CLI::App* impute = wire(3, "impute", "draw latent counts and rounding classes "
                                         "consistent with the reports",
                            cmd_impute);
    impute->add_option("--dataset", pending[3].flags.dataset, "input CSV");
    impute->add_option("--fit", pending[3].flags.fit_artifact, "fit.json artifact");
    impute->add_option("--draws", pending[3].flags.theta_draws,
                       "parameter draws to impute under");
    impute->add_option("--max-rejects", pending[3].flags.max_rejects,
                       "per-day rejection cap");
    impute->add_option("--mode", pending[3].flags.impute_mode,
                       "fixed (stated procedure) or redraw (sensitivity)");

    CLI::App* check = wire(4, "check", "posterior-predictive heap-fraction table",
                           cmd_check);
    check->add_option("--dataset", pending[4].flags.dataset, "input CSV");
    check->add_option("--fit", pending[4].flags.fit_artifact, "fit.json artifact");
    check->add_option("--draws", pending[4].flags.theta_draws,
                      "parameter draws to impute under");

    CLI::App* predict = wire(5, "predict", "impute true counts when the "
                                           "instantaneous record is missing",
                             cmd_predict);
    predict->add_option("--dataset", pending[5].flags.dataset, "input CSV");
    predict->add_option("--fit", pending[5].flags.fit_artifact, "fit.json artifact");
    predict->add_option("--params", pending[5].flags.params_file,
                        "JSON parameters instead of a fit artifact");
    predict->add_option("--x-model", pending[5].flags.x_model,
                        "point:K | poisson:MEAN | negbin:MEAN,DISP | "
                        "empirical:FILE");
    predict->add_option("--imputations", pending[5].flags.n_imputations,
                        "imputations per subject");

    CLI::App* curves = wire(6, "curves", "mean-recall and rounding-probability "
                                         "plot data",
                            cmd_curves);
    curves->add_option("--fit", pending[6].flags.fit_artifact, "fit.json artifact");
    curves->add_option("--params", pending[6].flags.params_file,
                       "JSON parameters instead of a fit artifact");
    curves->add_option("--curve", pending[6].flags.curve, "recall or heaping");
    curves->add_option("--min", pending[6].flags.range_min, "grid start");
    curves->add_option("--max", pending[6].flags.range_max, "grid end");
    curves->add_flag("--visit", pending[6].flags.visit, "visit-day curve");
    curves->add_flag("--conditional",
                     [&flags = pending[6].flags](std::int64_t) {
                         flags.marginal = false;
                     },
                     "condition on a zero random effect instead of averaging");
    curves->add_flag("--svg", pending[6].flags.svg, "also render an SVG plot");

    CLI11_PARSE(app, argc, argv);

    try {
        for (auto& p : pending) {
            if (!p.cmd->parsed()) continue;
            RunConfig config;
            if (!p.config_path.empty()) config = load_run_config(p.config_path);
            // Command-line values override the file.
            RunConfig defaults;
            const RunConfig& f = p.flags;
            auto taken = [&](const CLI::App* cmd, const std::string& name) {
                const CLI::Option* option = cmd->get_option_no_throw(name);
                return option != nullptr && option->count() > 0;
            };
            if (taken(p.cmd, "--seed")) config.seed = f.seed;
            if (taken(p.cmd, "--threads")) config.threads = f.threads;
            if (taken(p.cmd, "--out")) config.out = f.out;
            if (taken(p.cmd, "--scenario")) config.scenario = f.scenario;
            if (taken(p.cmd, "--n")) config.n_subjects = f.n_subjects;
            if (taken(p.cmd, "--days")) config.days_per_subject = f.days_per_subject;
            if (taken(p.cmd, "--params")) config.params_file = f.params_file;
            if (taken(p.cmd, "--dataset")) config.dataset = f.dataset;
            if (taken(p.cmd, "--recall-covariates"))
                config.recall_covariates = f.recall_covariates;
            if (taken(p.cmd, "--heaping-covariates"))
                config.heaping_covariates = f.heaping_covariates;
            if (taken(p.cmd, "--nodes")) config.quadrature_nodes = f.quadrature_nodes;
            if (taken(p.cmd, "--proposals")) config.proposals = f.proposals;
            if (taken(p.cmd, "--resample")) config.resample = f.resample;
            if (taken(p.cmd, "--no-prior") || taken(p.cmd, "--prior"))
                config.use_prior = f.use_prior;
            if (taken(p.cmd, "--replicates")) config.replicates = f.replicates;
            if (taken(p.cmd, "--ci")) config.ci_method = f.ci_method;
            if (taken(p.cmd, "--bootstrap-replicates"))
                config.bootstrap_replicates = f.bootstrap_replicates;
            if (taken(p.cmd, "--fit")) config.fit_artifact = f.fit_artifact;
            if (taken(p.cmd, "--draws")) config.theta_draws = f.theta_draws;
            if (taken(p.cmd, "--max-rejects")) config.max_rejects = f.max_rejects;
            if (taken(p.cmd, "--mode")) config.impute_mode = f.impute_mode;
            if (taken(p.cmd, "--x-model")) config.x_model = f.x_model;
            if (taken(p.cmd, "--imputations"))
                config.n_imputations = f.n_imputations;
            if (taken(p.cmd, "--curve")) config.curve = f.curve;
            if (taken(p.cmd, "--min")) config.range_min = f.range_min;
            if (taken(p.cmd, "--max")) config.range_max = f.range_max;
            if (taken(p.cmd, "--visit")) config.visit = f.visit;
            if (taken(p.cmd, "--conditional")) config.marginal = f.marginal;
            if (taken(p.cmd, "--svg")) config.svg = f.svg;
            config.validate();
            return p.run(config);
        }
        return exit_validation;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numerical;
    }
}
