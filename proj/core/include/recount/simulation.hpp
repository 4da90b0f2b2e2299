#pragma once

#include "recount/estimation.hpp"
#include "recount/rng.hpp"
#include "recount/types.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace recount {

/// How the instantaneous daily counts are generated in simulations.
/// Every generator yields integers >= 1.
struct EmaGenerator {
    enum class Kind { NegativeBinomial, FixedVector, Empirical };
    Kind kind = Kind::NegativeBinomial;

    /// Negative binomial (gamma-Poisson) with var = mean + mean^2/dispersion,
    /// resampled until >= 1. Defaults keep counts mostly within [5, 60].
    double mean = 22.0;
    double dispersion = 6.0;

    /// FixedVector: values cycled by day index, identical across subjects.
    /// Empirical: values resampled uniformly (e.g. an observed count column).
    std::vector<int> values;

    void validate() const;
    int sample(Rng& rng, int day_number) const;
};

struct SimulationDesign {
    int n_subjects = 100;
    int days_per_subject = 12;
    EmaGenerator ema;
    std::vector<std::string> covariate_names;  ///< iid N(0,1) baseline draws
    std::vector<int> visit_days;               ///< day indices flagged as visits

    void validate() const;
};

/// Latent state retained beside a simulated dataset so tests can check the
/// generator against what it produced, without re-simulation.
struct LatentTruth {
    struct Subject {
        double b = 0.0;
        double u = 0.0;
        std::vector<int> w;
        std::vector<HeapingClass> g;
    };
    std::vector<Subject> subjects;
};

struct SimulatedData {
    Dataset dataset;
    LatentTruth truth;
};

struct Scenario {
    std::string name;
    Theta theta;
    SimulationDesign design;
    ModelSpec spec;
};

/// "Estimated mis-remembering": recall slope 0.2628 with intercept 2.358,
/// recall variance 0.09, heaping intercepts (-1.485, -5.280, -10.141),
/// slope 0.1098, heaping variance 7.1.
Scenario scenario_case1();

/// "Minimal mis-remembering": identity-link recall (intercept 0, slope 1)
/// with variance 0.05, heaping intercepts (-1.07, -4.37, -6.52), slope
/// 0.088, heaping variance 5.9.
Scenario scenario_case2();

Scenario scenario_by_name(const std::string& name);

/// Draws subject effects, instantaneous counts, latent remembered counts and
/// rounding classes, and sets each report to coarsen(w, g).
SimulatedData generate_dataset(const Theta& theta, const SimulationDesign& design,
                               const ModelSpec& spec, const SeedSequencer& seed);

enum class CiMethod { Hessian, Bootstrap };

struct ScenarioReport {
    std::vector<std::string> param_names;
    Eigen::VectorXd true_values;
    Eigen::VectorXd mean_estimate;
    Eigen::VectorXd sd_estimate;
    Eigen::VectorXd bias;
    Eigen::VectorXd rmse;
    Eigen::VectorXd coverage_percent;
    int n_replicates = 0;
    int n_failed = 0;
    CiMethod ci_method = CiMethod::Hessian;
    double ci_level = 0.95;
};

struct StudyOptions {
    int n_replicates = 100;
    CiMethod ci_method = CiMethod::Hessian;
    int bootstrap_replicates = 100;
    double ci_level = 0.95;
    /// Replicate fits are maximum likelihood by default, which is what the
    /// recovery and coverage targets assume.
    FitOptions fit = maximum_likelihood_options();
    int n_threads = 1;  ///< across replicates; fits run single-threaded
};

/// Simulate-fit-summarize loop: per replicate, generates a dataset at the
/// true parameters, fits it, forms confidence intervals, and aggregates
/// bias, spread, RMSE and coverage. Replicates that fail to converge are
/// dropped and counted; more than 20% failing is an error.
ScenarioReport run_simulation_study(const Theta& truth,
                                    const SimulationDesign& design,
                                    const ModelSpec& spec,
                                    const StudyOptions& options,
                                    const SeedSequencer& seed);

/// Text rendering of a ScenarioReport with the usual simulation-table
/// columns (true value, mean and SD of estimates, bias, root-MSE, coverage).
std::string format_scenario_report(const ScenarioReport& report);

} // namespace recount
