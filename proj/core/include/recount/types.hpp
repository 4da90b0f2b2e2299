#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace recount {

/// Raised when inputs violate a documented precondition (bad data file,
/// inconsistent dimensions, invalid configuration).
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a computation produces non-finite intermediates that cannot
/// be recovered (failed Cholesky, NaN objective, all-zero weights).
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Latent reporting granularity. Ordered: larger is coarser reporting.
enum class HeapingClass : int {
    Exact = 1,
    Nearest5 = 2,
    Nearest10 = 3,
    Nearest20 = 4,
};

inline constexpr HeapingClass all_heaping_classes[4] = {
    HeapingClass::Exact, HeapingClass::Nearest5,
    HeapingClass::Nearest10, HeapingClass::Nearest20};

/// Rounding base of a heaping class: 1, 5, 10 or 20.
constexpr int rounding_base(HeapingClass g) {
    switch (g) {
        case HeapingClass::Exact: return 1;
        case HeapingClass::Nearest5: return 5;
        case HeapingClass::Nearest10: return 10;
        case HeapingClass::Nearest20: return 20;
    }
    return 1;
}

constexpr int class_index(HeapingClass g) { return static_cast<int>(g) - 1; }

const char* heaping_class_name(HeapingClass g);

/// One observed day for one subject: the instantaneous count (ema_count),
/// the retrospectively reported count (tlfb_count), and whether the report
/// was collected on a clinic-visit day.
struct ObservationDay {
    int day_index = 1;     ///< 1-based day label, strictly increasing within a subject
    int ema_count = 1;     ///< instantaneous count, must be >= 1
    int tlfb_count = 0;    ///< reported (possibly rounded) count, >= 0
    bool is_visit_day = false;
};

/// All observed days and baseline covariates for one subject. The z vectors
/// are materialized from the covariate map when a ModelSpec is bound; entries
/// for the day-level "visit_day" covariate hold a placeholder that evaluation
/// replaces with the per-day flag.
struct SubjectRecord {
    std::string subject_id;
    std::vector<ObservationDay> days;
    std::map<std::string, double> covariates;  ///< baseline covariates by column name

    std::vector<double> z_recall;   ///< recall-model design, aligned with ModelSpec
    std::vector<double> z_heaping;  ///< heaping-model design, aligned with ModelSpec

    void validate() const;
};

struct ModelSpec;

struct Dataset {
    std::vector<SubjectRecord> subjects;
    std::vector<std::string> covariate_names;  ///< columns available for binding

    std::size_t n_subjects() const { return subjects.size(); }
    std::size_t n_days() const;
    void validate() const;
};

/// Inverse-gamma priors on the random-effect variances plus normal priors on
/// the regression coefficients. Defaults: slope on the log instantaneous
/// count is centered at 1 (unbiased-memory null), everything else at 0, all
/// with SD 10; IG(3, 2) gives the variance priors mean and SD both 1.
struct PriorConfig {
    double beta1_prior_mean = 1.0;
    double beta1_prior_sd = 10.0;
    double coef_prior_sd = 10.0;
    double variance_ig_shape = 3.0;
    double variance_ig_scale = 2.0;

    void validate() const;
};

/// Full parameter vector of the two-stage model.
///
/// Recall stage: log E[W] = beta0 + beta1*ln(x) + z_recall.beta2 + b,
/// b ~ N(0, sigma_b^2). Heaping stage: proportional-odds on four rounding
/// classes with intercepts gamma1 > gamma2 > gamma3, slope gamma0 on the
/// latent count, covariate slopes beta3, and u ~ N(0, sigma_u^2).
struct Theta {
    double beta0 = 0.0;
    double beta1 = 1.0;
    std::vector<double> beta2;
    double sigma_b = 0.3;

    double gamma1 = -1.0;
    double gamma2 = -4.0;
    double gamma3 = -7.0;
    double gamma0 = 0.1;
    std::vector<double> beta3;
    double sigma_u = 2.0;

    /// Throws validation_error unless gamma1 > gamma2 > gamma3 and both SDs
    /// are positive and finite.
    void validate() const;

    bool ordering_ok() const { return gamma1 > gamma2 && gamma2 > gamma3; }

    std::size_t n_params() const { return 8 + beta2.size() + beta3.size(); }
};

/// Reserved covariate name that binds to ObservationDay::is_visit_day
/// instead of a baseline column.
inline constexpr const char* visit_day_covariate = "visit_day";

/// Names the covariates entering each model stage and carries the numeric
/// settings shared by every fit: quadrature size and prior configuration.
struct ModelSpec {
    std::vector<std::string> recall_covariate_names;
    std::vector<std::string> heaping_covariate_names;
    int quadrature_nodes_per_dim = 20;
    PriorConfig prior_config;

    void validate() const;

    /// Day-effective design value for slot j of the recall design.
    double recall_design_value(const SubjectRecord& s, const ObservationDay& d,
                               std::size_t j) const;
    /// Day-effective design value for slot j of the heaping design.
    double heaping_design_value(const SubjectRecord& s, const ObservationDay& d,
                                std::size_t j) const;

    /// Checks that a Theta's coefficient vectors match this spec's shapes.
    void check_theta_shape(const Theta& theta) const;
};

/// Fills each subject's z vectors from its covariate map according to the
/// spec's covariate lists. Throws validation_error if a named covariate is
/// missing from the dataset.
void bind_model(Dataset& dataset, const ModelSpec& spec);

} // namespace recount
