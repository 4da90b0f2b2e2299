#include "recount/model.hpp"

#include "recount/math.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace recount {

const char* heaping_class_name(HeapingClass g) {
    switch (g) {
        case HeapingClass::Exact: return "exact";
        case HeapingClass::Nearest5: return "nearest5";
        case HeapingClass::Nearest10: return "nearest10";
        case HeapingClass::Nearest20: return "nearest20";
    }
    return "?";
}

void SubjectRecord::validate() const {
    if (subject_id.empty())
        throw validation_error("subject record without id");
    if (days.empty())
        throw validation_error("subject " + subject_id + " has no observed days");
    int prev = 0;
    for (const auto& d : days) {
        std::ostringstream where;
        where << "subject " << subject_id << ", day " << d.day_index << ": ";
        if (d.day_index <= prev)
            throw validation_error(where.str() + "day_index not strictly increasing");
        if (d.ema_count < 1)
            throw validation_error(where.str() +
                                   "ema_count must be >= 1 (zero instantaneous counts "
                                   "are not supported by the log-link recall model)");
        if (d.tlfb_count < 0)
            throw validation_error(where.str() + "tlfb_count must be >= 0");
        prev = d.day_index;
    }
}

std::size_t Dataset::n_days() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.days.size();
    return n;
}

void Dataset::validate() const {
    if (subjects.empty())
        throw validation_error("dataset has no subjects");
    std::set<std::string> seen;
    for (const auto& s : subjects) {
        s.validate();
        if (!seen.insert(s.subject_id).second)
            throw validation_error("duplicate subject_id " + s.subject_id);
    }
}

void PriorConfig::validate() const {
    if (!(beta1_prior_sd > 0.0) || !(coef_prior_sd > 0.0))
        throw validation_error("prior SDs must be positive");
    if (!(variance_ig_shape > 0.0) || !(variance_ig_scale > 0.0))
        throw validation_error("inverse-gamma prior parameters must be positive");
}

void Theta::validate() const {
    if (!ordering_ok())
        throw validation_error("theta: heaping intercepts must satisfy "
                               "gamma1 > gamma2 > gamma3");
    if (!(sigma_b > 0.0) || !std::isfinite(sigma_b) || !(sigma_u > 0.0) ||
        !std::isfinite(sigma_u))
        throw validation_error("theta: random-effect SDs must be positive and finite");
}

void ModelSpec::validate() const {
    auto check_unique = [](const std::vector<std::string>& names, const char* side) {
        std::set<std::string> s(names.begin(), names.end());
        if (s.size() != names.size())
            throw validation_error(std::string("duplicate covariate name in ") + side +
                                   " list");
    };
    check_unique(recall_covariate_names, "recall");
    check_unique(heaping_covariate_names, "heaping");
    if (quadrature_nodes_per_dim < 5)
        throw validation_error("quadrature_nodes_per_dim must be >= 5");
    prior_config.validate();
}

double ModelSpec::recall_design_value(const SubjectRecord& s, const ObservationDay& d,
                                      std::size_t j) const {
    if (recall_covariate_names.at(j) == visit_day_covariate)
        return d.is_visit_day ? 1.0 : 0.0;
    return s.z_recall.at(j);
}

double ModelSpec::heaping_design_value(const SubjectRecord& s, const ObservationDay& d,
                                       std::size_t j) const {
    if (heaping_covariate_names.at(j) == visit_day_covariate)
        return d.is_visit_day ? 1.0 : 0.0;
    return s.z_heaping.at(j);
}

void ModelSpec::check_theta_shape(const Theta& theta) const {
    if (theta.beta2.size() != recall_covariate_names.size())
        throw validation_error("theta.beta2 length does not match the recall "
                               "covariate list");
    if (theta.beta3.size() != heaping_covariate_names.size())
        throw validation_error("theta.beta3 length does not match the heaping "
                               "covariate list");
}

void bind_model(Dataset& dataset, const ModelSpec& spec) {
    spec.validate();
    dataset.validate();
    auto fill = [&](SubjectRecord& s, const std::vector<std::string>& names,
                    std::vector<double>& z) {
        z.assign(names.size(), 0.0);
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (names[j] == visit_day_covariate)
                continue;  // day-level; resolved per observation
            auto it = s.covariates.find(names[j]);
            if (it == s.covariates.end())
                throw validation_error("covariate '" + names[j] +
                                       "' not present for subject " + s.subject_id);
            z[j] = it->second;
        }
    };
    for (auto& s : dataset.subjects) {
        fill(s, spec.recall_covariate_names, s.z_recall);
        fill(s, spec.heaping_covariate_names, s.z_heaping);
    }
}

namespace {

double dot_checked(std::span<const double> z, const std::vector<double>& beta,
                   const char* what) {
    if (z.size() != beta.size())
        throw validation_error(std::string(what) +
                               ": design vector length does not match coefficients");
    double acc = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) acc += z[j] * beta[j];
    return acc;
}

} // namespace

double recall_log_mean(const Theta& theta, int x, std::span<const double> z_recall,
                       double b) {
    if (x < 1)
        throw validation_error("recall_log_mean: instantaneous count must be >= 1");
    return theta.beta0 + theta.beta1 * std::log(static_cast<double>(x)) +
           dot_checked(z_recall, theta.beta2, "recall_log_mean") + b;
}

std::array<double, 4> heaping_pmf(const Theta& theta, int w,
                                  std::span<const double> z_heaping, double u) {
    double eta = static_cast<double>(w) * theta.gamma0 +
                 dot_checked(z_heaping, theta.beta3, "heaping_pmf") + u;
    double q1 = inverse_logit(theta.gamma1 + eta);
    double q2 = inverse_logit(theta.gamma2 + eta);
    double q3 = inverse_logit(theta.gamma3 + eta);
    // The ordering constraint makes each difference nonnegative up to
    // rounding; clamp so downstream log() never sees a negative zero-area.
    return {std::max(1.0 - q1, 0.0), std::max(q1 - q2, 0.0),
            std::max(q2 - q3, 0.0), std::max(q3, 0.0)};
}

std::array<double, 4> log_heaping_pmf(const Theta& theta, int w,
                                      std::span<const double> z_heaping, double u) {
    double eta = static_cast<double>(w) * theta.gamma0 +
                 dot_checked(z_heaping, theta.beta3, "log_heaping_pmf") + u;
    double a1 = theta.gamma1 + eta;
    double a2 = theta.gamma2 + eta;
    double a3 = theta.gamma3 + eta;
    // log(q(a) - q(b)) = log q(a) + log q(-b) + log(1 - exp(-(a-b)))
    // for a > b; avoids 1 - 1 cancellation in both tails.
    auto log_diff = [](double a, double b) {
        double d = a - b;
        double log_one_minus_exp =
            d > 36.0 ? 0.0 : std::log(-std::expm1(-d));
        return log_inverse_logit(a) + log_inverse_logit(-b) + log_one_minus_exp;
    };
    return {log_inverse_logit(-a1), log_diff(a1, a2), log_diff(a2, a3),
            log_inverse_logit(a3)};
}

double log_obs_prob_given_effects(const Theta& theta, const ObservationDay& day,
                                  std::span<const double> z_recall,
                                  std::span<const double> z_heaping, double b,
                                  double u) {
    double log_mean = recall_log_mean(theta, day.ema_count, z_recall, b);
    auto pairs = inverse_coarsen(day.tlfb_count);
    double acc = -std::numeric_limits<double>::infinity();
    for (const auto& [w, g] : pairs) {
        auto log_pg = log_heaping_pmf(theta, w, z_heaping, u);
        double term = poisson_log_pmf_logmean(w, log_mean) + log_pg[class_index(g)];
        acc = log_sum_exp(acc, term);
    }
    return acc;
}

double obs_prob_given_effects(const Theta& theta, const ObservationDay& day,
                              std::span<const double> z_recall,
                              std::span<const double> z_heaping, double b, double u) {
    return std::exp(log_obs_prob_given_effects(theta, day, z_recall, z_heaping, b, u));
}

} // namespace recount
