#include "recount/imputation.hpp"

#include "recount/math.hpp"
#include "recount/model.hpp"
#include "recount/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace recount {

namespace {

int sample_class(Rng& rng, const std::array<double, 4>& pmf) {
    double v = rng.u01();
    double cum = 0.0;
    for (int c = 0; c < 4; ++c) {
        cum += pmf[static_cast<std::size_t>(c)];
        if (v <= cum) return c;
    }
    return 3;
}

struct DayDraw {
    int w = 0;
    HeapingClass g = HeapingClass::Exact;
    double b = 0.0;
    double u = 0.0;
    bool ok = false;
    long rejects = 0;
};

/// Rejection loop for one day: draw w from the recall Poisson and g from the
/// heaping model until coarsen(w, g) hits the observed report. In
/// RedrawEffects mode the effects are redrawn on every attempt.
DayDraw draw_day(Rng& rng, const Theta& theta, int ema_count, int report,
                 std::span<const double> zr, std::span<const double> zh, double b,
                 double u, ImputationMode mode, long max_rejects) {
    DayDraw out;
    out.b = b;
    out.u = u;
    for (long attempt = 0;; ++attempt) {
        if (attempt >= max_rejects) {
            out.rejects = attempt;
            return out;
        }
        if (mode == ImputationMode::RedrawEffects && attempt > 0) {
            out.b = rng.normal(0.0, theta.sigma_b);
            out.u = rng.normal(0.0, theta.sigma_u);
        }
        double mean = std::exp(recall_log_mean(theta, ema_count, zr, out.b));
        int w = rng.poisson(mean);
        int cls = sample_class(rng, heaping_pmf(theta, w, zh, out.u));
        HeapingClass g = static_cast<HeapingClass>(cls + 1);
        if (coarsen(w, g) == report) {
            out.w = w;
            out.g = g;
            out.ok = true;
            out.rejects = attempt;
            return out;
        }
    }
}

} // namespace

ImputationResult impute_latents(const std::vector<Theta>& theta_draws,
                                const Dataset& dataset, const ModelSpec& spec,
                                const ImputationOptions& options,
                                const SeedSequencer& seed) {
    if (theta_draws.empty())
        throw validation_error("impute_latents: no parameter draws");
    if (options.max_rejects < 1)
        throw validation_error("impute_latents: max_rejects must be >= 1");
    dataset.validate();
    spec.validate();
    for (const auto& theta : theta_draws) {
        theta.validate();
        spec.check_theta_shape(theta);
    }

    const std::size_t n_subjects = dataset.subjects.size();
    const std::size_t n_tasks = theta_draws.size() * n_subjects;
    std::vector<LatentImputation> slots(n_tasks);
    std::vector<char> ok(n_tasks, 0);
    std::vector<ImputationFailure> failures_by_task(n_tasks);

    parallel_for(n_tasks, options.n_threads, [&](std::size_t task) {
        const std::size_t k = task / n_subjects;
        const std::size_t i = task % n_subjects;
        const Theta& theta = theta_draws[k];
        const SubjectRecord& subj = dataset.subjects[i];
        Rng rng(seed.substream(task));

        LatentImputation imp;
        imp.subject_id = subj.subject_id;
        imp.theta_index = static_cast<int>(k);
        imp.b = rng.normal(0.0, theta.sigma_b);
        imp.u = rng.normal(0.0, theta.sigma_u);
        imp.w.resize(subj.days.size());
        imp.g.resize(subj.days.size());

        for (std::size_t t = 0; t < subj.days.size(); ++t) {
            const ObservationDay& day = subj.days[t];
            std::vector<double> zr(spec.recall_covariate_names.size());
            for (std::size_t j = 0; j < zr.size(); ++j)
                zr[j] = spec.recall_design_value(subj, day, j);
            std::vector<double> zh(spec.heaping_covariate_names.size());
            for (std::size_t j = 0; j < zh.size(); ++j)
                zh[j] = spec.heaping_design_value(subj, day, j);

            DayDraw draw =
                draw_day(rng, theta, day.ema_count, day.tlfb_count, zr, zh, imp.b,
                         imp.u, options.mode, options.max_rejects);
            if (!draw.ok) {
                failures_by_task[task] = {static_cast<int>(k), subj.subject_id,
                                          day.day_index, draw.rejects};
                return;
            }
            imp.w[t] = draw.w;
            imp.g[t] = draw.g;
            imp.b = draw.b;  // only differs in RedrawEffects mode
            imp.u = draw.u;
        }
        slots[task] = std::move(imp);
        ok[task] = 1;
    });

    ImputationResult result;
    result.imputations.reserve(n_tasks);
    for (std::size_t task = 0; task < n_tasks; ++task) {
        if (ok[task])
            result.imputations.push_back(std::move(slots[task]));
        else
            result.failures.push_back(failures_by_task[task]);
    }
    return result;
}

std::vector<std::pair<int, int>> observed_day_counts(const Dataset& dataset) {
    std::vector<std::pair<int, int>> out;
    for (const auto& s : dataset.subjects)
        for (const auto& d : s.days) out.emplace_back(d.day_index, d.tlfb_count);
    return out;
}

std::vector<std::pair<int, int>> imputed_day_counts(
    const Dataset& dataset, const std::vector<LatentImputation>& imputations) {
    std::map<std::string, const SubjectRecord*> by_id;
    for (const auto& s : dataset.subjects) by_id[s.subject_id] = &s;
    std::vector<std::pair<int, int>> out;
    for (const auto& imp : imputations) {
        auto it = by_id.find(imp.subject_id);
        if (it == by_id.end())
            throw validation_error("imputed_day_counts: imputation for unknown "
                                   "subject " +
                                   imp.subject_id);
        const auto& days = it->second->days;
        if (imp.w.size() != days.size())
            throw validation_error("imputed_day_counts: imputation length mismatch "
                                   "for subject " +
                                   imp.subject_id);
        for (std::size_t t = 0; t < days.size(); ++t)
            out.emplace_back(days[t].day_index, imp.w[t]);
    }
    return out;
}

HeapFractions ppc_heap_fractions(const std::vector<std::pair<int, int>>& day_counts,
                                 int base) {
    if (base != 5 && base != 10 && base != 20)
        throw validation_error("ppc_heap_fractions: base must be 5, 10 or 20");
    if (day_counts.empty())
        throw validation_error("ppc_heap_fractions: no counts");

    HeapFractions out;
    out.base = base;
    std::map<int, std::pair<std::size_t, std::size_t>> per_day;  // hits, total
    std::size_t hits = 0;
    for (const auto& [day, count] : day_counts) {
        bool hit = count % base == 0;
        hits += hit ? 1 : 0;
        auto& cell = per_day[day];
        cell.first += hit ? 1 : 0;
        cell.second += 1;
    }
    out.overall = static_cast<double>(hits) / static_cast<double>(day_counts.size());
    for (const auto& [day, cell] : per_day)
        out.by_day.emplace_back(
            day, static_cast<double>(cell.first) / static_cast<double>(cell.second));
    return out;
}

void TrueCountModel::validate() const {
    switch (kind) {
        case Kind::PointMass:
            if (point < 1)
                throw validation_error("true-count model: point mass must be >= 1");
            break;
        case Kind::Poisson:
            if (!(mean > 0.0))
                throw validation_error("true-count model: mean must be positive");
            break;
        case Kind::NegativeBinomial:
            if (!(mean > 0.0) || !(dispersion > 0.0))
                throw validation_error("true-count model: mean and dispersion must "
                                       "be positive");
            break;
        case Kind::Empirical:
            if (sample_pool.empty())
                throw validation_error("true-count model: empty sample pool");
            for (int v : sample_pool)
                if (v < 1)
                    throw validation_error("true-count model: pool values must be "
                                           ">= 1");
            break;
    }
}

int TrueCountModel::sample(Rng& rng) const {
    switch (kind) {
        case Kind::PointMass:
            return point;
        case Kind::Poisson:
            for (;;) {
                int x = rng.poisson(mean);
                if (x >= 1) return x;
            }
        case Kind::NegativeBinomial:
            for (;;) {
                double lambda = rng.gamma(dispersion, mean / dispersion);
                int x = rng.poisson(lambda);
                if (x >= 1) return x;
            }
        case Kind::Empirical:
            return sample_pool[rng.below(sample_pool.size())];
    }
    return 1;
}

double TrueCountModel::log_pmf(int x) const {
    if (x < 1) return -std::numeric_limits<double>::infinity();
    switch (kind) {
        case Kind::PointMass:
            return x == point ? 0.0 : -std::numeric_limits<double>::infinity();
        case Kind::Poisson: {
            double log_p0 = -mean;
            return poisson_log_pmf(x, mean) - std::log1p(-std::exp(log_p0));
        }
        case Kind::NegativeBinomial: {
            double k = dispersion;
            double log_p = std::lgamma(x + k) - std::lgamma(k) -
                           std::lgamma(x + 1.0) + k * std::log(k / (k + mean)) +
                           x * std::log(mean / (k + mean));
            double log_p0 = k * std::log(k / (k + mean));
            return log_p - std::log1p(-std::exp(log_p0));
        }
        case Kind::Empirical: {
            std::size_t hits = 0;
            for (int v : sample_pool)
                if (v == x) ++hits;
            if (hits == 0) return -std::numeric_limits<double>::infinity();
            return std::log(static_cast<double>(hits) /
                            static_cast<double>(sample_pool.size()));
        }
    }
    return -std::numeric_limits<double>::infinity();
}

PredictionResult predict_true_counts(const Theta& theta, const Dataset& dataset,
                                     const ModelSpec& spec,
                                     const TrueCountModel& x_model, int n_imputations,
                                     const ImputationOptions& options,
                                     const SeedSequencer& seed) {
    if (n_imputations < 1)
        throw validation_error("predict_true_counts: n_imputations must be >= 1");
    theta.validate();
    spec.check_theta_shape(theta);
    x_model.validate();
    dataset.validate();

    const std::size_t n_subjects = dataset.subjects.size();
    const std::size_t n_tasks =
        static_cast<std::size_t>(n_imputations) * n_subjects;
    std::vector<TrueCountImputation> slots(n_tasks);
    std::vector<char> ok(n_tasks, 0);
    std::vector<ImputationFailure> failures_by_task(n_tasks);

    parallel_for(n_tasks, options.n_threads, [&](std::size_t task) {
        const std::size_t k = task / n_subjects;
        const std::size_t i = task % n_subjects;
        const SubjectRecord& subj = dataset.subjects[i];
        Rng rng(seed.substream(task));

        TrueCountImputation imp;
        imp.subject_id = subj.subject_id;
        imp.theta_index = static_cast<int>(k);
        imp.b = rng.normal(0.0, theta.sigma_b);
        imp.u = rng.normal(0.0, theta.sigma_u);
        imp.x.resize(subj.days.size());
        imp.w.resize(subj.days.size());
        imp.g.resize(subj.days.size());

        for (std::size_t t = 0; t < subj.days.size(); ++t) {
            const ObservationDay& day = subj.days[t];
            std::vector<double> zr(spec.recall_covariate_names.size());
            for (std::size_t j = 0; j < zr.size(); ++j)
                zr[j] = spec.recall_design_value(subj, day, j);
            std::vector<double> zh(spec.heaping_covariate_names.size());
            for (std::size_t j = 0; j < zh.size(); ++j)
                zh[j] = spec.heaping_design_value(subj, day, j);

            bool accepted = false;
            double b = imp.b;
            double u = imp.u;
            for (long attempt = 0; attempt < options.max_rejects; ++attempt) {
                if (options.mode == ImputationMode::RedrawEffects && attempt > 0) {
                    b = rng.normal(0.0, theta.sigma_b);
                    u = rng.normal(0.0, theta.sigma_u);
                }
                int x = x_model.sample(rng);
                double mean = std::exp(recall_log_mean(theta, x, zr, b));
                int w = rng.poisson(mean);
                int cls = sample_class(rng, heaping_pmf(theta, w, zh, u));
                HeapingClass g = static_cast<HeapingClass>(cls + 1);
                if (coarsen(w, g) == day.tlfb_count) {
                    imp.x[t] = x;
                    imp.w[t] = w;
                    imp.g[t] = g;
                    imp.b = b;
                    imp.u = u;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                failures_by_task[task] = {static_cast<int>(k), subj.subject_id,
                                          day.day_index, options.max_rejects};
                return;
            }
        }
        slots[task] = std::move(imp);
        ok[task] = 1;
    });

    PredictionResult result;
    for (std::size_t task = 0; task < n_tasks; ++task) {
        if (ok[task])
            result.imputations.push_back(std::move(slots[task]));
        else
            result.failures.push_back(failures_by_task[task]);
    }
    return result;
}

} // namespace recount
