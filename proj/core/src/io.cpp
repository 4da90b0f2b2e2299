#include "recount/io.hpp"

#include "recount/coarsen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace recount {

namespace {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

int parse_int(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw validation_error(where + ": expected an integer, got '" + s + "'");
    }
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw validation_error(where + ": expected a number, got '" + s + "'");
    }
}

std::ofstream open_output(const std::string& path) {
    std::ofstream os(path);
    if (!os)
        throw validation_error("cannot open '" + path + "' for writing");
    return os;
}

} // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw validation_error("cannot open dataset file '" + path + "'");

    std::string line;
    long line_no = 0;
    // Header (after comments).
    std::vector<std::string> header;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        header = split_csv_line(line);
        break;
    }
    const std::vector<std::string> fixed = {"subject_id", "day", "ema_count",
                                            "tlfb_count", "visit_day"};
    if (header.size() < fixed.size())
        throw validation_error(path + ": header must start with subject_id,day,"
                                      "ema_count,tlfb_count,visit_day");
    for (std::size_t j = 0; j < fixed.size(); ++j)
        if (header[j] != fixed[j])
            throw validation_error(path + ": header column " + std::to_string(j + 1) +
                                   " must be '" + fixed[j] + "', got '" + header[j] +
                                   "'");
    std::vector<std::string> covariate_names(header.begin() + fixed.size(),
                                             header.end());
    {
        std::set<std::string> unique(covariate_names.begin(), covariate_names.end());
        if (unique.size() != covariate_names.size())
            throw validation_error(path + ": duplicate covariate column names");
    }

    struct RawRow {
        ObservationDay day;
        std::map<std::string, double> covariates;
        long line_no;
    };
    std::map<std::string, std::vector<RawRow>> by_subject;
    std::vector<std::string> subject_order;

    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv_line(line);
        std::string where = path + ":" + std::to_string(line_no);
        if (cells.size() != header.size())
            throw validation_error(where + ": expected " +
                                   std::to_string(header.size()) + " cells, got " +
                                   std::to_string(cells.size()));
        RawRow row;
        row.line_no = line_no;
        std::string id = cells[0];
        if (id.empty())
            throw validation_error(where + ": empty subject_id");
        row.day.day_index = parse_int(cells[1], where + " (day)");
        row.day.ema_count = parse_int(cells[2], where + " (ema_count)");
        row.day.tlfb_count = parse_int(cells[3], where + " (tlfb_count)");
        int visit = parse_int(cells[4], where + " (visit_day)");
        if (visit != 0 && visit != 1)
            throw validation_error(where + ": visit_day must be 0 or 1");
        row.day.is_visit_day = visit == 1;
        if (row.day.ema_count < 1)
            throw validation_error(
                where + ": ema_count is " + std::to_string(row.day.ema_count) +
                "; instantaneous counts of zero are not supported by the "
                "log-link recall model, remove or recode the row");
        if (row.day.tlfb_count < 0)
            throw validation_error(where + ": tlfb_count must be >= 0");
        for (std::size_t j = 0; j < covariate_names.size(); ++j) {
            const std::string& cell = cells[fixed.size() + j];
            if (cell.empty())
                throw validation_error(where + ": missing value in covariate column '" +
                                       covariate_names[j] + "'");
            row.covariates[covariate_names[j]] =
                parse_double(cell, where + " (" + covariate_names[j] + ")");
        }
        if (by_subject.find(id) == by_subject.end()) subject_order.push_back(id);
        by_subject[id].push_back(std::move(row));
    }
    if (subject_order.empty())
        throw validation_error(path + ": no data rows");

    Dataset dataset;
    dataset.covariate_names = covariate_names;
    for (const auto& id : subject_order) {
        auto& rows = by_subject[id];
        std::sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) {
            return a.day.day_index < b.day.day_index;
        });
        SubjectRecord subj;
        subj.subject_id = id;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (r > 0 && rows[r].day.day_index == rows[r - 1].day.day_index)
                throw validation_error(path + ": duplicate (subject_id, day) pair (" +
                                       id + ", " +
                                       std::to_string(rows[r].day.day_index) + ")");
            subj.days.push_back(rows[r].day);
            for (const auto& [name, value] : rows[r].covariates) {
                auto it = subj.covariates.find(name);
                if (it == subj.covariates.end()) {
                    subj.covariates[name] = value;
                } else if (it->second != value) {
                    throw validation_error(
                        path + ": baseline covariate '" + name +
                        "' varies within subject " + id +
                        " (line " + std::to_string(rows[r].line_no) + ")");
                }
            }
        }
        dataset.subjects.push_back(std::move(subj));
    }
    dataset.validate();
    return dataset;
}

namespace {

void write_comments(std::ofstream& os, const std::vector<std::string>& comments) {
    for (const auto& c : comments) os << "# " << c << "\n";
}

} // namespace

void save_dataset_csv(const std::string& path, const Dataset& dataset,
                      const std::vector<std::string>& comments) {
    dataset.validate();
    auto os = open_output(path);
    write_comments(os, comments);
    os << "subject_id,day,ema_count,tlfb_count,visit_day";
    for (const auto& name : dataset.covariate_names) os << "," << name;
    os << "\n";
    for (const auto& s : dataset.subjects) {
        for (const auto& d : s.days) {
            os << s.subject_id << "," << d.day_index << "," << d.ema_count << ","
               << d.tlfb_count << "," << (d.is_visit_day ? 1 : 0);
            for (const auto& name : dataset.covariate_names)
                os << "," << format_double(s.covariates.at(name));
            os << "\n";
        }
    }
}

void save_latent_truth_csv(const std::string& path, const SimulatedData& sim,
                           const std::vector<std::string>& comments) {
    if (sim.truth.subjects.size() != sim.dataset.subjects.size())
        throw validation_error("save_latent_truth_csv: truth/dataset size mismatch");
    auto os = open_output(path);
    write_comments(os, comments);
    os << "subject_id,day,ema_count,tlfb_count,w,g,b,u\n";
    for (std::size_t i = 0; i < sim.dataset.subjects.size(); ++i) {
        const auto& subj = sim.dataset.subjects[i];
        const auto& truth = sim.truth.subjects[i];
        for (std::size_t t = 0; t < subj.days.size(); ++t) {
            const auto& d = subj.days[t];
            os << subj.subject_id << "," << d.day_index << "," << d.ema_count << ","
               << d.tlfb_count << "," << truth.w[t] << ","
               << static_cast<int>(truth.g[t]) << "," << format_double(truth.b) << ","
               << format_double(truth.u) << "\n";
        }
    }
}

void write_curve_csv(const std::string& path, const CurvePoints& curve,
                     const std::vector<std::string>& comments) {
    auto os = open_output(path);
    write_comments(os, comments);
    if (!curve.metadata.empty()) os << "# " << curve.metadata << "\n";
    os << "x";
    for (const auto& [name, values] : curve.series) {
        if (values.size() != curve.x_values.size())
            throw validation_error("write_curve_csv: series '" + name +
                                   "' length mismatch");
        os << "," << name;
    }
    os << "\n";
    for (std::size_t i = 0; i < curve.x_values.size(); ++i) {
        os << format_double(curve.x_values[i]);
        for (const auto& [name, values] : curve.series)
            os << "," << format_double(values[i]);
        os << "\n";
    }
}

void write_curve_svg(const std::string& path, const CurvePoints& curve) {
    if (curve.x_values.empty() || curve.series.empty())
        throw validation_error("write_curve_svg: empty curve");
    const double width = 720, height = 480, margin = 60;
    double xmin = curve.x_values.front(), xmax = curve.x_values.back();
    double ymin = 0.0, ymax = 0.0;
    for (const auto& [name, values] : curve.series)
        for (double v : values) ymax = std::max(ymax, v);
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    ymax *= 1.05;

    auto px = [&](double x) {
        return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
    };
    auto py = [&](double y) {
        return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
    };
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                   "#d62728", "#9467bd", "#8c564b"};

    auto os = open_output(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
       << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
       << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(ymin) << "\" x2=\""
       << px(xmax) << "\" y2=\"" << py(ymin)
       << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(ymin) << "\" x2=\""
       << px(xmin) << "\" y2=\"" << py(ymax)
       << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int tick = 0; tick <= 5; ++tick) {
        double xv = xmin + (xmax - xmin) * tick / 5.0;
        double yv = ymin + (ymax - ymin) * tick / 5.0;
        os << "<text x=\"" << px(xv) << "\" y=\"" << height - margin / 2
           << "\" font-size=\"12\" text-anchor=\"middle\">" << xv << "</text>\n";
        os << "<text x=\"" << margin / 2 << "\" y=\"" << py(yv)
           << "\" font-size=\"12\" text-anchor=\"middle\">";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", yv);
        os << buf << "</text>\n";
    }
    std::size_t si = 0;
    for (const auto& [name, values] : curve.series) {
        const char* color = colors[si % 6];
        os << "<polyline fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < curve.x_values.size(); ++i)
            os << px(curve.x_values[i]) << "," << py(values[i]) << " ";
        os << "\"/>\n";
        os << "<text x=\"" << width - margin + 4 << "\" y=\""
           << margin + 16.0 * static_cast<double>(si) << "\" font-size=\"12\" fill=\""
           << color << "\">" << name << "</text>\n";
        ++si;
    }
    if (!curve.metadata.empty())
        os << "<text x=\"" << margin << "\" y=\"" << margin / 2
           << "\" font-size=\"12\">" << curve.metadata << "</text>\n";
    os << "</svg>\n";
}

void write_heap_table_csv(const std::string& path, const HeapFractionTable& table,
                          const std::vector<std::string>& comments) {
    auto os = open_output(path);
    write_comments(os, comments);
    os << "day,n_observed,obs_div5,obs_div10,obs_div20,n_imputed,imp_div5,"
          "imp_div10,imp_div20\n";
    auto write_row = [&](const HeapFractionTable::Row& row, const std::string& label) {
        os << label << "," << row.n_observed;
        for (int b = 0; b < 3; ++b) os << "," << format_double(row.observed[b]);
        os << "," << row.n_imputed;
        for (int b = 0; b < 3; ++b) os << "," << format_double(row.imputed[b]);
        os << "\n";
    };
    for (const auto& row : table.rows)
        write_row(row, std::to_string(row.day_index));
    write_row(table.overall, "overall");
}

void write_imputations_csv(const std::string& path, const Dataset& dataset,
                           const std::vector<LatentImputation>& imputations,
                           const std::vector<std::string>& comments) {
    std::map<std::string, const SubjectRecord*> by_id;
    for (const auto& s : dataset.subjects) by_id[s.subject_id] = &s;
    auto os = open_output(path);
    write_comments(os, comments);
    os << "theta_index,subject_id,day,tlfb_count,w,g,b,u\n";
    for (const auto& imp : imputations) {
        const auto* subj = by_id.at(imp.subject_id);
        for (std::size_t t = 0; t < imp.w.size(); ++t) {
            os << imp.theta_index << "," << imp.subject_id << ","
               << subj->days[t].day_index << "," << subj->days[t].tlfb_count << ","
               << imp.w[t] << "," << static_cast<int>(imp.g[t]) << ","
               << format_double(imp.b) << "," << format_double(imp.u) << "\n";
        }
    }
}

void write_predictions_csv(const std::string& path, const Dataset& dataset,
                           const std::vector<TrueCountImputation>& imputations,
                           const std::vector<std::string>& comments) {
    std::map<std::string, const SubjectRecord*> by_id;
    for (const auto& s : dataset.subjects) by_id[s.subject_id] = &s;
    auto os = open_output(path);
    write_comments(os, comments);
    os << "imputation,subject_id,day,tlfb_count,x,w,g,b,u\n";
    for (const auto& imp : imputations) {
        const auto* subj = by_id.at(imp.subject_id);
        for (std::size_t t = 0; t < imp.w.size(); ++t) {
            os << imp.theta_index << "," << imp.subject_id << ","
               << subj->days[t].day_index << "," << subj->days[t].tlfb_count << ","
               << imp.x[t] << "," << imp.w[t] << "," << static_cast<int>(imp.g[t])
               << "," << format_double(imp.b) << "," << format_double(imp.u) << "\n";
        }
    }
}

void RunConfig::validate() const {
    if (threads < 0)
        throw validation_error("config: threads must be >= 0");
    if (quadrature_nodes < 5)
        throw validation_error("config: quadrature_nodes must be >= 5");
    prior.validate();
    if (max_iterations < 1)
        throw validation_error("config: max_iterations must be >= 1");
    if (!(gradient_tolerance > 0.0) || !(objective_tolerance > 0.0))
        throw validation_error("config: optimizer tolerances must be positive");
    if (proposals < 1 || resample < 1 || t_dof < 1)
        throw validation_error("config: sampler settings must be positive");
    if (resample > proposals)
        throw validation_error("config: resample size cannot exceed proposals");
    if (n_subjects < 1 || days_per_subject < 1)
        throw validation_error("config: simulation size must be positive");
    if (replicates < 2)
        throw validation_error("config: replicates must be >= 2");
    if (ci_method != "hessian" && ci_method != "bootstrap")
        throw validation_error("config: ci_method must be hessian or bootstrap");
    if (bootstrap_replicates < 50)
        throw validation_error("config: bootstrap_replicates must be >= 50");
    if (theta_draws < 1 || n_imputations < 1)
        throw validation_error("config: imputation counts must be >= 1");
    if (max_rejects < 1)
        throw validation_error("config: max_rejects must be >= 1");
    if (impute_mode != "fixed" && impute_mode != "redraw")
        throw validation_error("config: impute_mode must be fixed or redraw");
    if (curve != "heaping" && curve != "recall")
        throw validation_error("config: curve must be heaping or recall");
    std::set<std::string> rc(recall_covariates.begin(), recall_covariates.end());
    if (rc.size() != recall_covariates.size())
        throw validation_error("config: duplicate recall covariate names");
    std::set<std::string> hc(heaping_covariates.begin(), heaping_covariates.end());
    if (hc.size() != heaping_covariates.size())
        throw validation_error("config: duplicate heaping covariate names");
}

namespace {

void assign_config(RunConfig& c, const json& j) {
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "threads") c.threads = value.get<int>();
            else if (key == "dataset") c.dataset = value.get<std::string>();
            else if (key == "out") c.out = value.get<std::string>();
            else if (key == "recall_covariates")
                c.recall_covariates = value.get<std::vector<std::string>>();
            else if (key == "heaping_covariates")
                c.heaping_covariates = value.get<std::vector<std::string>>();
            else if (key == "quadrature_nodes") c.quadrature_nodes = value.get<int>();
            else if (key == "beta1_prior_mean") c.prior.beta1_prior_mean = value.get<double>();
            else if (key == "beta1_prior_sd") c.prior.beta1_prior_sd = value.get<double>();
            else if (key == "coef_prior_sd") c.prior.coef_prior_sd = value.get<double>();
            else if (key == "variance_ig_shape") c.prior.variance_ig_shape = value.get<double>();
            else if (key == "variance_ig_scale") c.prior.variance_ig_scale = value.get<double>();
            else if (key == "use_prior") c.use_prior = value.get<bool>();
            else if (key == "max_iterations") c.max_iterations = value.get<int>();
            else if (key == "gradient_tolerance") c.gradient_tolerance = value.get<double>();
            else if (key == "objective_tolerance") c.objective_tolerance = value.get<double>();
            else if (key == "proposals") c.proposals = value.get<int>();
            else if (key == "resample") c.resample = value.get<int>();
            else if (key == "t_dof") c.t_dof = value.get<int>();
            else if (key == "scenario") c.scenario = value.get<std::string>();
            else if (key == "n_subjects") c.n_subjects = value.get<int>();
            else if (key == "days_per_subject") c.days_per_subject = value.get<int>();
            else if (key == "replicates") c.replicates = value.get<int>();
            else if (key == "ci_method") c.ci_method = value.get<std::string>();
            else if (key == "bootstrap_replicates") c.bootstrap_replicates = value.get<int>();
            else if (key == "fit_artifact") c.fit_artifact = value.get<std::string>();
            else if (key == "params_file") c.params_file = value.get<std::string>();
            else if (key == "theta_draws") c.theta_draws = value.get<int>();
            else if (key == "max_rejects") c.max_rejects = value.get<long>();
            else if (key == "impute_mode") c.impute_mode = value.get<std::string>();
            else if (key == "x_model") c.x_model = value.get<std::string>();
            else if (key == "n_imputations") c.n_imputations = value.get<int>();
            else if (key == "curve") c.curve = value.get<std::string>();
            else if (key == "range_min") c.range_min = value.get<int>();
            else if (key == "range_max") c.range_max = value.get<int>();
            else if (key == "visit") c.visit = value.get<bool>();
            else if (key == "marginal") c.marginal = value.get<bool>();
            else if (key == "svg") c.svg = value.get<bool>();
            else
                throw validation_error("config: unknown key '" + key + "'");
        } catch (const json::exception&) {
            throw validation_error("config: bad value for key '" + key + "'");
        }
    }
}

} // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is)
        throw validation_error("cannot open config file '" + path + "'");
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw validation_error("config file '" + path + "' is not valid JSON: " +
                               e.what());
    }
    if (!j.is_object())
        throw validation_error("config file '" + path + "' must hold a JSON object");
    // Accept an artifact with an embedded effective config.
    if (j.contains("config") && j["config"].is_object()) j = j["config"];
    RunConfig config;
    assign_config(config, j);
    config.validate();
    return config;
}

std::string run_config_to_json(const RunConfig& config) {
    json j;
    j["seed"] = config.seed;
    j["threads"] = config.threads;
    j["dataset"] = config.dataset;
    j["out"] = config.out;
    j["recall_covariates"] = config.recall_covariates;
    j["heaping_covariates"] = config.heaping_covariates;
    j["quadrature_nodes"] = config.quadrature_nodes;
    j["beta1_prior_mean"] = config.prior.beta1_prior_mean;
    j["beta1_prior_sd"] = config.prior.beta1_prior_sd;
    j["coef_prior_sd"] = config.prior.coef_prior_sd;
    j["variance_ig_shape"] = config.prior.variance_ig_shape;
    j["variance_ig_scale"] = config.prior.variance_ig_scale;
    j["use_prior"] = config.use_prior;
    j["max_iterations"] = config.max_iterations;
    j["gradient_tolerance"] = config.gradient_tolerance;
    j["objective_tolerance"] = config.objective_tolerance;
    j["proposals"] = config.proposals;
    j["resample"] = config.resample;
    j["t_dof"] = config.t_dof;
    j["scenario"] = config.scenario;
    j["n_subjects"] = config.n_subjects;
    j["days_per_subject"] = config.days_per_subject;
    j["replicates"] = config.replicates;
    j["ci_method"] = config.ci_method;
    j["bootstrap_replicates"] = config.bootstrap_replicates;
    j["fit_artifact"] = config.fit_artifact;
    j["params_file"] = config.params_file;
    j["theta_draws"] = config.theta_draws;
    j["max_rejects"] = config.max_rejects;
    j["impute_mode"] = config.impute_mode;
    j["x_model"] = config.x_model;
    j["n_imputations"] = config.n_imputations;
    j["curve"] = config.curve;
    j["range_min"] = config.range_min;
    j["range_max"] = config.range_max;
    j["visit"] = config.visit;
    j["marginal"] = config.marginal;
    j["svg"] = config.svg;
    return j.dump();
}

std::string config_hash(const RunConfig& config) {
    std::string text = run_config_to_json(config);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

std::string theta_to_json_string(const Theta& theta) {
    json j;
    j["beta0"] = theta.beta0;
    j["beta1"] = theta.beta1;
    j["beta2"] = theta.beta2;
    j["sigma_b"] = theta.sigma_b;
    j["gamma1"] = theta.gamma1;
    j["gamma2"] = theta.gamma2;
    j["gamma3"] = theta.gamma3;
    j["gamma0"] = theta.gamma0;
    j["beta3"] = theta.beta3;
    j["sigma_u"] = theta.sigma_u;
    return j.dump();
}

Theta theta_from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw validation_error(std::string("theta JSON parse error: ") + e.what());
    }
    Theta theta;
    try {
        theta.beta0 = j.at("beta0").get<double>();
        theta.beta1 = j.at("beta1").get<double>();
        theta.beta2 = j.value("beta2", std::vector<double>{});
        theta.sigma_b = j.at("sigma_b").get<double>();
        theta.gamma1 = j.at("gamma1").get<double>();
        theta.gamma2 = j.at("gamma2").get<double>();
        theta.gamma3 = j.at("gamma3").get<double>();
        theta.gamma0 = j.at("gamma0").get<double>();
        theta.beta3 = j.value("beta3", std::vector<double>{});
        theta.sigma_u = j.at("sigma_u").get<double>();
    } catch (const json::exception& e) {
        throw validation_error(std::string("theta JSON missing or bad field: ") +
                               e.what());
    }
    theta.validate();
    return theta;
}

TrueCountModel parse_true_count_model(const std::string& text) {
    auto colon = text.find(':');
    std::string kind = text.substr(0, colon);
    std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
    TrueCountModel model;
    if (kind == "point") {
        model.kind = TrueCountModel::Kind::PointMass;
        model.point = parse_int(args, "x_model point");
    } else if (kind == "poisson") {
        model.kind = TrueCountModel::Kind::Poisson;
        model.mean = parse_double(args, "x_model poisson mean");
    } else if (kind == "negbin") {
        auto comma = args.find(',');
        if (comma == std::string::npos)
            throw validation_error("x_model negbin needs mean,dispersion");
        model.kind = TrueCountModel::Kind::NegativeBinomial;
        model.mean = parse_double(args.substr(0, comma), "x_model negbin mean");
        model.dispersion =
            parse_double(args.substr(comma + 1), "x_model negbin dispersion");
    } else if (kind == "empirical") {
        model.kind = TrueCountModel::Kind::Empirical;
        std::ifstream is(args);
        if (!is)
            throw validation_error("x_model empirical: cannot open '" + args + "'");
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            model.sample_pool.push_back(parse_int(line, "x_model empirical value"));
        }
    } else {
        throw validation_error("x_model must be point:, poisson:, negbin: or "
                               "empirical:");
    }
    model.validate();
    return model;
}

} // namespace recount
