#include "copula_rank/json_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "copula_rank/errors.hpp"

namespace copula_rank {

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i)
    out.push_back(std::isfinite(v(i)) ? Json(v(i)) : Json(nullptr));
  return out;
}

Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Index i = 0; i < m.rows(); ++i) out.push_back(to_json(Vector(m.row(i).transpose())));
  return out;
}

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key))
      throw ConfigError(where + key + ": unknown field");
}

template <class T>
T get_field(const Json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + key + ": missing or of the wrong type");
  }
}

Vector vector_from_json(const Json& j, const std::string& field) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw ConfigError(field + ": expected a number list");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ConfigError(field + "[" + std::to_string(i) + "]: expected a number");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(field + ": expected a list of rows");
  const auto rows = static_cast<Index>(j.size());
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(i)],
                                        field + "[" + std::to_string(i) + "]");
    if (row.size() != cols)
      throw ConfigError(field + ": rows have different lengths");
    m.row(i) = row.transpose();
  }
  return m;
}

}  // namespace

ModelDescriptor descriptor_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  reject_unknown(j, {"family", "p", "q", "constraint", "generators"}, "model.");
  ModelDescriptor d;
  d.family = parse_family(get_field<std::string>(j, "family", "model."));
  switch (d.family) {
    case Family::circular:
      d.p = 4;
      break;
    case Family::adaptivity_demo:
      d.p = 3;
      break;
    default:
      d.p = get_field<Index>(j, "p", "model.");
  }
  if (j.contains("p") && get_field<Index>(j, "p", "model.") != d.p)
    throw ConfigError("model.p: this family has p = " + std::to_string(d.p));
  if (d.family == Family::factor) d.q = get_field<Index>(j, "q", "model.");
  if (j.contains("constraint")) {
    const auto c = get_field<std::string>(j, "constraint", "model.");
    if (c == "lower_triangular")
      d.constraint = LoadingConstraint::lower_triangular;
    else if (c == "none")
      d.constraint = LoadingConstraint::none;
    else
      throw ConfigError("model.constraint: expected lower_triangular or none");
  }
  if (d.family == Family::custom_affine) {
    if (!j.contains("generators") || !j["generators"].is_array())
      throw ConfigError("model.generators: expected a list of matrices");
    const Json& g = j["generators"];
    for (std::size_t m = 0; m < g.size(); ++m)
      d.generators.push_back(
          matrix_from_json(g[m], "model.generators[" + std::to_string(m) + "]"));
  }
  return d;
}

Json descriptor_to_json(const ModelDescriptor& d) {
  Json j;
  j["family"] = family_name(d.family);
  j["p"] = d.p;
  if (d.family == Family::factor) {
    j["q"] = d.q;
    j["constraint"] = d.constraint == LoadingConstraint::lower_triangular
                          ? "lower_triangular"
                          : "none";
  }
  if (d.family == Family::custom_affine) {
    j["generators"] = Json::array();
    for (const Matrix& g : d.generators) j["generators"].push_back(to_json(g));
  }
  return j;
}

McConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  reject_unknown(j,
                 {"model", "theta_true", "theta_grid", "n", "replications",
                  "estimators", "seed", "margins", "output_dir", "workers",
                  "max_failure_fraction"},
                 "");
  McConfig cfg;
  if (!j.contains("model")) throw ConfigError("model: missing");
  cfg.model = descriptor_from_json(j["model"]);
  if (j.contains("theta_true") == j.contains("theta_grid"))
    throw ConfigError("theta_true: give exactly one of theta_true, theta_grid");
  if (j.contains("theta_true")) {
    cfg.theta_grid.push_back(vector_from_json(j["theta_true"], "theta_true"));
  } else {
    const Json& g = j["theta_grid"];
    if (!g.is_array() || g.empty())
      throw ConfigError("theta_grid: expected a non-empty list");
    for (std::size_t i = 0; i < g.size(); ++i)
      cfg.theta_grid.push_back(
          vector_from_json(g[i], "theta_grid[" + std::to_string(i) + "]"));
  }
  cfg.n = get_field<Index>(j, "n", "");
  if (j.contains("replications"))
    cfg.replications = get_field<Index>(j, "replications", "");
  if (j.contains("estimators")) {
    cfg.estimators.clear();
    for (const auto& e : get_field<std::vector<std::string>>(j, "estimators", ""))
      cfg.estimators.push_back(parse_method(e));
  }
  if (j.contains("seed")) cfg.seed = get_field<std::uint64_t>(j, "seed", "");
  if (j.contains("margins")) {
    const Json& m = j["margins"];
    if (m.is_string()) {
      cfg.margins.push_back(parse_margin(m.get<std::string>()));
    } else {
      for (const auto& s : get_field<std::vector<std::string>>(j, "margins", ""))
        cfg.margins.push_back(parse_margin(s));
    }
  }
  if (j.contains("output_dir"))
    cfg.output_dir = get_field<std::string>(j, "output_dir", "");
  if (j.contains("workers")) cfg.workers = get_field<unsigned>(j, "workers", "");
  if (j.contains("max_failure_fraction"))
    cfg.max_failure_fraction = get_field<double>(j, "max_failure_fraction", "");
  validate_config(cfg);
  return cfg;
}

Json config_to_json(const McConfig& cfg) {
  Json j;
  j["model"] = descriptor_to_json(cfg.model);
  j["theta_grid"] = Json::array();
  for (const Vector& t : cfg.theta_grid) j["theta_grid"].push_back(to_json(t));
  j["n"] = cfg.n;
  j["replications"] = cfg.replications;
  j["estimators"] = Json::array();
  for (Method m : cfg.estimators) j["estimators"].push_back(method_name(m));
  j["seed"] = cfg.seed;
  j["margins"] = Json::array();
  for (MarginKind k : cfg.margins) j["margins"].push_back(margin_name(k));
  j["max_failure_fraction"] = cfg.max_failure_fraction;
  return j;
}

Json estimate_to_json(const EstimateResult& r) {
  Json j;
  j["theta_hat"] = to_json(r.theta_hat);
  j["std_errors"] = to_json(r.std_errors);
  j["method"] = method_name(r.method);
  j["converged"] = r.converged;
  j["tie_warning"] = r.tie_warning;
  j["iterations"] = r.iterations;
  j["clamped"] = r.clamped;
  j["closed_form"] = r.closed_form;
  j["notes"] = r.notes;
  return j;
}

Json diagnostic_to_json(const DiagnosticReport& r) {
  Json j;
  j["criterion"] = r.criterion;
  j["per_m_residuals"] = r.per_m_residuals;
  j["tolerance"] = r.tolerance;
  j["verdict"] = r.verdict;
  Json details = Json::object();
  for (const auto& [k, v] : r.details) details[k] = v;
  j["details"] = details;
  return j;
}

Json assumption_to_json(const Assumption1Report& r) {
  Json j;
  j["passed"] = r.passed();
  j["in_domain"] = r.in_domain;
  j["positive_definite"] = r.positive_definite;
  j["min_eigenvalue"] = r.min_eigenvalue;
  j["max_unit_diagonal_deviation"] = r.max_unit_diagonal_deviation;
  j["max_rdot_diagonal"] = r.max_rdot_diagonal;
  j["rdot_singular_values"] = r.rdot_singular_values;
  j["numerical_rank"] = r.numerical_rank;
  j["rdot_independent"] = r.rdot_independent;
  j["violations"] = r.violations;
  j["notes"] = r.notes;
  return j;
}

Json report_to_json(const McReport& r) {
  Json j;
  j["model"] = descriptor_to_json(r.model);
  j["theta_true"] = to_json(r.theta_true);
  j["n"] = r.n;
  j["replications"] = r.replications;
  j["seed"] = r.seed;
  j["margins"] = r.margins;
  j["eff_bound"] = to_json(r.eff_bound);
  j["ple_bound"] = to_json(r.ple_bound);
  j["estimators"] = Json::array();
  for (const EstimatorSummary& s : r.estimators) {
    Json e;
    e["method"] = method_name(s.method);
    e["successes"] = s.successes;
    e["failures"] = s.failures;
    e["bias"] = to_json(s.bias);
    e["variance"] = to_json(s.variance);
    e["n_variance"] = to_json(s.n_variance);
    e["failure_samples"] = s.failure_samples;
    j["estimators"].push_back(e);
  }
  return j;
}

Json summary_to_json(std::span<const SummaryRow> rows) {
  Json out = Json::array();
  for (const SummaryRow& r : rows) {
    Json j;
    j["theta"] = to_json(r.theta);
    j["n"] = r.n;
    j["estimator"] = r.estimator;
    j["component"] = r.component;
    j["bias"] = std::isfinite(r.bias) ? Json(r.bias) : Json(nullptr);
    j["n_variance"] = std::isfinite(r.n_variance) ? Json(r.n_variance) : Json(nullptr);
    j["eff_bound"] = std::isfinite(r.eff_bound) ? Json(r.eff_bound) : Json(nullptr);
    j["ple_bound"] = std::isfinite(r.ple_bound) ? Json(r.ple_bound) : Json(nullptr);
    j["successes"] = r.successes;
    j["failures"] = r.failures;
    out.push_back(j);
  }
  return out;
}

void write_outputs(const std::string& dir, const McConfig& cfg,
                   std::span<const McReport> reports) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output_dir: cannot create '" + dir + "'");
  const auto rows = summarize(reports);

  Json report;
  report["config"] = config_to_json(cfg);
  report["reports"] = Json::array();
  for (const McReport& r : reports) report["reports"].push_back(report_to_json(r));
  report["summary"] = summary_to_json(rows);

  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream os(fs::path(dir) / name, std::ios::binary);
    if (!os) throw ConfigError("output_dir: cannot write " + name);
    os << text;
  };
  write("report.json", report.dump(2) + "\n");
  write("errors.csv", errors_csv(reports));
  write("summary.csv", summary_csv(rows));
}

Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace copula_rank
