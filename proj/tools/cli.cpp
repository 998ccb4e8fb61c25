#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "copula_rank/errors.hpp"
#include "copula_rank/estimators.hpp"
#include "copula_rank/geometry.hpp"
#include "copula_rank/json_io.hpp"
#include "copula_rank/mc.hpp"
#include "copula_rank/models.hpp"

namespace copula_rank::cli {

namespace {

enum class Format { json, csv, pretty };

struct ModelFlags {
  std::string family;
  Index p = 0;
  Index q = 0;
  std::string constraint = "lower_triangular";
  std::string model_file;
  std::vector<std::string> theta;
  std::string format = "pretty";
};

void add_model_flags(CLI::App* cmd, ModelFlags& f, bool with_theta) {
  cmd->add_option("--family", f.family,
                  "unrestricted, exchangeable, toeplitz, circular, factor, "
                  "adaptivity_demo");
  cmd->add_option("--p", f.p, "dimension");
  cmd->add_option("--q", f.q, "number of factors (factor family)");
  cmd->add_option("--constraint", f.constraint,
                  "factor loadings: lower_triangular (default) or none");
  cmd->add_option("--model", f.model_file, "JSON model descriptor file");
  if (with_theta)
    cmd->add_option("--theta", f.theta,
                    "parameter values, whitespace separated; for the "
                    "unrestricted family the lower triangle row by row: "
                    "r21 r31 r32 r41 ...")
        ->required()
        ->allow_extra_args()
        ->expected(1, -1);
  cmd->add_option("--format", f.format, "json, csv or pretty")
      ->check(CLI::IsMember({"json", "csv", "pretty"}));
}

Format format_of(const ModelFlags& f) {
  if (f.format == "json") return Format::json;
  if (f.format == "csv") return Format::csv;
  return Format::pretty;
}

ModelDescriptor descriptor_of(const ModelFlags& f) {
  if (!f.model_file.empty()) {
    if (!f.family.empty())
      throw ConfigError("--model and --family are mutually exclusive");
    return descriptor_from_json(read_json_file(f.model_file));
  }
  if (f.family.empty()) throw ConfigError("--family or --model is required");
  Json j;
  j["family"] = f.family;
  if (f.p > 0) j["p"] = f.p;
  if (f.family == "factor") {
    j["q"] = f.q;
    j["constraint"] = f.constraint;
  }
  return descriptor_from_json(j);
}

Vector parse_theta(const std::vector<std::string>& tokens) {
  std::vector<double> vals;
  for (const std::string& tok : tokens) {
    std::istringstream is(tok);
    std::string word;
    while (is >> word) {
      double v = 0.0;
      const auto [ptr, ec] =
          std::from_chars(word.data(), word.data() + word.size(), v);
      if (ec != std::errc() || ptr != word.data() + word.size())
        throw ConfigError("--theta: '" + word + "' is not a number");
      vals.push_back(v);
    }
  }
  if (vals.empty()) throw ConfigError("--theta: no values given");
  return Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
}

// RFC-4180 subset: comma separated, optional header row, optional quotes
// around fields, '.' decimal separator.
Matrix read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--data: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    bool numeric = true;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) {
      const auto b = field.find_first_not_of(" \t\"");
      const auto e = field.find_last_not_of(" \t\"");
      field = b == std::string::npos ? "" : field.substr(b, e - b + 1);
      double v = 0.0;
      const auto [ptr, ec] =
          std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc() ||
          ptr != field.data() + field.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw ConfigError("--data: line " + std::to_string(line_no) +
                        " contains a non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("--data: line " + std::to_string(line_no) +
                        " has a different number of fields");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("--data: no data rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string fmt(const Vector& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) out += (i ? "  " : "") + fmt(v(i));
  return out;
}

void pretty_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << name << ":\n";
  for (Index i = 0; i < m.rows(); ++i) {
    out << "  ";
    for (Index j = 0; j < m.cols(); ++j) out << std::setw(16) << fmt(m(i, j));
    out << "\n";
  }
}

void csv_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      os << name << ',' << i << ',' << j << ',' << m(i, j) << '\n';
  out << os.str();
}

Json header_json(const CorrelationModel& model, const ModelDescriptor& d,
                 const Vector& theta) {
  Json j;
  j["model"] = descriptor_to_json(d);
  j["model"]["k"] = model.k();
  j["theta"] = to_json(theta);
  return j;
}

// ---------------------------------------------------------------------------

int cmd_bound(const ModelFlags& f, std::ostream& out) {
  const ModelDescriptor d = descriptor_of(f);
  const ModelPtr model = build_model(d);
  const Vector theta = parse_theta(f.theta);
  const Geometry g = eval_geometry(*model, theta);
  const Matrix fisher = fisher_info(g);
  const InfoPair eff = efficient_info(g);
  switch (format_of(f)) {
    case Format::json: {
      Json j = header_json(*model, d, theta);
      j["fisher"] = to_json(fisher);
      j["eff_info"] = to_json(eff.info);
      j["eff_info_inv"] = to_json(eff.inverse);
      out << j.dump(2) << "\n";
      break;
    }
    case Format::csv:
      out << "matrix,row,col,value\n";
      csv_matrix(out, "fisher", fisher);
      csv_matrix(out, "eff_info", eff.info);
      csv_matrix(out, "eff_info_inv", eff.inverse);
      break;
    case Format::pretty:
      out << "model " << model->name() << " (p = " << model->p()
          << ", k = " << model->k() << ") at theta = " << fmt(theta) << "\n";
      pretty_matrix(out, "Fisher information I", fisher);
      pretty_matrix(out, "efficient information I*", eff.info);
      pretty_matrix(out, "efficiency bound I*^-1", eff.inverse);
      break;
  }
  return kExitOk;
}

int cmd_check(const ModelFlags& f, double span_tol, double diag_tol,
              std::ostream& out) {
  const ModelDescriptor d = descriptor_of(f);
  const ModelPtr model = build_model(d);
  const Vector theta = parse_theta(f.theta);
  const Geometry g = eval_geometry(*model, theta);
  const Assumption1Report a1 = validate_assumption1(*model, theta);

  std::vector<DiagnosticReport> reports;
  std::vector<std::string> notes;
  const PleInfluence ple = ple_influence(g);
  reports.push_back(regularity_check(ple.a, g, diag_tol));
  reports.back().criterion = "ple_regularity";
  try {
    const auto eff = efficient_score_matrices(g);
    const Matrix inv = efficient_info(g, eff).inverse;
    std::vector<SymMatrix> ose;
    for (Index m = 0; m < g.k(); ++m) {
      Matrix a = Matrix::Zero(g.p(), g.p());
      for (Index mm = 0; mm < g.k(); ++mm) a += inv(m, mm) * eff[mm].mat();
      ose.push_back(SymMatrix::symmetrized(a));
    }
    reports.push_back(regularity_check(ose, g, diag_tol));
    reports.back().criterion = "one_step_regularity";
  } catch (const SingularityError& e) {
    notes.push_back(std::string("one-step regularity skipped: ") + e.what());
  }
  const DiagnosticReport eff_rep = efficiency_criterion(g, std::nullopt, span_tol);
  const DiagnosticReport adapt = adaptivity_check(g, diag_tol);
  reports.push_back(eff_rep);
  reports.push_back(adapt);
  for (const auto& n : a1.notes) notes.push_back(n);

  switch (format_of(f)) {
    case Format::json: {
      Json j = header_json(*model, d, theta);
      j["assumption1"] = assumption_to_json(a1);
      j["reports"] = Json::array();
      for (const auto& r : reports) j["reports"].push_back(diagnostic_to_json(r));
      j["ple_efficient"] = eff_rep.verdict;
      j["adaptive"] = adapt.verdict;
      j["notes"] = notes;
      out << j.dump(2) << "\n";
      break;
    }
    case Format::csv: {
      std::ostringstream os;
      os << std::setprecision(17);
      os << "criterion,m,residual,tolerance,verdict\n";
      for (const auto& r : reports)
        for (std::size_t m = 0; m < r.per_m_residuals.size(); ++m)
          os << r.criterion << ',' << m << ',' << r.per_m_residuals[m] << ','
             << r.tolerance << ',' << (r.verdict ? "true" : "false") << '\n';
      out << os.str();
      break;
    }
    case Format::pretty:
      out << "model " << model->name() << " at theta = " << fmt(theta) << "\n";
      out << "parametrization checks: " << (a1.passed() ? "pass" : "FAIL")
          << " (rank " << a1.numerical_rank << " of " << model->k() << ")\n";
      for (const auto& v : a1.violations) out << "  violation: " << v << "\n";
      for (const auto& r : reports) {
        double worst = 0.0;
        for (double v : r.per_m_residuals) worst = std::max(worst, v);
        out << std::left << std::setw(22) << r.criterion << std::right
            << (r.verdict ? "true " : "false") << "  max residual "
            << fmt(worst) << "  tolerance " << fmt(r.tolerance) << "\n";
      }
      out << "ple_efficient = " << (eff_rep.verdict ? "true" : "false")
          << ", adaptive = " << (adapt.verdict ? "true" : "false") << "\n";
      for (const auto& n : notes) out << "note: " << n << "\n";
      break;
  }
  return kExitOk;
}

int cmd_estimate(const ModelFlags& f, const std::string& data_path,
                 const std::string& method, bool iterate_twice,
                 std::ostream& out) {
  const ModelDescriptor d = descriptor_of(f);
  const ModelPtr model = build_model(d);
  const Method m = parse_method(method);
  const RankedSample sample = rank_transform(read_csv(data_path));
  EstimateResult res;
  switch (m) {
    case Method::pilot_moment:
      res = pilot_moment(*model, sample);
      break;
    case Method::ple: {
      const EstimateResult pilot = pilot_moment(*model, sample);
      res = pilot.method == Method::ple
                ? pilot
                : ple_estimate(*model, sample, pilot.theta_hat);
      break;
    }
    case Method::one_step: {
      const EstimateResult pilot = pilot_moment(*model, sample);
      res = one_step(*model, sample, pilot.theta_hat,
                     OneStepOptions{iterate_twice});
      break;
    }
  }
  if (model->reparametrized())
    res.notes.push_back("unverified reparametrization condition");
  switch (format_of(f)) {
    case Format::json: {
      Json j;
      j["model"] = descriptor_to_json(d);
      j["n"] = sample.n;
      const Json e = estimate_to_json(res);
      for (const auto& [k, v] : e.items()) j[k] = v;
      out << j.dump(2) << "\n";
      break;
    }
    case Format::csv: {
      std::ostringstream os;
      os << std::setprecision(17) << "component,theta_hat,std_error\n";
      for (Index i = 0; i < res.theta_hat.size(); ++i)
        os << i << ',' << res.theta_hat(i) << ',' << res.std_errors(i) << '\n';
      out << os.str();
      break;
    }
    case Format::pretty:
      out << method_name(res.method) << " estimate for " << model->name()
          << " (n = " << sample.n << ")\n";
      out << "  theta_hat  " << fmt(res.theta_hat) << "\n";
      out << "  std_errors " << fmt(res.std_errors) << "\n";
      out << "  converged " << (res.converged ? "true" : "false")
          << ", iterations " << res.iterations << "\n";
      if (res.tie_warning) out << "warning: ties in the data; average ranks used\n";
      if (res.clamped) out << "warning: update clamped to the domain\n";
      for (const auto& n : res.notes) out << "note: " << n << "\n";
      break;
  }
  return kExitOk;
}

int cmd_are(const ModelFlags& f, std::ostream& out) {
  const ModelDescriptor d = descriptor_of(f);
  const ModelPtr model = build_model(d);
  const Vector theta = parse_theta(f.theta);
  const EfficiencyBundle b = efficiency_bundle(eval_geometry(*model, theta));
  const Vector are = are_vector(b);
  switch (format_of(f)) {
    case Format::json: {
      Json j = header_json(*model, d, theta);
      j["are"] = to_json(are);
      j["eff_info_inv_diag"] = to_json(Vector(b.eff_info_inv.diagonal()));
      j["ple_cov_diag"] = to_json(Vector(b.ple_cov.diagonal()));
      out << j.dump(2) << "\n";
      break;
    }
    case Format::csv: {
      std::ostringstream os;
      os << std::setprecision(17) << "component,are,eff_info_inv,ple_cov\n";
      for (Index i = 0; i < are.size(); ++i)
        os << i << ',' << are(i) << ',' << b.eff_info_inv(i, i) << ','
           << b.ple_cov(i, i) << '\n';
      out << os.str();
      break;
    }
    case Format::pretty:
      out << "ARE of the pseudo-likelihood estimator, " << model->name()
          << " at theta = " << fmt(theta) << "\n";
      for (Index i = 0; i < are.size(); ++i)
        out << "  theta_" << i + 1 << "  ARE " << fmt(are(i)) << "  (bound "
            << fmt(b.eff_info_inv(i, i)) << ", ple " << fmt(b.ple_cov(i, i))
            << ")\n";
      break;
  }
  return kExitOk;
}

unsigned workers_from_env() {
  const char* env = std::getenv("COPULA_RANK_WORKERS");
  if (!env || !*env) return 0;
  unsigned v = 0;
  const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), v);
  if (ec != std::errc() || *ptr != '\0')
    throw ConfigError("COPULA_RANK_WORKERS: not a non-negative integer");
  return v;
}

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 std::optional<unsigned> workers, const std::string& out_dir,
                 const std::string& format, std::ostream& out) {
  McConfig cfg = config_from_json(read_json_file(config_path));
  if (seed) cfg.seed = *seed;
  cfg.workers = workers ? *workers : workers_from_env();
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  const std::vector<McReport> reports = run_grid(cfg);
  if (!cfg.output_dir.empty()) write_outputs(cfg.output_dir, cfg, reports);
  const auto rows = summarize(reports);
  if (format == "json") {
    Json j;
    j["config"] = config_to_json(cfg);
    j["summary"] = summary_to_json(rows);
    out << j.dump(2) << "\n";
  } else if (format == "csv") {
    out << summary_csv(rows);
  } else {
    out << "simulation: " << reports.front().model_name << ", n = " << cfg.n
        << ", " << cfg.replications << " replications, seed " << cfg.seed
        << "\n";
    out << std::left << std::setw(24) << "theta" << std::setw(14) << "estimator"
        << std::setw(4) << "m" << std::setw(14) << "bias" << std::setw(14)
        << "n*var" << std::setw(14) << "bound" << "failures\n";
    for (const auto& r : rows)
      out << std::setw(24) << fmt(r.theta) << std::setw(14) << r.estimator
          << std::setw(4) << r.component << std::setw(14) << fmt(r.bias)
          << std::setw(14) << fmt(r.n_variance) << std::setw(14)
          << fmt(r.eff_bound) << r.failures << "\n";
    if (!cfg.output_dir.empty())
      out << "wrote report.json, errors.csv, summary.csv to " << cfg.output_dir
          << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Semiparametric efficiency bounds and rank-based estimators "
               "for structured Gaussian copula models"};
  app.name("copula-rank");
  app.require_subcommand(1, 1);

  ModelFlags bound_f, check_f, est_f, are_f;
  auto* bound = app.add_subcommand("bound", "Fisher and efficient information");
  add_model_flags(bound, bound_f, true);

  auto* check = app.add_subcommand(
      "check", "regularity, efficiency and adaptivity diagnostics");
  add_model_flags(check, check_f, true);
  double span_tol = kDefaultSpanTolerance, diag_tol = kDiagnosticTolerance;
  check->add_option("--span-tol", span_tol, "relative span tolerance");
  check->add_option("--diag-tol", diag_tol, "relative diagonal tolerance");

  auto* estimate = app.add_subcommand("estimate", "estimate theta from CSV data");
  add_model_flags(estimate, est_f, false);
  std::string data_path, method = "one_step";
  bool twice = false;
  estimate->add_option("--data", data_path, "CSV file, n rows by p columns")
      ->required();
  estimate->add_option("--method", method, "one_step, ple or pilot_moment")
      ->check(CLI::IsMember({"one_step", "ple", "pilot_moment"}));
  estimate->add_flag("--iterate-twice", twice, "apply the one-step update twice");

  auto* are = app.add_subcommand("are", "asymptotic relative efficiency of the PLE");
  add_model_flags(are, are_f, true);

  auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo experiment");
  std::string config_path, out_dir, sim_format = "pretty";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  simulate->add_option("config", config_path, "experiment config (JSON)")
      ->required();
  simulate->add_option("--seed", seed, "overrides the config seed");
  simulate->add_option("--workers", workers,
                       "worker threads (default: COPULA_RANK_WORKERS, then "
                       "logical cores)");
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_option("--format", sim_format, "json, csv or pretty")
      ->check(CLI::IsMember({"json", "csv", "pretty"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*bound) return cmd_bound(bound_f, out);
    if (*check) return cmd_check(check_f, span_tol, diag_tol, out);
    if (*estimate) return cmd_estimate(est_f, data_path, method, twice, out);
    if (*are) return cmd_are(are_f, out);
    if (*simulate)
      return cmd_simulate(config_path, seed, workers, out_dir, sim_format, out);
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << "\n" << e.trace();
    return kExitRuntime;
  } catch (const SingularityError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const ExperimentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace copula_rank::cli
