#include "copula_rank/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

#include "copula_rank/errors.hpp"
#include "copula_rank/geometry.hpp"

namespace copula_rank {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RepOutcome {
  std::vector<Vector> estimates;  // empty vector on failure
  std::vector<std::string> errors;
};

MarginSpec margin_spec(const std::vector<MarginKind>& kinds) {
  MarginSpec spec;
  for (MarginKind k : kinds) spec.columns.push_back(Margin{k, {}});
  return spec;
}

RepOutcome run_replication(const CorrelationModel& model, const McConfig& cfg,
                           const SymMatrix& r_true, const MarginSpec& margins,
                           std::uint64_t rep) {
  const std::size_t ne = cfg.estimators.size();
  RepOutcome out{std::vector<Vector>(ne), std::vector<std::string>(ne)};

  RankedSample sample;
  try {
    const Matrix u = sample_copula(r_true, cfg.n, cfg.seed, rep);
    sample = rank_transform(apply_margins(u, margins));
  } catch (const Error& e) {
    for (auto& s : out.errors) s = e.what();
    return out;
  }

  std::optional<EstimateResult> pilot;
  std::string pilot_error;
  const bool need_pilot =
      std::any_of(cfg.estimators.begin(), cfg.estimators.end(),
                  [](Method m) { return m != Method::ple; }) ||
      !model.unrestricted();
  if (need_pilot) {
    try {
      pilot = pilot_moment(model, sample);
    } catch (const Error& e) {
      pilot_error = e.what();
    }
  }

  for (std::size_t e = 0; e < ne; ++e) {
    try {
      switch (cfg.estimators[e]) {
        case Method::pilot_moment:
          if (!pilot) throw ExperimentError(pilot_error);
          out.estimates[e] = pilot->theta_hat;
          break;
        case Method::one_step:
          if (!pilot) throw ExperimentError("pilot failed: " + pilot_error);
          out.estimates[e] = one_step(model, sample, pilot->theta_hat).theta_hat;
          break;
        case Method::ple: {
          const Vector init = pilot && model.in_domain(pilot->theta_hat)
                                  ? pilot->theta_hat
                                  : model.start_point(
                                        normal_scores_correlation(sample).mat());
          out.estimates[e] = ple_estimate(model, sample, init).theta_hat;
          break;
        }
      }
      if (!out.estimates[e].allFinite()) {
        out.estimates[e] = Vector();
        out.errors[e] = "non-finite estimate";
      }
    } catch (const Error& err) {
      out.estimates[e] = Vector();
      out.errors[e] = err.what();
    }
  }
  return out;
}

unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

}  // namespace

void validate_config(const McConfig& cfg) {
  if (cfg.theta_grid.empty())
    throw ConfigError("theta_true: at least one parameter value is required");
  if (cfg.n < 2) throw ConfigError("n: sample size must be at least 2");
  if (cfg.replications < 1)
    throw ConfigError("replications: must be at least 1");
  if (cfg.estimators.empty())
    throw ConfigError("estimators: at least one estimator is required");
  if (!(cfg.max_failure_fraction >= 0.0 && cfg.max_failure_fraction <= 1.0))
    throw ConfigError("max_failure_fraction: must lie in [0, 1]");
  const ModelPtr model = build_model(cfg.model);
  if (!cfg.margins.empty() && cfg.margins.size() != 1 &&
      static_cast<Index>(cfg.margins.size()) != model->p())
    throw ConfigError("margins: give one margin or one per column");
  for (MarginKind k : cfg.margins)
    if (k == MarginKind::user)
      throw ConfigError("margins: user transforms cannot be configured");
  for (std::size_t g = 0; g < cfg.theta_grid.size(); ++g) {
    const Vector& t = cfg.theta_grid[g];
    if (t.size() != model->k() || !model->in_domain(t)) {
      std::ostringstream msg;
      msg << "theta_true[" << g << "]: not in the domain of the "
          << model->name() << " model (k = " << model->k() << ")";
      throw ConfigError(msg.str());
    }
  }
}

McReport run_experiment(const McConfig& cfg, std::size_t grid_index) {
  validate_config(cfg);
  if (grid_index >= cfg.theta_grid.size())
    throw ConfigError("theta_true: grid index out of range");
  const ModelPtr model = build_model(cfg.model);
  const Vector& theta = cfg.theta_grid[grid_index];
  const SymMatrix r_true = model->r_of_theta(theta);
  const MarginSpec margins = margin_spec(cfg.margins);
  const auto reps = static_cast<std::size_t>(cfg.replications);

  std::vector<RepOutcome> outcomes(reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < reps; r = next++)
      outcomes[r] = run_replication(*model, cfg, r_true, margins, r);
  };
  const unsigned nw =
      std::min<unsigned>(resolve_workers(cfg.workers), static_cast<unsigned>(reps));
  if (nw <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < nw; ++w) pool.emplace_back(worker);
  }

  McReport rep;
  rep.model = cfg.model;
  rep.model_name = model->name();
  rep.theta_true = theta;
  rep.n = cfg.n;
  rep.replications = cfg.replications;
  rep.seed = cfg.seed;
  for (MarginKind k : cfg.margins) rep.margins.push_back(margin_name(k));
  const Index k = model->k();
  rep.eff_bound = Vector::Constant(k, kNaN);
  rep.ple_bound = Vector::Constant(k, kNaN);
  try {
    const EfficiencyBundle b = efficiency_bundle(eval_geometry(*model, theta));
    rep.eff_bound = b.eff_info_inv.diagonal();
    rep.ple_bound = b.ple_cov.diagonal();
  } catch (const SingularityError&) {
  }

  std::ostringstream failures;
  for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
    EstimatorSummary s;
    s.method = cfg.estimators[e];
    Matrix errs = Matrix::Constant(cfg.replications, k, kNaN);
    Vector sum = Vector::Zero(k);
    for (std::size_t r = 0; r < reps; ++r) {
      const Vector& est = outcomes[r].estimates[e];
      if (est.size() == 0) {
        ++s.failures;
        if (s.failure_samples.size() < 5)
          s.failure_samples.push_back("replication " + std::to_string(r) +
                                      ": " + outcomes[r].errors[e]);
        continue;
      }
      errs.row(static_cast<Index>(r)) = (est - theta).transpose();
      sum += est - theta;
      ++s.successes;
    }
    s.bias = Vector::Constant(k, kNaN);
    s.variance = Vector::Constant(k, kNaN);
    if (s.successes > 0) {
      s.bias = sum / static_cast<double>(s.successes);
      Vector ss = Vector::Zero(k);
      for (std::size_t r = 0; r < reps; ++r) {
        if (outcomes[r].estimates[e].size() == 0) continue;
        const Vector d = errs.row(static_cast<Index>(r)).transpose() - s.bias;
        ss += d.cwiseProduct(d);
      }
      s.variance = s.successes > 1 ? Vector(ss / static_cast<double>(s.successes - 1))
                                   : Vector(Vector::Zero(k));
    }
    s.n_variance = s.variance * static_cast<double>(cfg.n);
    if (static_cast<double>(s.failures) >
        cfg.max_failure_fraction * static_cast<double>(cfg.replications)) {
      failures << method_name(s.method) << ": " << s.failures << " of "
               << cfg.replications << " replications failed";
      for (const auto& f : s.failure_samples) failures << "\n  " << f;
      failures << "\n";
    }
    rep.estimators.push_back(std::move(s));
    rep.errors.push_back(std::move(errs));
  }
  if (!failures.str().empty())
    throw ExperimentError("run_experiment: failure threshold exceeded\n" +
                          failures.str());
  return rep;
}

std::vector<McReport> run_grid(const McConfig& cfg) {
  std::vector<McReport> out;
  for (std::size_t g = 0; g < cfg.theta_grid.size(); ++g)
    out.push_back(run_experiment(cfg, g));
  return out;
}

std::vector<SummaryRow> summarize(std::span<const McReport> reports) {
  std::vector<SummaryRow> rows;
  if (reports.empty()) return rows;
  const McReport& first = reports.front();
  for (const McReport& r : reports) {
    bool same = r.model_name == first.model_name &&
                r.theta_true.size() == first.theta_true.size() &&
                r.estimators.size() == first.estimators.size();
    for (std::size_t e = 0; same && e < r.estimators.size(); ++e)
      same = r.estimators[e].method == first.estimators[e].method;
    if (!same)
      throw ShapeError("summarize: reports differ in model or estimator set");
  }
  for (const McReport& r : reports) {
    for (const EstimatorSummary& s : r.estimators) {
      for (Index m = 0; m < r.theta_true.size(); ++m) {
        SummaryRow row;
        row.theta = r.theta_true;
        row.n = r.n;
        row.estimator = method_name(s.method);
        row.component = m;
        row.bias = s.bias(m);
        row.n_variance = s.n_variance(m);
        row.eff_bound = r.eff_bound(m);
        row.ple_bound = r.ple_bound(m);
        row.successes = s.successes;
        row.failures = s.failures;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

namespace {

std::string theta_field(const Vector& t) {
  std::ostringstream os;
  os.precision(17);
  for (Index i = 0; i < t.size(); ++i) os << (i ? " " : "") << t(i);
  return os.str();
}

}  // namespace

std::string summary_csv(std::span<const SummaryRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "theta,n,estimator,component,bias,n_variance,eff_bound,ple_bound,"
        "successes,failures\n";
  for (const SummaryRow& r : rows)
    os << '"' << theta_field(r.theta) << "\"," << r.n << ',' << r.estimator
       << ',' << r.component << ',' << r.bias << ',' << r.n_variance << ','
       << r.eff_bound << ',' << r.ple_bound << ',' << r.successes << ','
       << r.failures << '\n';
  return os.str();
}

std::string errors_csv(std::span<const McReport> reports) {
  std::ostringstream os;
  os.precision(17);
  os << "theta,replication,estimator,component,error\n";
  for (const McReport& r : reports)
    for (std::size_t e = 0; e < r.estimators.size(); ++e) {
      const std::string name = method_name(r.estimators[e].method);
      for (Index i = 0; i < r.errors[e].rows(); ++i)
        for (Index m = 0; m < r.errors[e].cols(); ++m) {
          os << '"' << theta_field(r.theta_true) << "\"," << i << ',' << name
             << ',' << m << ',';
          if (std::isnan(r.errors[e](i, m)))
            os << "NA";
          else
            os << r.errors[e](i, m);
          os << '\n';
        }
    }
  return os.str();
}

}  // namespace copula_rank
