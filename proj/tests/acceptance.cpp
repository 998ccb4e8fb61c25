// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "copula_rank/errors.hpp"
#include "copula_rank/estimators.hpp"
#include "copula_rank/geometry.hpp"
#include "copula_rank/json_io.hpp"
#include "copula_rank/mc.hpp"
#include "copula_rank/sampler.hpp"
#include "helpers.hpp"

using namespace copula_rank;
using testing::vec;

namespace {

constexpr std::uint64_t kSeed = 20131;
constexpr double kClosedFormRelTol = 1e-9;
constexpr double kAreTol = 5e-4;
constexpr double kEfficientResidual = 1e-8;
constexpr double kInefficientResidual = 1e-3;
constexpr double kMcRelTol = 0.10;
constexpr double kVarianceRatio = 3.0;
constexpr double kBiasTol = 0.01;
constexpr double kPropertyTol = 1e-9;
constexpr double kFdTol = 1e-6;

const Vector kToeplitzStar = vec({0.4945460, -0.4592764, -0.8462492});

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& title, double budget_s,
            const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.require(secs < budget_s, "runtime budget");
  if (!o.pass) ++failures;
  std::printf("%s %d %s (%.2f s)%s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), secs,
              o.detail.str().c_str());
  std::fflush(stdout);
}

std::vector<double> grid(double lo, double hi, int points) {
  std::vector<double> g;
  for (int i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * i / (points - 1));
  return g;
}

McConfig mc_config(Family fam, Index p, Vector theta, Index n, Index reps,
                   std::vector<Method> est) {
  McConfig cfg;
  cfg.model.family = fam;
  cfg.model.p = p;
  cfg.theta_grid = {std::move(theta)};
  cfg.n = n;
  cfg.replications = reps;
  cfg.estimators = std::move(est);
  cfg.seed = kSeed;
  cfg.workers = 0;
  return cfg;
}

const EstimatorSummary& summary_of(const McReport& r, Method m) {
  for (const auto& e : r.estimators)
    if (e.method == m) return e;
  throw std::runtime_error("estimator missing from report");
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

// Either the estimate's bytes or the error text.
std::string outcome_bytes(const std::function<Vector()>& f) {
  try {
    const Vector v = f();
    return std::string(reinterpret_cast<const char*>(v.data()),
                       sizeof(double) * static_cast<std::size_t>(v.size()));
  } catch (const Error& e) {
    return std::string("error: ") + e.what();
  }
}

void criterion1(Outcome& o) {
  double worst = 0.0;
  for (double t : grid(-0.49, 0.99, 20)) {
    const double v = efficient_info(eval_geometry(*make_exchangeable(3), vec({t}))).inverse(0, 0);
    worst = std::max(worst, rel_err(v, (t - 1) * (t - 1) * (2 * t + 1) * (2 * t + 1) / 3));
  }
  for (double t : grid(-0.33, 0.99, 20)) {
    const double v = efficient_info(eval_geometry(*make_exchangeable(4), vec({t}))).inverse(0, 0);
    worst = std::max(worst, rel_err(v, (t - 1) * (t - 1) * (3 * t + 1) * (3 * t + 1) / 6));
  }
  for (double t : grid(-0.99, 0.99, 20)) {
    const double v = efficient_info(eval_geometry(*make_circular(), vec({t}))).inverse(0, 0);
    worst = std::max(worst, rel_err(v, 0.25 * (1 - t * t) * (1 - t * t)));
  }
  const auto tp = make_toeplitz(3);
  int toeplitz_points = 0;
  for (double a : grid(-0.65, 0.65, 9))
    for (double b : grid(-0.8, 0.8, 9)) {
      const Vector t = vec({a, b});
      if (!tp->in_domain(t)) continue;
      ++toeplitz_points;
      const Matrix inv = efficient_info(eval_geometry(*tp, t)).inverse;
      const double e11 =
          0.25 * (a * a * b * b - 4 * a * a * b + 2 * b + 4 * std::pow(a, 4) - 5 * a * a + 2);
      const double e22 = (1 - b * b) * (1 - b * b);
      const double e12 = 0.5 * a * (b - 1) * (b * b - b + 2 * a * a - 2);
      worst = std::max({worst, rel_err(inv(0, 0), e11), rel_err(inv(1, 1), e22)});
      // the off-diagonal entry vanishes at a = 0
      worst = std::max(worst, std::abs(inv(0, 1) - e12) / std::max(std::abs(e12), 1e-2));
    }
  o.detail << " max rel err " << fmt(worst) << " over 60 + " << toeplitz_points << " points";
  o.require(worst <= kClosedFormRelTol, "closed forms");
}

void criterion2(Outcome& o) {
  double worst = 0.0;
  for (double t : grid(-0.99, 0.99, 20)) {
    const double got = ple_influence(eval_geometry(*make_circular(), vec({t}))).cov(0, 0);
    const double want = 0.25 * (1 - t * t) * (1 - t * t) *
                        (1 + 2 * std::pow(t, 6) / std::pow(1 + 2 * t * t, 2));
    worst = std::max(worst, rel_err(got, want));
  }
  o.detail << " max rel err " << fmt(worst);
  o.require(worst <= kClosedFormRelTol, "ple_cov closed form");
}

void criterion3(Outcome& o) {
  const Vector are = are_vector(efficiency_bundle(eval_geometry(*make_toeplitz(4), kToeplitzStar)));
  const Vector want = vec({0.183, 0.198, 0.969});
  o.detail << " ARE = (" << fmt(are(0)) << ", " << fmt(are(1)) << ", " << fmt(are(2)) << ")";
  o.require((are - want).cwiseAbs().maxCoeff() <= kAreTol, "ARE");
}

void criterion4(Outcome& o) {
  std::mt19937_64 rng(kSeed);
  std::vector<std::pair<ModelPtr, Vector>> efficient;
  for (Index p = 3; p <= 6; ++p) {
    const auto u = make_unrestricted(p);
    efficient.emplace_back(u, testing::random_theta(*u, rng, 0.2));
    const auto e = make_exchangeable(p);
    efficient.emplace_back(e, testing::random_theta(*e, rng));
  }
  const auto t3 = make_toeplitz(3);
  efficient.emplace_back(t3, testing::random_theta(*t3, rng));
  const auto f41 = make_factor(4, 1);
  efficient.emplace_back(f41, testing::identifiable_theta(*f41, rng));
  const auto f52 = make_factor(5, 2);
  efficient.emplace_back(f52, testing::identifiable_theta(*f52, rng));

  double worst_eff = 0.0;
  for (const auto& [m, t] : efficient) {
    const DiagnosticReport r = efficiency_criterion(eval_geometry(*m, t));
    for (double v : r.per_m_residuals) worst_eff = std::max(worst_eff, v);
    o.require(r.verdict, testing::label(*m) + " efficient");
  }
  const DiagnosticReport t4 = efficiency_criterion(eval_geometry(*make_toeplitz(4), kToeplitzStar));
  const DiagnosticReport c = efficiency_criterion(eval_geometry(*make_circular(), vec({0.5})));
  double t4_max = 0.0, c_max = 0.0;
  for (double v : t4.per_m_residuals) t4_max = std::max(t4_max, v);
  for (double v : c.per_m_residuals) c_max = std::max(c_max, v);
  o.detail << " max residual (efficient) " << fmt(worst_eff) << ", toeplitz(4) " << fmt(t4_max)
           << ", circular " << fmt(c_max);
  o.require(worst_eff <= kEfficientResidual, "efficient residuals");
  o.require(!t4.verdict && t4_max >= kInefficientResidual, "toeplitz(4) inefficient");
  o.require(!c.verdict && c_max >= kInefficientResidual, "circular inefficient");
}

void criterion5(Outcome& o) {
  for (const auto& m : {make_exchangeable(3), make_exchangeable(5), make_circular()}) {
    o.require(adaptivity_check(eval_geometry(*m, Vector::Zero(1))).verdict,
              testing::label(*m) + " adaptive at 0");
    for (double t : {-0.2, 0.3, 0.6})
      o.require(!adaptivity_check(eval_geometry(*m, vec({t}))).verdict,
                testing::label(*m) + " not adaptive away from 0");
  }
  o.require(adaptivity_check(eval_geometry(*make_adaptivity_demo(), vec({0.0}))).verdict,
            "demo adaptive at 0");
  const Geometry g = eval_geometry(*make_exchangeable(3), vec({0.5}));
  const DiagnosticReport r = adaptivity_check(g);
  const double loss = (fisher_info(g) - efficient_info(g).info).norm();
  o.detail << " ||I - I*|| at exchangeable 0.5 = " << fmt(loss);
  o.require(!r.verdict, "exchangeable 0.5 not adaptive");
  o.require(loss > 0.1, "information loss");
}

void criterion6(Outcome& o) {
  const McReport ex = run_experiment(
      mc_config(Family::exchangeable, 3, vec({0.5}), 250, 2000, {Method::one_step}));
  const double ex_nv = summary_of(ex, Method::one_step).n_variance(0);
  const McReport ci = run_experiment(mc_config(Family::circular, 4, vec({0.5}), 250, 2000,
                                               {Method::ple, Method::one_step}));
  const double ci_ose = summary_of(ci, Method::one_step).n_variance(0);
  const double ci_ple = summary_of(ci, Method::ple).n_variance(0);
  o.detail << " exchangeable OSE n*var " << fmt(ex_nv) << " (1/3); circular OSE " << fmt(ci_ose)
           << " (0.140625), PLE " << fmt(ci_ple) << " (0.142578)";
  o.require(rel_err(ex_nv, 1.0 / 3.0) <= kMcRelTol, "exchangeable OSE");
  o.require(rel_err(ci_ose, 0.140625) <= kMcRelTol, "circular OSE");
  o.require(rel_err(ci_ple, 0.142578125) <= kMcRelTol, "circular PLE");
}

void criterion7(Outcome& o) {
  const McReport r = run_experiment(mc_config(Family::toeplitz, 4, kToeplitzStar, 250, 2000,
                                              {Method::ple, Method::one_step}));
  const Vector ple = summary_of(r, Method::ple).variance;
  const Vector ose = summary_of(r, Method::one_step).variance;
  const Vector ratio = ple.cwiseQuotient(ose);
  o.detail << " Var(PLE)/Var(OSE) = (" << fmt(ratio(0)) << ", " << fmt(ratio(1)) << ", "
           << fmt(ratio(2)) << ")";
  o.require(ratio(0) >= kVarianceRatio && ratio(1) >= kVarianceRatio, "variance ratios");
}

void criterion8(Outcome& o) {
  const McReport r = run_experiment(mc_config(Family::exchangeable, 100, vec({0.25}), 50, 200,
                                              {Method::ple, Method::one_step}));
  const double ose = summary_of(r, Method::one_step).bias(0);
  const double ple = summary_of(r, Method::ple).bias(0);
  o.detail << " bias OSE " << fmt(ose) << ", PLE " << fmt(ple);
  o.require(std::abs(ose) <= kBiasTol, "|bias(OSE)| <= 0.01");
  o.require(std::abs(ple) >= 3.0 * std::abs(ose), "|bias(PLE)| >= 3 |bias(OSE)|");
}

void criterion9(Outcome& o) {
  std::mt19937_64 rng(kSeed);
  // orthogonality and PSD information loss
  double worst_orth = 0.0, worst_psd = 0.0;
  for (const auto& m : testing::builtin_models()) {
    for (int rep = 0; rep < 20; ++rep) {
      const Geometry g = eval_geometry(*m, testing::random_theta(*m, rng));
      const auto eff = efficient_score_matrices(g);
      for (const auto& a : eff)
        worst_orth = std::max(worst_orth,
                              (g.r.mat() * a.mat()).diagonal().cwiseAbs().maxCoeff());
      worst_psd = std::max(worst_psd, -min_eigenvalue(SymMatrix::symmetrized(fisher_info(g) - gram(eff, g.ctx))));
    }
  }
  o.require(worst_orth <= kPropertyTol, "orthogonality");
  o.require(worst_psd <= kPropertyTol, "information loss PSD");

  // derivatives of R against central differences
  double worst_fd = 0.0;
  for (const auto& m : testing::builtin_models()) {
    for (int rep = 0; rep < 5; ++rep) {
      const Vector t = testing::random_theta(*m, rng, 0.5);
      for (Index k = 0; k < m->k(); ++k) {
        const double h = 1e-5;
        Vector a = t, b = t;
        a(k) += h;
        b(k) -= h;
        const Matrix fd = (m->r_of_theta(a).mat() - m->r_of_theta(b).mat()) / (2 * h);
        worst_fd = std::max(worst_fd, (fd - m->r_dot(t, k).mat()).cwiseAbs().maxCoeff());
      }
    }
  }
  o.require(worst_fd <= kFdTol, "finite-difference derivatives");

  // Cov(q_A, q_B) against <A, B>
  const Geometry g = eval_geometry(*make_toeplitz(3), vec({0.5, 0.3}));
  const SymMatrix a = testing::random_sym(3, rng), b = testing::random_sym(3, rng);
  const Index n = 1000000;
  const Matrix u = sample_copula(g.r, n, kSeed);
  Vector qa(n), qb(n);
  for (Index i = 0; i < n; ++i) {
    const Vector ui = u.row(i).transpose();
    qa(i) = quad_influence_value(a, g, ui);
    qb(i) = quad_influence_value(b, g, ui);
  }
  const Vector prod = (qa.array() - qa.mean()) * (qb.array() - qb.mean());
  const double cov = prod.sum() / (n - 1);
  const double se = std::sqrt((prod.array() - prod.mean()).square().sum() / (n - 1) / n);
  const double target = theta_inner(a, b, g.ctx);
  const double z = std::abs(cov - target) / se;
  o.require(z <= 3.0, "MC covariance identity");

  // rank invariance of every estimator
  int invariance_checks = 0;
  for (const auto& m : testing::builtin_models()) {
    const Matrix x = sample_copula(m->r_of_theta(testing::identifiable_theta(*m, rng)), 300,
                                   kSeed);
    auto run_all = [&](const Matrix& data) {
      const RankedSample s = rank_transform(data);
      std::string all;
      Vector pilot;
      all += outcome_bytes([&] { return pilot = pilot_moment(*m, s).theta_hat; });
      if (pilot.size() == 0) pilot = m->start_point(normal_scores_correlation(s).mat());
      all += outcome_bytes([&] { return ple_estimate(*m, s, pilot).theta_hat; });
      all += outcome_bytes([&] { return one_step(*m, s, pilot).theta_hat; });
      return all;
    };
    const std::string base = run_all(x);
    for (MarginKind k : {MarginKind::gaussian, MarginKind::exponential, MarginKind::cauchy}) {
      o.require(run_all(apply_margins(x, MarginSpec::all(k))) == base,
                "rank invariance " + testing::label(*m));
      ++invariance_checks;
    }
  }

  // byte-determinism across worker counts
  McConfig cfg = mc_config(Family::toeplitz, 3, vec({0.5, 0.3}), 100, 60,
                           {Method::ple, Method::one_step, Method::pilot_moment});
  std::string ref;
  for (unsigned w : {1u, 2u, 4u, 7u}) {
    cfg.workers = w;
    const McReport r = run_experiment(cfg);
    const std::string bytes =
        report_to_json(r).dump() + errors_csv(std::span<const McReport>(&r, 1));
    if (ref.empty()) ref = bytes;
    o.require(bytes == ref, "worker determinism");
  }

  o.detail << " orth " << fmt(worst_orth) << ", psd " << fmt(worst_psd) << ", fd "
           << fmt(worst_fd) << ", cov z " << fmt(z) << ", " << invariance_checks
           << " invariance checks";
}

}  // namespace

int main() {
  report(1, "closed-form efficiency bounds", 1.0, criterion1);
  report(2, "PLE covariance closed form (circular)", 1.0, criterion2);
  report(3, "Toeplitz p=4 ARE", 1.0, criterion3);
  report(4, "PLE efficiency verdicts", 5.0, criterion4);
  report(5, "adaptivity", 1.0, criterion5);
  report(6, "Monte Carlo variance vs bounds", 120.0, criterion6);
  report(7, "Toeplitz p=4 finite-sample inefficiency", 180.0, criterion7);
  report(8, "high-dimensional bias", 600.0, criterion8);
  report(9, "property suites", 600.0, criterion9);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
