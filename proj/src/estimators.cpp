#include "copula_rank/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "copula_rank/errors.hpp"
#include "copula_rank/geometry.hpp"

namespace copula_rank {

RankedSample rank_transform(const Matrix& data) {
  const Index n = data.rows(), p = data.cols();
  if (n < 2) {
    std::ostringstream msg;
    msg << "rank_transform: need at least 2 observations, got " << n;
    throw DomainError(msg.str());
  }
  if (p < 1) throw ShapeError("rank_transform: data has no columns");
  if (!data.allFinite())
    throw DomainError("rank_transform: data contains non-finite values");

  RankedSample out;
  out.n = n;
  out.p = p;
  out.ranks.resize(n, p);
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index j = 0; j < p; ++j) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return data(a, j) < data(b, j);
    });
    if (data(order.front(), j) == data(order.back(), j)) {
      std::ostringstream msg;
      msg << "rank_transform: column " << j << " is constant";
      throw DomainError(msg.str());
    }
    bool tied = false;
    for (Index start = 0; start < n;) {
      Index end = start + 1;
      while (end < n && data(order[end], j) == data(order[start], j)) ++end;
      // positions start..end-1 hold ranks start+1..end
      const double avg = 0.5 * static_cast<double>(start + 1 + end);
      for (Index t = start; t < end; ++t) out.ranks(order[t], j) = avg;
      tied = tied || end - start > 1;
      start = end;
    }
    if (tied) {
      out.ties = true;
      out.tied_columns.push_back(j);
    }
  }
  out.pseudo_obs = out.ranks / static_cast<double>(n + 1);
  out.zhat = out.pseudo_obs.unaryExpr([](double u) { return normal_quantile(u); });
  return out;
}

SymMatrix normal_scores_matrix(const RankedSample& sample) {
  const Matrix m = sample.zhat.transpose() * sample.zhat;
  return SymMatrix::symmetrized(m / static_cast<double>(sample.n));
}

SymMatrix normal_scores_correlation(const RankedSample& sample) {
  const Matrix r = normal_scores_matrix(sample).mat();
  const Vector inv_sd = r.diagonal().cwiseSqrt().cwiseInverse();
  Matrix c = inv_sd.asDiagonal() * r * inv_sd.asDiagonal();
  c.diagonal().setOnes();
  return SymMatrix::symmetrized(c);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::ple:
      return "ple";
    case Method::one_step:
      return "one_step";
    case Method::pilot_moment:
      return "pilot_moment";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::ple, Method::one_step, Method::pilot_moment})
    if (method_name(m) == s) return m;
  throw ConfigError("method: unknown estimator '" + s + "'");
}

// ---------------------------------------------------------------------------

namespace {

void require_matching_dim(const CorrelationModel& model,
                          const RankedSample& sample) {
  if (sample.p != model.p()) {
    std::ostringstream msg;
    msg << "data has " << sample.p << " columns but the " << model.name()
        << " model has p = " << model.p();
    throw ShapeError(msg.str());
  }
}

Vector std_errors_from(const Matrix& cov, Index n) {
  return (cov.diagonal() / static_cast<double>(n)).cwiseMax(0.0).cwiseSqrt();
}

std::string describe(const Vector& v) {
  std::ostringstream os;
  os.precision(10);
  os << "(";
  for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ")";
  return os.str();
}

struct Objective {
  const CorrelationModel& model;
  const SymMatrix& r_hat;

  double f(const Vector& t) const { return pseudo_objective(model, t, r_hat); }
  Vector psi(const Vector& t) const { return pseudo_score(model, t, r_hat); }

  Matrix jacobian(const Vector& t) const {
    const Index k = t.size();
    Matrix j(k, k);
    for (Index m = 0; m < k; ++m) {
      const double h = std::max(1e-6, 1e-8 * std::abs(t(m)));
      Vector up = t, down = t;
      up(m) += h;
      down(m) -= h;
      const bool up_ok = model.in_domain(up), down_ok = model.in_domain(down);
      if (up_ok && down_ok)
        j.col(m) = (psi(up) - psi(down)) / (2.0 * h);
      else if (up_ok)
        j.col(m) = (psi(up) - psi(t)) / h;
      else
        j.col(m) = (psi(t) - psi(down)) / h;
    }
    return j;
  }
};

// Backtracking along `dir` from t: halve until inside the domain, then until
// the Armijo condition holds on f. Returns the accepted step length or 0.
double line_search(const Objective& obj, const Vector& t, double f0,
                   const Vector& grad, const Vector& dir) {
  const double slope = grad.dot(dir);
  double alpha = 1.0;
  for (int i = 0; i < 60; ++i, alpha *= 0.5) {
    const Vector trial = t + alpha * dir;
    if (!obj.model.in_domain(trial)) continue;
    const double f1 = obj.f(trial);
    if (std::isfinite(f1) &&
        f1 <= f0 + 1e-4 * alpha * slope + 1e-13 * (1.0 + std::abs(f0)))
      return alpha;
  }
  return 0.0;
}

}  // namespace

Vector pseudo_score(const CorrelationModel& model, const Vector& theta,
                    const SymMatrix& r_hat) {
  const Geometry g = eval_geometry(model, theta);
  require_same_dim(g.r, r_hat, "pseudo_score");
  const Matrix diff = g.r.mat() - r_hat.mat();
  Vector out(g.k());
  for (Index m = 0; m < g.k(); ++m)
    out(m) = g.s_dots[m].mat().cwiseProduct(diff).sum();
  return out;
}

double pseudo_objective(const CorrelationModel& model, const Vector& theta,
                        const SymMatrix& r_hat) {
  const SymMatrix r = model.r_of_theta(theta);
  require_same_dim(r, r_hat, "pseudo_objective");
  Eigen::LLT<Matrix> llt(r.mat());
  if (llt.info() != Eigen::Success)
    return std::numeric_limits<double>::infinity();
  const double logdet =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return logdet + llt.solve(r_hat.mat()).trace();
}

EstimateResult ple_estimate(const CorrelationModel& model,
                            const RankedSample& sample, const Vector& init,
                            const PleOptions& opts) {
  require_matching_dim(model, sample);
  model.require_theta_size(init);
  const SymMatrix r_hat = normal_scores_matrix(sample);

  EstimateResult res;
  res.method = Method::ple;
  res.tie_warning = sample.ties;

  auto finish = [&](const Vector& theta) {
    res.theta_hat = theta;
    const Geometry g = eval_geometry(model, theta);
    res.std_errors = std_errors_from(ple_influence(g).cov, sample.n);
    return res;
  };

  if (model.unrestricted()) {
    Vector theta(model.k());
    Index m = 0;
    for (auto [i, j] : lower_pairs(model.p())) theta(m++) = r_hat(i, j);
    if (!model.in_domain(theta))
      throw DomainError("ple_estimate: normal-scores matrix is singular");
    res.closed_form = true;
    res.converged = true;
    res.score_norm = 0.0;
    return finish(theta);
  }

  if (!model.in_domain(init))
    throw DomainError("ple_estimate: starting value " + describe(init) +
                      " is outside the model domain");

  const Objective obj{model, r_hat};
  const double tol = opts.tolerance_per_parameter * static_cast<double>(model.k());
  std::ostringstream trace;
  trace.precision(6);
  trace << std::scientific;

  Vector theta = init;
  Vector psi = obj.psi(theta);
  double f = obj.f(theta);
  bool use_bfgs = false;
  Matrix h_inv = Matrix::Identity(model.k(), model.k());

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.score_norm = psi.cwiseAbs().maxCoeff();
    trace << "iter " << it << ": sup|psi| = " << res.score_norm << ", f = " << f
          << (use_bfgs ? " [bfgs]" : "") << "\n";
    if (res.score_norm <= tol) {
      res.converged = true;
      res.iterations = it;
      return finish(theta);
    }
    const Vector grad = -psi;

    if (!use_bfgs) {
      // Hessian of f is -d psi / d theta.
      const Matrix jac = obj.jacobian(theta);
      Matrix hess = -0.5 * (jac + jac.transpose());
      Vector dir;
      double mu = 0.0;
      for (int tries = 0; tries < 30; ++tries) {
        Eigen::LLT<Matrix> llt(hess + mu * Matrix::Identity(hess.rows(), hess.cols()));
        if (llt.info() == Eigen::Success) {
          dir = -llt.solve(grad);
          break;
        }
        mu = mu == 0.0 ? 1e-8 * (1.0 + hess.cwiseAbs().maxCoeff()) : 10.0 * mu;
      }
      const double alpha =
          dir.size() ? line_search(obj, theta, f, grad, dir) : 0.0;
      if (alpha > 0.0) {
        theta += alpha * dir;
        psi = obj.psi(theta);
        f = obj.f(theta);
        continue;
      }
      trace << "newton stalled, switching to bfgs\n";
      use_bfgs = true;
      h_inv = Matrix::Identity(model.k(), model.k());
    }

    const Vector dir = -h_inv * grad;
    const double alpha = line_search(obj, theta, f, grad, dir);
    if (alpha == 0.0) {
      if (h_inv.isIdentity()) break;
      h_inv.setIdentity();
      continue;
    }
    const Vector step = alpha * dir;
    theta += step;
    psi = obj.psi(theta);
    f = obj.f(theta);
    const Vector y = -psi - grad;
    const double sy = step.dot(y);
    if (sy > 1e-300) {
      const Matrix ident = Matrix::Identity(model.k(), model.k());
      const Matrix left = ident - step * y.transpose() / sy;
      h_inv = left * h_inv * left.transpose() + step * step.transpose() / sy;
    }
  }
  res.score_norm = psi.cwiseAbs().maxCoeff();
  if (res.score_norm <= tol) {
    res.converged = true;
    res.iterations = opts.max_iterations;
    return finish(theta);
  }
  std::ostringstream msg;
  msg << "ple_estimate: no convergence (sup|psi| = " << res.score_norm
      << ", tolerance " << tol << ", last theta " << describe(theta) << ")";
  throw ConvergenceError(msg.str(), trace.str());
}

EstimateResult pilot_moment(const CorrelationModel& model,
                            const RankedSample& sample) {
  require_matching_dim(model, sample);
  if (model.unrestricted()) {
    EstimateResult res = ple_estimate(model, sample, Vector::Zero(model.k()));
    res.method = Method::pilot_moment;
    return res;
  }
  const SymMatrix corr = normal_scores_correlation(sample);
  const auto weights = model.moment_weights();
  if (weights) {
    const auto pairs = lower_pairs(model.p());
    Vector lower(static_cast<Index>(pairs.size()));
    for (std::size_t e = 0; e < pairs.size(); ++e)
      lower(static_cast<Index>(e)) = corr(pairs[e].first, pairs[e].second);
    const Vector theta = *weights * lower;
    if (model.in_domain(theta)) {
      EstimateResult res;
      res.method = Method::pilot_moment;
      res.theta_hat = theta;
      res.converged = true;
      res.closed_form = true;
      res.tie_warning = sample.ties;
      // Each correlation r_ij has the regular influence matrix with 1 at
      // (i,j), (j,i) and -r_ij at (i,i), (j,j).
      const Geometry g = eval_geometry(model, theta);
      std::vector<SymMatrix> infl;
      for (Index m = 0; m < model.k(); ++m) {
        Matrix a = Matrix::Zero(model.p(), model.p());
        for (std::size_t e = 0; e < pairs.size(); ++e) {
          const double w = (*weights)(m, static_cast<Index>(e));
          if (w == 0.0) continue;
          const auto [i, j] = pairs[e];
          a(i, j) += w;
          a(j, i) += w;
          a(i, i) -= w * g.r(i, j);
          a(j, j) -= w * g.r(i, j);
        }
        infl.push_back(SymMatrix::symmetrized(a));
      }
      res.std_errors = std_errors_from(gram(infl, g.ctx), sample.n);
      return res;
    }
  }
  EstimateResult res = ple_estimate(model, sample, model.start_point(corr.mat()));
  res.notes.push_back(weights ? "moment fit left the domain; used ple"
                              : "no moment weights for this family; used ple");
  return res;
}

namespace {

// Largest t in [0, 1] (bisection) with from + t (to - from) in the domain,
// pulled back by the domain margin.
Vector pull_into_domain(const CorrelationModel& model, const Vector& from,
                        const Vector& to) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (model.in_domain(from + mid * (to - from)))
      lo = mid;
    else
      hi = mid;
  }
  const double len = (to - from).norm();
  const double t = len > 0.0 ? std::max(0.0, lo - kDomainMargin / len) : 0.0;
  Vector out = from + t * (to - from);
  if (!model.in_domain(out)) out = from;
  return out;
}

}  // namespace

EstimateResult one_step(const CorrelationModel& model,
                        const RankedSample& sample, const Vector& pilot,
                        const OneStepOptions& opts) {
  require_matching_dim(model, sample);
  model.require_theta_size(pilot);
  if (!model.in_domain(pilot))
    throw DomainError("one_step: pilot " + describe(pilot) +
                      " is outside the model domain");
  const SymMatrix r_hat = normal_scores_matrix(sample);

  EstimateResult res;
  res.method = Method::one_step;
  res.tie_warning = sample.ties;
  res.converged = true;

  Vector theta = pilot;
  const int steps = opts.iterate_twice ? 2 : 1;
  for (int s = 0; s < steps; ++s) {
    const Geometry g = eval_geometry(model, theta);
    const auto eff = efficient_score_matrices(g);
    const InfoPair info = efficient_info(g, eff);
    Vector score(g.k());
    for (Index m = 0; m < g.k(); ++m)
      score(m) = 0.5 * (eff[m].mat().cwiseProduct(r_hat.mat()).sum() -
                        eff[m].mat().cwiseProduct(g.r.mat()).sum());
    const Vector next = theta + info.inverse * score;
    res.iterations = s + 1;
    if (model.in_domain(next)) {
      theta = next;
    } else {
      theta = pull_into_domain(model, theta, next);
      res.clamped = true;
      res.notes.push_back("update left the domain and was pulled back");
      break;
    }
  }
  res.theta_hat = theta;
  const Geometry g = eval_geometry(model, theta);
  res.std_errors = std_errors_from(efficient_info(g).inverse, sample.n);
  return res;
}

EstimateResult one_step(const CorrelationModel& model,
                        const RankedSample& sample) {
  const EstimateResult pilot = pilot_moment(model, sample);
  return one_step(model, sample, pilot.theta_hat);
}

}  // namespace copula_rank
