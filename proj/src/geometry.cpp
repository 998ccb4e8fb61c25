#include "copula_rank/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "copula_rank/errors.hpp"

namespace copula_rank {

namespace {

void require_length(const Vector& v, Index p, const char* what) {
  if (v.size() != p) {
    std::ostringstream msg;
    msg << what << ": vector has length " << v.size() << ", expected " << p;
    throw ShapeError(msg.str());
  }
}

// I + R o S; symmetric positive definite by the Schur product theorem.
Eigen::LLT<Matrix> factor_tangent_system(const Geometry& geom) {
  const Index p = geom.p();
  const Matrix c =
      Matrix::Identity(p, p) + geom.r.mat().cwiseProduct(geom.s.mat());
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    const double rc = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    throw SingularityError("I + R o S is numerically singular", rc);
  }
  return llt;
}

Matrix checked_inverse(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  const double rc = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (!(rc > 1e-13)) {
    std::ostringstream msg;
    msg << what << " is singular or ill-conditioned (reciprocal condition "
        << rc << ")";
    throw SingularityError(msg.str(), rc);
  }
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

std::vector<SymMatrix> negated(const std::vector<SymMatrix>& v) {
  std::vector<SymMatrix> out;
  out.reserve(v.size());
  for (const auto& m : v) out.push_back(-m);
  return out;
}

SymMatrix diag_part(const Matrix& m) {
  return SymMatrix::diagonal(m.diagonal());
}

}  // namespace

Vector parametric_score(const Geometry& geom, const Vector& z) {
  require_length(z, geom.p(), "parametric_score");
  Vector out(geom.k());
  for (Index m = 0; m < geom.k(); ++m) {
    const double tr = geom.s.mat().cwiseProduct(geom.r_dots[m].mat()).sum();
    out(m) = -0.5 * tr - 0.5 * z.dot(geom.s_dots[m].mat() * z);
  }
  return out;
}

SymMatrix d_operator(const SymMatrix& s, const Vector& b) {
  require_length(b, s.dim(), "d_operator");
  Matrix out = s.mat() * b.asDiagonal();
  out += b.asDiagonal() * s.mat();
  return SymMatrix::symmetrized(out);
}

std::vector<Vector> score_generators(const Geometry& geom) {
  const auto llt = factor_tangent_system(geom);
  std::vector<Vector> g;
  g.reserve(static_cast<std::size_t>(geom.k()));
  for (const auto& rd : geom.r_dots) {
    const Vector rhs = rd.mat().cwiseProduct(geom.s.mat()).rowwise().sum();
    g.push_back(-llt.solve(rhs));
  }
  return g;
}

double generator_function(const Geometry& geom, Index m, Index j, double u) {
  if (!(u > 0.0 && u < 1.0))
    throw DomainError("generator_function: u must lie in (0, 1)");
  if (m < 0 || m >= geom.k() || j < 0 || j >= geom.p())
    throw ShapeError("generator_function: index out of range");
  const double z = normal_quantile(u);
  return score_generators(geom)[static_cast<std::size_t>(m)](j) * (1.0 - z * z);
}

std::vector<SymMatrix> efficient_score_matrices(const Geometry& geom) {
  const auto g = score_generators(geom);
  std::vector<SymMatrix> out;
  out.reserve(g.size());
  for (std::size_t m = 0; m < g.size(); ++m)
    out.push_back(d_operator(geom.s, g[m]) - geom.s_dots[m]);
  return out;
}

InfoPair efficient_info(const Geometry& geom) {
  const auto eff = efficient_score_matrices(geom);
  return efficient_info(geom, eff);
}

InfoPair efficient_info(const Geometry& geom,
                        std::span<const SymMatrix> eff_matrices) {
  InfoPair out;
  out.info = gram(eff_matrices, geom.ctx);
  out.inverse = checked_inverse(out.info, "efficient information");
  return out;
}

Matrix fisher_info(const Geometry& geom) {
  return gram(negated(geom.s_dots), geom.ctx);
}

TangentProjection project_tangent(const SymMatrix& a, const Geometry& geom) {
  require_same_dim(a, geom.r, "project_tangent");
  const auto llt = factor_tangent_system(geom);
  const Vector rhs = (geom.r.mat() * a.mat()).diagonal();
  TangentProjection out;
  out.b = llt.solve(rhs);
  out.projection = d_operator(geom.s, out.b);
  return out;
}

DiagnosticReport regularity_check(std::span<const SymMatrix> influence,
                                  const Geometry& geom, double rel_tol) {
  DiagnosticReport rep;
  rep.criterion = "regularity";
  const auto k = static_cast<Index>(influence.size());
  if (k != geom.k()) {
    std::ostringstream msg;
    msg << "regularity_check: " << k << " influence matrices for k = "
        << geom.k();
    throw ShapeError(msg.str());
  }
  double max_diag = 0.0, max_trace = 0.0, scale = 0.0;
  for (Index m = 0; m < k; ++m) {
    require_same_dim(influence[m], geom.r, "regularity_check");
    const Matrix ra = geom.r.mat() * influence[m].mat();
    scale = std::max(scale, ra.cwiseAbs().maxCoeff());
    double worst = ra.diagonal().cwiseAbs().maxCoeff();
    max_diag = std::max(max_diag, worst);
    for (Index mm = 0; mm < k; ++mm) {
      const double tr =
          influence[m].mat().cwiseProduct(geom.r_dots[mm].mat()).sum();
      const double dev = std::abs(tr - (m == mm ? 2.0 : 0.0));
      max_trace = std::max(max_trace, dev);
      worst = std::max(worst, dev);
    }
    rep.per_m_residuals.push_back(worst);
  }
  rep.tolerance = rel_tol * (1.0 + scale);
  rep.verdict = max_diag <= rep.tolerance && max_trace <= rep.tolerance;
  rep.details = {{"max_abs_diag_RA", max_diag},
                 {"max_abs_trace_deviation", max_trace}};
  return rep;
}

PleInfluence ple_influence(const Geometry& geom) {
  return ple_influence(geom, fisher_info(geom));
}

PleInfluence ple_influence(const Geometry& geom, const Matrix& fisher) {
  const Matrix inv = checked_inverse(fisher, "Fisher information");
  PleInfluence out;
  for (Index m = 0; m < geom.k(); ++m)
    out.b.push_back(-geom.s_dots[m] +
                    diag_part(geom.r.mat() * geom.s_dots[m].mat()));
  for (Index m = 0; m < geom.k(); ++m) {
    Matrix a = Matrix::Zero(geom.p(), geom.p());
    for (Index mm = 0; mm < geom.k(); ++mm) a += inv(m, mm) * out.b[mm].mat();
    out.a.push_back(SymMatrix::symmetrized(a));
  }
  out.cov = gram(out.a, geom.ctx);
  return out;
}

DiagnosticReport efficiency_criterion(
    const Geometry& geom, std::optional<std::span<const SymMatrix>> b,
    double rel_tol) {
  DiagnosticReport rep;
  rep.criterion = b ? "efficiency" : "ple_efficiency";
  if (b && static_cast<Index>(b->size()) != geom.k())
    throw ShapeError("efficiency_criterion: need one matrix per parameter");
  const Matrix& r = geom.r.mat();
  double tol = 0.0;
  bool ok = true;
  Index min_rank = geom.k();
  for (Index m = 0; m < geom.k(); ++m) {
    Matrix br;
    if (b) {
      require_same_dim((*b)[m], geom.r, "efficiency_criterion");
      br = r * (*b)[m].mat() * r;
    } else {
      const Vector d = (geom.r_dots[m].mat() * geom.s.mat()).diagonal();
      br = r * d.asDiagonal() * r;
    }
    const Vector bd = br.diagonal();
    const SymMatrix crit = SymMatrix::symmetrized(
        br - 0.5 * (bd.asDiagonal() * r + r * bd.asDiagonal()));
    const SpanResult sr = span_residual(crit, geom.r_dots);
    const double t = span_threshold(crit, rel_tol);
    rep.per_m_residuals.push_back(sr.residual_norm);
    tol = std::max(tol, t);
    ok = ok && sr.residual_norm <= t;
    min_rank = std::min(min_rank, sr.rank);
  }
  rep.tolerance = tol;
  rep.verdict = ok;
  rep.details = {{"span_basis_rank", static_cast<double>(min_rank)}};
  return rep;
}

DiagnosticReport adaptivity_check(const Geometry& geom, double rel_tol) {
  DiagnosticReport rep;
  rep.criterion = "adaptivity";
  double scale = 0.0, worst = 0.0;
  for (Index m = 0; m < geom.k(); ++m) {
    const Matrix rs = geom.r.mat() * geom.s_dots[m].mat();
    scale = std::max(scale, rs.cwiseAbs().maxCoeff());
    const double v = rs.diagonal().cwiseAbs().maxCoeff();
    worst = std::max(worst, v);
    rep.per_m_residuals.push_back(v);
  }
  rep.tolerance = rel_tol * (1.0 + scale);
  rep.verdict = worst <= rep.tolerance;

  const Matrix fisher = fisher_info(geom);
  const Matrix eff = gram(efficient_score_matrices(geom), geom.ctx);
  const double loss = (fisher - eff).norm();
  const bool no_loss = loss <= rel_tol * (1.0 + fisher.norm());
  rep.details = {{"info_loss_frobenius", loss},
                 {"consistent_with_info_loss", no_loss == rep.verdict ? 1.0 : 0.0}};
  return rep;
}

double quad_influence_value(const SymMatrix& a, const Geometry& geom,
                            const Vector& u) {
  require_same_dim(a, geom.r, "quad_influence_value");
  require_length(u, geom.p(), "quad_influence_value");
  Vector z(u.size());
  for (Index j = 0; j < u.size(); ++j) z(j) = normal_quantile(u(j));
  const double tr = a.mat().cwiseProduct(geom.r.mat()).sum();
  return 0.5 * (z.dot(a.mat() * z) - tr);
}

EfficiencyBundle efficiency_bundle(const Geometry& geom) {
  EfficiencyBundle out{geom, {}, {}, {}, {}, {}, {}, {}, {}};
  out.g = score_generators(geom);
  for (std::size_t m = 0; m < out.g.size(); ++m)
    out.eff_matrices.push_back(d_operator(geom.s, out.g[m]) - geom.s_dots[m]);
  const InfoPair eff = efficient_info(geom, out.eff_matrices);
  out.eff_info = eff.info;
  out.eff_info_inv = eff.inverse;
  out.fisher = fisher_info(geom);
  PleInfluence ple = ple_influence(geom, out.fisher);
  out.ple_b = std::move(ple.b);
  out.ple_a = std::move(ple.a);
  out.ple_cov = std::move(ple.cov);
  return out;
}

Vector are_vector(const EfficiencyBundle& bundle) {
  return bundle.eff_info_inv.diagonal().cwiseQuotient(
      bundle.ple_cov.diagonal());
}

}  // namespace copula_rank
