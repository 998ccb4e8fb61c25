#include "copula_rank/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "copula_rank/errors.hpp"

namespace copula_rank {

std::vector<std::pair<Index, Index>> lower_pairs(Index p) {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(static_cast<std::size_t>(p * (p - 1) / 2));
  for (Index i = 1; i < p; ++i)
    for (Index j = 0; j < i; ++j) out.emplace_back(i, j);
  return out;
}

namespace {

bool is_positive_definite(const Matrix& r) {
  Eigen::LLT<Matrix> llt(r);
  return llt.info() == Eigen::Success;
}

std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os << "(";
  for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ")";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

void CorrelationModel::require_theta_size(const Vector& theta) const {
  if (theta.size() != k()) {
    std::ostringstream msg;
    msg << name() << ": theta has length " << theta.size() << ", expected "
        << k();
    throw ShapeError(msg.str());
  }
}

SymMatrix CorrelationModel::r_dot(const Vector& theta, Index m) const {
  return finite_difference_r_dot(theta, m);
}

SymMatrix CorrelationModel::finite_difference_r_dot(const Vector& theta,
                                                    Index m) const {
  require_theta_size(theta);
  const double h = std::max(1e-6, 1e-8 * std::abs(theta(m)));
  Vector up = theta, down = theta;
  up(m) += h;
  down(m) -= h;
  Matrix d = (r_of_theta(up).mat() - r_of_theta(down).mat()) / (2.0 * h);
  d.diagonal().setZero();
  return SymMatrix::symmetrized(d);
}

bool CorrelationModel::in_domain(const Vector& theta) const {
  if (theta.size() != k() || !theta.allFinite()) return false;
  return is_positive_definite(r_of_theta(theta).mat());
}

Vector CorrelationModel::start_point(const Matrix& /*corr*/) const {
  Vector zero = Vector::Zero(k());
  if (!in_domain(zero))
    throw ConfigError(name() + ": no default starting point in the domain");
  return zero;
}

// ---------------------------------------------------------------------------
// Affine families: R(theta) = I + sum_m theta_m G_m
// ---------------------------------------------------------------------------

namespace {

class AffineModel final : public CorrelationModel {
 public:
  AffineModel(std::string name, Index p, std::vector<SymMatrix> generators,
              std::optional<std::pair<double, double>> interval = {},
              bool unrestricted = false)
      : name_(std::move(name)),
        p_(p),
        generators_(std::move(generators)),
        interval_(interval),
        unrestricted_(unrestricted) {}

  std::string name() const override { return name_; }
  Index p() const override { return p_; }
  Index k() const override { return static_cast<Index>(generators_.size()); }

  SymMatrix r_of_theta(const Vector& theta) const override {
    require_theta_size(theta);
    Matrix r = Matrix::Identity(p_, p_);
    for (Index m = 0; m < k(); ++m) r += theta(m) * generators_[m].mat();
    return SymMatrix::symmetrized(r);
  }

  SymMatrix r_dot(const Vector& theta, Index m) const override {
    require_theta_size(theta);
    return generators_.at(static_cast<std::size_t>(m));
  }

  bool in_domain(const Vector& theta) const override {
    if (theta.size() != k() || !theta.allFinite()) return false;
    if (interval_ && !(theta(0) > interval_->first && theta(0) < interval_->second))
      return false;
    return is_positive_definite(r_of_theta(theta).mat());
  }

  std::optional<Matrix> moment_weights() const override {
    const auto pairs = lower_pairs(p_);
    Matrix design(static_cast<Index>(pairs.size()), k());
    for (std::size_t e = 0; e < pairs.size(); ++e)
      for (Index m = 0; m < k(); ++m)
        design(static_cast<Index>(e), m) =
            generators_[m](pairs[e].first, pairs[e].second);
    // (G'G)^-1 G'
    const Matrix gtg = design.transpose() * design;
    return Matrix(gtg.ldlt().solve(design.transpose()));
  }

  bool unrestricted() const override { return unrestricted_; }

 private:
  std::string name_;
  Index p_;
  std::vector<SymMatrix> generators_;
  std::optional<std::pair<double, double>> interval_;
  bool unrestricted_;
};

SymMatrix pair_matrix(Index p, Index i, Index j) {
  Matrix g = Matrix::Zero(p, p);
  g(i, j) = 1.0;
  g(j, i) = 1.0;
  return SymMatrix::symmetrized(g);
}

// ---------------------------------------------------------------------------

class CircularModel final : public CorrelationModel {
 public:
  std::string name() const override { return "circular"; }
  Index p() const override { return 4; }
  Index k() const override { return 1; }

  SymMatrix r_of_theta(const Vector& theta) const override {
    require_theta_size(theta);
    const double t = theta(0);
    Matrix r(4, 4);
    r << 1, t, t * t, t,  //
        t, 1, t, t * t,   //
        t * t, t, 1, t,   //
        t, t * t, t, 1;
    return SymMatrix::symmetrized(r);
  }

  SymMatrix r_dot(const Vector& theta, Index m) const override {
    require_theta_size(theta);
    if (m != 0) throw ShapeError("circular: parameter index out of range");
    const double d = 2.0 * theta(0);
    Matrix r(4, 4);
    r << 0, 1, d, 1,  //
        1, 0, 1, d,   //
        d, 1, 0, 1,   //
        1, d, 1, 0;
    return SymMatrix::symmetrized(r);
  }

  bool in_domain(const Vector& theta) const override {
    return theta.size() == 1 && std::isfinite(theta(0)) &&
           std::abs(theta(0)) < 1.0 - kDomainMargin;
  }

  std::optional<Matrix> moment_weights() const override {
    // mean of the four first-neighbour correlations (1,0), (2,1), (3,2), (3,0)
    Matrix w = Matrix::Zero(1, 6);
    w(0, 0) = w(0, 2) = w(0, 5) = w(0, 3) = 0.25;
    return w;
  }
};

// ---------------------------------------------------------------------------

class AdaptivityDemoModel final : public CorrelationModel {
 public:
  std::string name() const override { return "adaptivity_demo"; }
  Index p() const override { return 3; }
  Index k() const override { return 1; }

  SymMatrix r_of_theta(const Vector& theta) const override {
    require_theta_size(theta);
    const double t = theta(0);
    const double a = t * t + 0.5;
    const double b = t + 0.25;
    Matrix r(3, 3);
    r << 1, a, a,  //
        a, 1, b,   //
        a, b, 1;
    return SymMatrix::symmetrized(r);
  }

  SymMatrix r_dot(const Vector& theta, Index m) const override {
    require_theta_size(theta);
    if (m != 0) throw ShapeError("adaptivity_demo: parameter index out of range");
    const double a = 2.0 * theta(0);
    Matrix r(3, 3);
    r << 0, a, a,  //
        a, 0, 1,   //
        a, 1, 0;
    return SymMatrix::symmetrized(r);
  }
};

// ---------------------------------------------------------------------------
// Factor model R = I + offdiag(L L'), L a p x q loading matrix.
// ---------------------------------------------------------------------------

class FactorModel final : public CorrelationModel {
 public:
  FactorModel(Index p, Index q, LoadingConstraint c) : p_(p), q_(q), c_(c) {
    for (Index a = 0; a < p; ++a)
      for (Index f = 0; f < q; ++f)
        if (c == LoadingConstraint::none || f <= a) free_.emplace_back(a, f);
  }

  std::string name() const override { return "factor"; }
  Index p() const override { return p_; }
  Index k() const override { return static_cast<Index>(free_.size()); }
  bool reparametrized() const override {
    return c_ == LoadingConstraint::lower_triangular && q_ > 1;
  }

  Matrix loadings(const Vector& theta) const {
    require_theta_size(theta);
    Matrix l = Matrix::Zero(p_, q_);
    for (std::size_t m = 0; m < free_.size(); ++m)
      l(free_[m].first, free_[m].second) = theta(static_cast<Index>(m));
    return l;
  }

  SymMatrix r_of_theta(const Vector& theta) const override {
    const Matrix l = loadings(theta);
    Matrix r = l * l.transpose();
    r.diagonal().setOnes();
    return SymMatrix::symmetrized(r);
  }

  SymMatrix r_dot(const Vector& theta, Index m) const override {
    const Matrix l = loadings(theta);
    const auto [a, f] = free_.at(static_cast<std::size_t>(m));
    // offdiag(E L' + L E')
    Matrix d = Matrix::Zero(p_, p_);
    d.row(a) += l.col(f).transpose();
    d.col(a) += l.col(f);
    d.diagonal().setZero();
    return SymMatrix::symmetrized(d);
  }

  bool in_domain(const Vector& theta) const override {
    if (theta.size() != k() || !theta.allFinite()) return false;
    const Matrix l = loadings(theta);
    if (l.rowwise().squaredNorm().maxCoeff() >= 1.0 - kDomainMargin)
      return false;
    if (c_ == LoadingConstraint::lower_triangular)
      for (Index f = 0; f < q_; ++f)
        if (!(l(f, f) > 0.0)) return false;
    return is_positive_definite(r_of_theta(theta).mat());
  }

  Vector start_point(const Matrix& corr) const override {
    Eigen::SelfAdjointEigenSolver<Matrix> es(corr);
    Matrix l(p_, q_);
    for (Index f = 0; f < q_; ++f) {
      const Index col = p_ - 1 - f;  // eigenvalues ascending
      l.col(f) = es.eigenvectors().col(col) *
                 std::sqrt(std::max(es.eigenvalues()(col), 1e-6));
    }
    if (c_ == LoadingConstraint::lower_triangular) {
      // Rotate L -> L Q so that it becomes lower triangular (QR of L').
      Eigen::HouseholderQR<Matrix> qr(l.transpose());
      const Matrix q = qr.householderQ() * Matrix::Identity(q_, q_);
      l = l * q;
      for (Index f = 0; f < q_; ++f) {
        if (l(f, f) < 0.0) l.col(f) = -l.col(f);
        for (Index a = 0; a < f; ++a) l(a, f) = 0.0;
        if (l(f, f) < 1e-3) l(f, f) = 1e-3;
      }
    }
    for (Index a = 0; a < p_; ++a) {
      const double norm = l.row(a).norm();
      if (norm > 0.9) l.row(a) *= 0.9 / norm;
    }
    Vector theta(k());
    for (std::size_t m = 0; m < free_.size(); ++m)
      theta(static_cast<Index>(m)) = l(free_[m].first, free_[m].second);
    if (!in_domain(theta))
      throw ConfigError("factor: could not construct a starting point");
    return theta;
  }

 private:
  Index p_;
  Index q_;
  LoadingConstraint c_;
  std::vector<std::pair<Index, Index>> free_;
};

}  // namespace

// ---------------------------------------------------------------------------

std::string family_name(Family f) {
  switch (f) {
    case Family::unrestricted:
      return "unrestricted";
    case Family::exchangeable:
      return "exchangeable";
    case Family::toeplitz:
      return "toeplitz";
    case Family::circular:
      return "circular";
    case Family::factor:
      return "factor";
    case Family::adaptivity_demo:
      return "adaptivity_demo";
    case Family::custom_affine:
      return "custom_affine";
  }
  return "unknown";
}

Family parse_family(const std::string& s) {
  for (Family f : {Family::unrestricted, Family::exchangeable, Family::toeplitz,
                   Family::circular, Family::factor, Family::adaptivity_demo,
                   Family::custom_affine})
    if (family_name(f) == s) return f;
  throw ConfigError("family: unknown model family '" + s + "'");
}

ModelPtr make_unrestricted(Index p) {
  if (p < 2) throw ConfigError("p: unrestricted model needs p >= 2");
  std::vector<SymMatrix> gens;
  for (auto [i, j] : lower_pairs(p)) gens.push_back(pair_matrix(p, i, j));
  return std::make_shared<AffineModel>("unrestricted", p, std::move(gens),
                                       std::nullopt, true);
}

ModelPtr make_exchangeable(Index p) {
  if (p < 2) throw ConfigError("p: exchangeable model needs p >= 2");
  Matrix g = Matrix::Ones(p, p);
  g.diagonal().setZero();
  const double lo = -1.0 / static_cast<double>(p - 1) + kDomainMargin;
  const double hi = 1.0 - kDomainMargin;
  return std::make_shared<AffineModel>(
      "exchangeable", p, std::vector<SymMatrix>{SymMatrix(g)},
      std::make_pair(lo, hi));
}

ModelPtr make_toeplitz(Index p) {
  if (p < 2) throw ConfigError("p: toeplitz model needs p >= 2");
  std::vector<SymMatrix> gens;
  for (Index lag = 1; lag < p; ++lag) {
    Matrix g = Matrix::Zero(p, p);
    for (Index i = 0; i + lag < p; ++i) {
      g(i, i + lag) = 1.0;
      g(i + lag, i) = 1.0;
    }
    gens.emplace_back(g);
  }
  return std::make_shared<AffineModel>("toeplitz", p, std::move(gens));
}

ModelPtr make_circular() { return std::make_shared<CircularModel>(); }

ModelPtr make_factor(Index p, Index q, LoadingConstraint c) {
  if (p < 2) throw ConfigError("p: factor model needs p >= 2");
  if (q < 1 || q >= p) throw ConfigError("q: factor model needs 1 <= q < p");
  return std::make_shared<FactorModel>(p, q, c);
}

ModelPtr make_adaptivity_demo() {
  return std::make_shared<AdaptivityDemoModel>();
}

ModelPtr make_custom_affine(Index p, std::vector<Matrix> generators) {
  if (p < 2) throw ConfigError("p: custom_affine model needs p >= 2");
  if (generators.empty())
    throw ConfigError("generators: custom_affine needs at least one generator");
  std::vector<SymMatrix> gens;
  for (std::size_t m = 0; m < generators.size(); ++m) {
    const Matrix& g = generators[m];
    std::ostringstream where;
    where << "generators[" << m << "]";
    if (g.rows() != p || g.cols() != p)
      throw ConfigError(where.str() + ": expected a p x p matrix");
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ConfigError(where.str() + ": matrix is not symmetric");
    if (g.diagonal().cwiseAbs().maxCoeff() != 0.0)
      throw ConfigError(where.str() + ": diagonal must be zero");
    gens.emplace_back(g);
  }
  return std::make_shared<AffineModel>("custom_affine", p, std::move(gens));
}

ModelPtr build_model(const ModelDescriptor& spec) {
  switch (spec.family) {
    case Family::unrestricted:
      return make_unrestricted(spec.p);
    case Family::exchangeable:
      return make_exchangeable(spec.p);
    case Family::toeplitz:
      return make_toeplitz(spec.p);
    case Family::circular:
      return make_circular();
    case Family::factor:
      return make_factor(spec.p, spec.q, spec.constraint);
    case Family::adaptivity_demo:
      return make_adaptivity_demo();
    case Family::custom_affine:
      return make_custom_affine(spec.p, spec.generators);
  }
  throw ConfigError("family: unsupported");
}

// ---------------------------------------------------------------------------

Assumption1Report validate_assumption1(const CorrelationModel& model,
                                       const Vector& theta) {
  Assumption1Report rep;
  if (theta.size() != model.k()) {
    rep.violations.push_back("theta has the wrong length");
    return rep;
  }
  rep.in_domain = model.in_domain(theta);
  if (!rep.in_domain) rep.violations.push_back("theta outside the model domain");

  const SymMatrix r = model.r_of_theta(theta);
  rep.max_unit_diagonal_deviation =
      (r.mat().diagonal().array() - 1.0).abs().maxCoeff();
  if (rep.max_unit_diagonal_deviation > 1e-12)
    rep.violations.push_back("R(theta) does not have a unit diagonal");
  rep.min_eigenvalue = min_eigenvalue(r);
  rep.positive_definite = is_positive_definite(r.mat()) && rep.min_eigenvalue > 0;
  if (!rep.positive_definite)
    rep.violations.push_back("R(theta) is not positive definite");

  const Index p = model.p();
  Matrix stacked(p * p, model.k());
  for (Index m = 0; m < model.k(); ++m) {
    const SymMatrix d = model.r_dot(theta, m);
    rep.max_rdot_diagonal =
        std::max(rep.max_rdot_diagonal, d.mat().diagonal().cwiseAbs().maxCoeff());
    stacked.col(m) = d.mat().reshaped();
  }
  if (rep.max_rdot_diagonal > 1e-12)
    rep.violations.push_back("derivative matrices have a non-zero diagonal");

  Eigen::JacobiSVD<Matrix> svd(stacked);
  const Vector sv = svd.singularValues();
  rep.rdot_singular_values.assign(sv.data(), sv.data() + sv.size());
  const double top = sv.size() ? sv(0) : 0.0;
  rep.numerical_rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (top > 0.0 && sv(i) > 1e-10 * top) ++rep.numerical_rank;
  rep.rdot_independent = rep.numerical_rank == model.k();
  if (!rep.rdot_independent) {
    std::ostringstream msg;
    msg << "derivative matrices are linearly dependent (numerical rank "
        << rep.numerical_rank << " of " << model.k() << ")";
    rep.violations.push_back(msg.str());
  }
  if (model.reparametrized())
    rep.notes.push_back("unverified reparametrization condition");
  return rep;
}

Geometry eval_geometry(const CorrelationModel& model, const Vector& theta) {
  model.require_theta_size(theta);
  const SymMatrix r = model.r_of_theta(theta);
  if (!model.in_domain(theta)) {
    std::ostringstream msg;
    msg << model.name() << ": theta = " << format_vector(theta)
        << " is outside the model domain";
    const double ev = min_eigenvalue(r);
    if (!(ev > 0.0)) msg << " (R(theta) has smallest eigenvalue " << ev << ")";
    throw DomainError(msg.str());
  }
  Eigen::LLT<Matrix> llt(r.mat());
  if (llt.info() != Eigen::Success) {
    const double ev = min_eigenvalue(r);
    std::ostringstream msg;
    msg << model.name() << ": R(theta) is not positive definite (smallest "
        << "eigenvalue " << ev << ")";
    throw SingularityError(msg.str(), ev);
  }
  const Index p = r.dim();
  SymMatrix s = SymMatrix::symmetrized(llt.solve(Matrix::Identity(p, p)));

  std::vector<SymMatrix> r_dots, s_dots;
  for (Index m = 0; m < model.k(); ++m) {
    r_dots.push_back(model.r_dot(theta, m));
    s_dots.push_back(
        SymMatrix::symmetrized(-(s.mat() * r_dots.back().mat() * s.mat())));
  }
  InnerProductContext ctx(r);
  return Geometry{theta, r, std::move(s), std::move(r_dots), std::move(s_dots),
                  std::move(ctx)};
}

}  // namespace copula_rank
