#include "copula_rank/numcore.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "copula_rank/errors.hpp"

namespace copula_rank {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343819;

template <std::size_t N>
double horner(const double (&c)[N], double x) {
  double acc = c[N - 1];
  for (std::size_t i = N - 1; i-- > 0;) acc = acc * x + c[i];
  return acc;
}

// AS 241 coefficients, lowest order first.
constexpr double kCentralNum[] = {
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3};
constexpr double kCentralDen[] = {
    1.0,                     4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3};
constexpr double kMidNum[] = {
    1.42343711074968357734e0, 4.63033784615654529590e0,
    5.76949722146069140550e0, 3.64784832476320460504e0,
    1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4};
constexpr double kMidDen[] = {
    1.0,                       2.05319162663775882187e0,
    1.67638483018380384940e0,  6.89767334985100004550e-1,
    1.48103976427480074590e-1, 1.51986665636164571966e-2,
    5.47593808499534494600e-4, 1.05075007164441684324e-9};
constexpr double kTailNum[] = {
    6.65790464350110377720e0,  5.46378491116411436990e0,
    1.78482653991729133580e0,  2.96560571828504891230e-1,
    2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7};
constexpr double kTailDen[] = {
    1.0,                       5.99832206555887937690e-1,
    1.36929880922735805310e-1, 1.48753612908506148525e-2,
    7.86869131145613259100e-4, 1.84631831751005468180e-5,
    1.42151175831644588870e-7, 2.04426310338993978564e-15};

}  // namespace

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    std::ostringstream msg;
    msg << "normal_quantile: argument " << p << " outside (0, 1)";
    throw DomainError(msg.str());
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * horner(kCentralNum, r) / horner(kCentralDen, r);
  }
  // 1 - p is exact for p >= 0.5, so the upper tail loses nothing here.
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double x;
  if (r <= 5.0) {
    r -= 1.6;
    x = horner(kMidNum, r) / horner(kMidDen, r);
  } else {
    r -= 5.0;
    x = horner(kTailNum, r) / horner(kTailDen, r);
  }
  return q < 0.0 ? -x : x;
}

double std_gauss(GaussKind kind, double x) {
  switch (kind) {
    case GaussKind::density:
      return normal_pdf(x);
    case GaussKind::cdf:
      return normal_cdf(x);
    case GaussKind::quantile:
      return normal_quantile(x);
  }
  return std::nan("");
}

// ---------------------------------------------------------------------------

SymMatrix::SymMatrix(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    std::ostringstream msg;
    msg << "SymMatrix: expected a non-empty square matrix, got " << m.rows()
        << "x" << m.cols();
    throw ShapeError(msg.str());
  }
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(asym <= 1e-8 * (1.0 + scale))) {
    std::ostringstream msg;
    msg << "SymMatrix: matrix is not symmetric (max |m_ij - m_ji| = " << asym
        << ")";
    throw ShapeError(msg.str());
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::zero(Index p) { return symmetrized(Matrix::Zero(p, p)); }

SymMatrix SymMatrix::identity(Index p) {
  return symmetrized(Matrix::Identity(p, p));
}

SymMatrix SymMatrix::diagonal(const Vector& d) {
  return symmetrized(d.asDiagonal().toDenseMatrix());
}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
  if (m.rows() == 0 || m.rows() != m.cols())
    throw ShapeError("SymMatrix: expected a non-empty square matrix");
  SymMatrix out;
  out.m_ = 0.5 * (m + m.transpose());
  return out;
}

SymMatrix SymMatrix::operator+(const SymMatrix& o) const {
  require_same_dim(*this, o, "SymMatrix +");
  SymMatrix out;
  out.m_ = m_ + o.m_;
  return out;
}

SymMatrix SymMatrix::operator-(const SymMatrix& o) const {
  require_same_dim(*this, o, "SymMatrix -");
  SymMatrix out;
  out.m_ = m_ - o.m_;
  return out;
}

SymMatrix SymMatrix::operator-() const {
  SymMatrix out;
  out.m_ = -m_;
  return out;
}

SymMatrix SymMatrix::operator*(double s) const {
  SymMatrix out;
  out.m_ = s * m_;
  return out;
}

void require_same_dim(const SymMatrix& a, const SymMatrix& b, const char* op) {
  if (a.dim() != b.dim()) {
    std::ostringstream msg;
    msg << op << ": dimension mismatch (" << a.dim() << " vs " << b.dim()
        << ")";
    throw ShapeError(msg.str());
  }
}

double min_eigenvalue(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.mat(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Matrix spd_inverse(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    const double ev = min_eigenvalue(SymMatrix::symmetrized(a));
    std::ostringstream msg;
    msg << what << ": matrix is not positive definite (smallest eigenvalue "
        << ev << ")";
    throw SingularityError(msg.str(), ev);
  }
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

// ---------------------------------------------------------------------------

InnerProductContext::InnerProductContext(SymMatrix r) : r_(std::move(r)) {
  const Vector d = r_.mat().diagonal();
  if ((d.array() - 1.0).abs().maxCoeff() > 1e-12)
    throw DomainError("InnerProductContext: R must have unit diagonal");
  Eigen::LLT<Matrix> llt(r_.mat());
  if (llt.info() != Eigen::Success) {
    const double ev = min_eigenvalue(r_);
    std::ostringstream msg;
    msg << "InnerProductContext: R is not positive definite (smallest "
           "eigenvalue "
        << ev << ")";
    throw SingularityError(msg.str(), ev);
  }
}

double theta_inner(const SymMatrix& a, const SymMatrix& b,
                   const InnerProductContext& ctx) {
  require_same_dim(a, b, "theta_inner");
  require_same_dim(a, ctx.r(), "theta_inner");
  const Matrix ar = a.mat() * ctx.r().mat();
  const Matrix br = b.mat() * ctx.r().mat();
  // tr(X Y) = sum_ij X_ij Y_ji
  return 0.5 * ar.cwiseProduct(br.transpose()).sum();
}

Matrix gram(std::span<const SymMatrix> basis, const InnerProductContext& ctx) {
  const auto k = static_cast<Index>(basis.size());
  std::vector<Matrix> products;
  products.reserve(basis.size());
  for (const auto& b : basis) {
    require_same_dim(b, ctx.r(), "gram");
    products.push_back(b.mat() * ctx.r().mat());
  }
  Matrix g(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i; j < k; ++j) {
      const double v =
          0.5 * products[i].cwiseProduct(products[j].transpose()).sum();
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

namespace {

// Upper triangle with off-diagonals scaled by sqrt(2): the Euclidean norm of
// this vector is the Frobenius norm of the matrix.
Vector frobenius_vec(const SymMatrix& a) {
  const Index p = a.dim();
  Vector v(p * (p + 1) / 2);
  Index pos = 0;
  for (Index i = 0; i < p; ++i) {
    v(pos++) = a(i, i);
    for (Index j = i + 1; j < p; ++j)
      v(pos++) = std::numbers::sqrt2 * a(i, j);
  }
  return v;
}

}  // namespace

SpanResult span_residual(const SymMatrix& m, std::span<const SymMatrix> basis) {
  SpanResult out;
  if (basis.empty()) {
    out.residual_norm = m.frobenius();
    return out;
  }
  const Vector target = frobenius_vec(m);
  Matrix design(target.size(), static_cast<Index>(basis.size()));
  for (std::size_t c = 0; c < basis.size(); ++c) {
    require_same_dim(m, basis[c], "span_residual");
    design.col(static_cast<Index>(c)) = frobenius_vec(basis[c]);
  }
  // Pivots below 1e-10 of the largest one count as zero.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design.rows(),
                                                     design.cols());
  cod.setThreshold(1e-10);
  cod.compute(design);
  out.coefficients = cod.solve(target);
  out.rank = cod.rank();
  out.residual_norm = (target - design * out.coefficients).norm();
  return out;
}

}  // namespace copula_rank
