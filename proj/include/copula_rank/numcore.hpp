#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace copula_rank {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Standard normal
// ---------------------------------------------------------------------------

enum class GaussKind { density, cdf, quantile };

double normal_pdf(double x);
double normal_cdf(double x);

// Wichura's AS 241 (PPND16); relative accuracy about 1e-16 over the whole
// open unit interval. Throws DomainError outside (0, 1).
double normal_quantile(double p);

double std_gauss(GaussKind kind, double x);

// ---------------------------------------------------------------------------
// Symmetric matrices
// ---------------------------------------------------------------------------

/// Dense real symmetric matrix. Symmetry is checked on construction and then
/// enforced exactly, so `(i, j)` and `(j, i)` always hold the same double.
class SymMatrix {
 public:
  SymMatrix() = default;

  /// Throws ShapeError if `m` is empty, not square, or asymmetric beyond
  /// 1e-8 * (1 + max|m_ij|).
  explicit SymMatrix(const Matrix& m);

  static SymMatrix zero(Index p);
  static SymMatrix identity(Index p);
  static SymMatrix diagonal(const Vector& d);
  /// (m + m') / 2 without the asymmetry check; for products that are
  /// symmetric up to round-off.
  static SymMatrix symmetrized(const Matrix& m);

  Index dim() const noexcept { return m_.rows(); }
  const Matrix& mat() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double frobenius() const { return m_.norm(); }

  SymMatrix operator+(const SymMatrix& o) const;
  SymMatrix operator-(const SymMatrix& o) const;
  SymMatrix operator-() const;
  SymMatrix operator*(double s) const;
  friend SymMatrix operator*(double s, const SymMatrix& a) { return a * s; }

 private:
  Matrix m_;
};

/// A correlation matrix R validated once (unit diagonal, positive definite)
/// and used as the metric of the inner product <A, B> = tr(A R B R) / 2.
class InnerProductContext {
 public:
  /// Throws DomainError on a non-unit diagonal and SingularityError (with
  /// the smallest eigenvalue) when R is not positive definite.
  explicit InnerProductContext(SymMatrix r);

  const SymMatrix& r() const noexcept { return r_; }
  Index dim() const noexcept { return r_.dim(); }

 private:
  SymMatrix r_;
};

double theta_inner(const SymMatrix& a, const SymMatrix& b,
                   const InnerProductContext& ctx);

/// Gram matrix of `basis` under theta_inner.
Matrix gram(std::span<const SymMatrix> basis, const InnerProductContext& ctx);

struct SpanResult {
  double residual_norm = 0.0;
  Vector coefficients;
  Index rank = 0;
};

/// Least-squares projection of `m` onto span(basis) in the Frobenius metric.
/// Rank-deficient bases are handled by a complete orthogonal decomposition
/// (minimum-norm coefficients).
SpanResult span_residual(const SymMatrix& m, std::span<const SymMatrix> basis);

inline constexpr double kDefaultSpanTolerance = 1e-8;

/// Threshold for "m lies in the span": rel * (1 + ||m||_F).
inline double span_threshold(const SymMatrix& m,
                             double rel = kDefaultSpanTolerance) {
  return rel * (1.0 + m.frobenius());
}

// ---------------------------------------------------------------------------
// Small helpers shared by the other modules
// ---------------------------------------------------------------------------

double min_eigenvalue(const SymMatrix& a);

/// Inverse of a symmetric positive definite matrix via LLT; throws
/// SingularityError carrying the smallest eigenvalue on failure.
Matrix spd_inverse(const Matrix& a, const char* what);

void require_same_dim(const SymMatrix& a, const SymMatrix& b, const char* op);

}  // namespace copula_rank
