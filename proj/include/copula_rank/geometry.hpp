#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "copula_rank/models.hpp"
#include "copula_rank/numcore.hpp"

namespace copula_rank {

/// Score of the copula log-density at the Gaussianized point z:
/// -tr(S dR_m)/2 - z' dS_m z / 2.
Vector parametric_score(const Geometry& geom, const Vector& z);

/// S diag(b) + diag(b) S.
SymMatrix d_operator(const SymMatrix& s, const Vector& b);

/// g_m = -(I + R o S)^-1 (dR_m o S) 1, one vector per parameter. The
/// coefficient matrix is factored once.
std::vector<Vector> score_generators(const Geometry& geom);

/// g_{j,m} (1 - Phi^-1(u)^2), the least favourable direction for margin j.
double generator_function(const Geometry& geom, Index m, Index j, double u);

/// A*_m = D(g_m) - dS_m; the efficient score at z is z' A*_m z / 2.
std::vector<SymMatrix> efficient_score_matrices(const Geometry& geom);

struct InfoPair {
  Matrix info;
  Matrix inverse;
};

/// Gram matrix of the efficient score matrices and its inverse. Throws
/// SingularityError (carrying the reciprocal condition estimate) when the
/// matrix cannot be inverted reliably.
InfoPair efficient_info(const Geometry& geom);
InfoPair efficient_info(const Geometry& geom,
                        std::span<const SymMatrix> eff_matrices);

/// Gram matrix of {-dS_m}.
Matrix fisher_info(const Geometry& geom);

struct TangentProjection {
  Vector b;
  SymMatrix projection;  // D(b)
};

/// Projection of A onto {D(b)}: solves (I + R o S) b = diag(R A).
TangentProjection project_tangent(const SymMatrix& a, const Geometry& geom);

/// Result of a diagnostic. `per_m_residuals[m]` is the quantity compared
/// against `tolerance` for parameter m; `details` holds auxiliary numbers
/// worth printing.
struct DiagnosticReport {
  std::string criterion;
  std::vector<double> per_m_residuals;
  double tolerance = 0.0;
  bool verdict = false;
  std::vector<std::pair<std::string, double>> details;
};

inline constexpr double kDiagnosticTolerance = 1e-9;

/// diag(R A_m) = 0 and tr(A_m dR_m') = 2 [m = m'].
DiagnosticReport regularity_check(std::span<const SymMatrix> influence,
                                  const Geometry& geom,
                                  double rel_tol = kDiagnosticTolerance);

struct PleInfluence {
  std::vector<SymMatrix> b;
  std::vector<SymMatrix> a;
  Matrix cov;
};

/// B_m = -dS_m + diag(R dS_m), A_m = sum_m' (I^-1)_{mm'} B_m',
/// cov_{mm'} = <A_m, A_m'>.
PleInfluence ple_influence(const Geometry& geom);
PleInfluence ple_influence(const Geometry& geom, const Matrix& fisher);

/// Span test of M_m = B_R - (diag(B_R) R + R diag(B_R)) / 2 against
/// {dR_1, ..., dR_k}, where B_R = R B_m R. Without `b` the pseudo-likelihood
/// case B_R = R diag(dR_m S) R is used. Verdict true means efficient.
DiagnosticReport efficiency_criterion(
    const Geometry& geom,
    std::optional<std::span<const SymMatrix>> b = std::nullopt,
    double rel_tol = kDefaultSpanTolerance);

/// Adaptive iff diag(R dS_m) = 0 for all m. The report also carries
/// ||I - I*||_F and whether the two characterisations agree.
DiagnosticReport adaptivity_check(const Geometry& geom,
                                  double rel_tol = kDiagnosticTolerance);

/// (z' A z - tr(A R)) / 2 with z_j = Phi^-1(u_j).
double quad_influence_value(const SymMatrix& a, const Geometry& geom,
                            const Vector& u);

struct EfficiencyBundle {
  Geometry geometry;
  std::vector<Vector> g;
  std::vector<SymMatrix> eff_matrices;
  Matrix fisher;
  Matrix eff_info;
  Matrix eff_info_inv;
  std::vector<SymMatrix> ple_b;
  std::vector<SymMatrix> ple_a;
  Matrix ple_cov;
};

EfficiencyBundle efficiency_bundle(const Geometry& geom);

/// diag(I*^-1) / diag(ple_cov), componentwise.
Vector are_vector(const EfficiencyBundle& bundle);

}  // namespace copula_rank
