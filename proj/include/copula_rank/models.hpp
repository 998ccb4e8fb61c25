#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "copula_rank/numcore.hpp"

namespace copula_rank {

/// Strictly-lower-triangle positions (i > j) in row order: (1,0), (2,0),
/// (2,1), (3,0), ... This is also the parameter order of the unrestricted
/// model.
std::vector<std::pair<Index, Index>> lower_pairs(Index p);

/// A parametrization theta -> R(theta) of a p x p correlation matrix.
///
/// Implementations must return a unit-diagonal R and zero-diagonal
/// derivatives. `r_dot` defaults to a central finite difference, so a new
/// nonlinear family only has to provide `r_of_theta` and `in_domain`.
class CorrelationModel {
 public:
  virtual ~CorrelationModel() = default;

  virtual std::string name() const = 0;
  virtual Index p() const = 0;
  virtual Index k() const = 0;

  /// R(theta). Does not check the domain.
  virtual SymMatrix r_of_theta(const Vector& theta) const = 0;

  /// dR/dtheta_m at theta.
  virtual SymMatrix r_dot(const Vector& theta, Index m) const;

  /// Membership of the open parameter set. The default accepts any theta of
  /// length k whose R(theta) is positive definite.
  virtual bool in_domain(const Vector& theta) const;

  /// Linear map from the strictly-lower-triangle entries of a correlation
  /// matrix (ordered as lower_pairs) to a minimum-distance estimate of theta.
  /// Empty for families without a closed-form fit.
  virtual std::optional<Matrix> moment_weights() const { return std::nullopt; }

  /// In-domain starting value for iterative fitting, derived from an
  /// estimated correlation matrix. Default: theta = 0 if that is in the
  /// domain.
  virtual Vector start_point(const Matrix& corr) const;

  /// True when theta is an identifiable reparametrization of a larger raw
  /// parameter (constrained factor loadings).
  virtual bool reparametrized() const { return false; }

  /// True for the unrestricted family, whose pseudo-likelihood estimate is
  /// available in closed form.
  virtual bool unrestricted() const { return false; }

  void require_theta_size(const Vector& theta) const;

 protected:
  SymMatrix finite_difference_r_dot(const Vector& theta, Index m) const;
};

using ModelPtr = std::shared_ptr<const CorrelationModel>;

enum class Family {
  unrestricted,
  exchangeable,
  toeplitz,
  circular,
  factor,
  adaptivity_demo,
  custom_affine
};

enum class LoadingConstraint { none, lower_triangular };

/// Declarative description of a model, as read from a JSON descriptor or CLI
/// flags.
struct ModelDescriptor {
  Family family = Family::exchangeable;
  Index p = 0;
  Index q = 0;
  LoadingConstraint constraint = LoadingConstraint::lower_triangular;
  std::vector<Matrix> generators;  // custom_affine only
};

std::string family_name(Family f);
Family parse_family(const std::string& s);

/// Throws ConfigError on an invalid descriptor (p < 2, q >= p for factor,
/// no generators, non-symmetric or non-zero-diagonal generators, ...).
ModelPtr build_model(const ModelDescriptor& spec);

// Convenience constructors used throughout tests and the CLI.
ModelPtr make_unrestricted(Index p);
ModelPtr make_exchangeable(Index p);
ModelPtr make_toeplitz(Index p);
ModelPtr make_circular();
ModelPtr make_factor(Index p, Index q,
                     LoadingConstraint c = LoadingConstraint::lower_triangular);
ModelPtr make_adaptivity_demo();
ModelPtr make_custom_affine(Index p, std::vector<Matrix> generators);

/// Margin kept from the boundary of open parameter intervals.
inline constexpr double kDomainMargin = 1e-6;

struct Assumption1Report {
  bool in_domain = false;
  double max_unit_diagonal_deviation = 0.0;
  double min_eigenvalue = 0.0;
  bool positive_definite = false;
  double max_rdot_diagonal = 0.0;
  std::vector<double> rdot_singular_values;  // descending
  Index numerical_rank = 0;
  bool rdot_independent = false;
  std::vector<std::string> violations;
  std::vector<std::string> notes;

  bool passed() const { return violations.empty(); }
};

/// Checks the regularity conditions on the parametrization at theta.
/// Violations are reported, never thrown.
Assumption1Report validate_assumption1(const CorrelationModel& model,
                                       const Vector& theta);

/// Everything evaluated at a fixed theta: R, S = R^-1, dR/dtheta_m and
/// dS/dtheta_m = -S dR/dtheta_m S.
struct Geometry {
  Vector theta;
  SymMatrix r;
  SymMatrix s;
  std::vector<SymMatrix> r_dots;
  std::vector<SymMatrix> s_dots;
  InnerProductContext ctx;

  Index p() const { return r.dim(); }
  Index k() const { return static_cast<Index>(r_dots.size()); }
};

/// Throws DomainError for theta outside the model domain and
/// SingularityError (with the smallest eigenvalue) if R is not positive
/// definite.
Geometry eval_geometry(const CorrelationModel& model, const Vector& theta);

}  // namespace copula_rank
