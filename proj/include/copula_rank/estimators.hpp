#pragma once

#include <string>
#include <vector>

#include "copula_rank/models.hpp"
#include "copula_rank/numcore.hpp"

namespace copula_rank {

/// Column ranks of an n x p data matrix. Ties get the average rank.
struct RankedSample {
  Index n = 0;
  Index p = 0;
  Matrix ranks;       // 1..n, halves possible under ties
  Matrix pseudo_obs;  // ranks / (n + 1)
  Matrix zhat;        // Phi^-1(pseudo_obs)
  bool ties = false;
  std::vector<Index> tied_columns;
};

/// Throws DomainError for n < 2, non-finite entries or a constant column.
RankedSample rank_transform(const Matrix& data);

/// (1/n) sum_i zhat_i zhat_i'.
SymMatrix normal_scores_matrix(const RankedSample& sample);

/// R_hat rescaled to unit diagonal.
SymMatrix normal_scores_correlation(const RankedSample& sample);

enum class Method { ple, one_step, pilot_moment };
std::string method_name(Method m);
Method parse_method(const std::string& s);

struct EstimateResult {
  Vector theta_hat;
  Method method = Method::ple;
  int iterations = 0;
  bool converged = false;
  Vector std_errors;
  bool tie_warning = false;
  bool clamped = false;      // one-step update pulled back into the domain
  bool closed_form = false;  // no iteration was needed
  double score_norm = 0.0;   // sup-norm of the pseudo-score (PLE only)
  std::vector<std::string> notes;
};

/// tr(dS_m(theta) (R(theta) - R_hat)) for m = 1..k.
Vector pseudo_score(const CorrelationModel& model, const Vector& theta,
                    const SymMatrix& r_hat);

/// log det R(theta) + tr(S(theta) R_hat); its gradient is -pseudo_score.
double pseudo_objective(const CorrelationModel& model, const Vector& theta,
                        const SymMatrix& r_hat);

struct PleOptions {
  int max_iterations = 100;
  double tolerance_per_parameter = 1e-8;
};

/// Root of the pseudo-score equations by damped Newton, with a BFGS descent
/// on pseudo_objective when Newton stalls. The unrestricted family is
/// answered in closed form. Throws ConvergenceError carrying the iteration
/// trace.
EstimateResult ple_estimate(const CorrelationModel& model,
                            const RankedSample& sample, const Vector& init,
                            const PleOptions& opts = {});

/// Least-squares fit of the model to the normal-scores correlations for
/// families exposing moment weights; other families, and fits landing
/// outside the domain, fall back to ple_estimate from model.start_point.
EstimateResult pilot_moment(const CorrelationModel& model,
                            const RankedSample& sample);

struct OneStepOptions {
  bool iterate_twice = false;
};

/// pilot + I*^-1(pilot) (1/n) sum_i efficient score at pilot. Throws
/// DomainError when the pilot lies outside the domain.
EstimateResult one_step(const CorrelationModel& model,
                        const RankedSample& sample, const Vector& pilot,
                        const OneStepOptions& opts = {});

/// Convenience: pilot_moment followed by one_step.
EstimateResult one_step(const CorrelationModel& model,
                        const RankedSample& sample);

}  // namespace copula_rank
