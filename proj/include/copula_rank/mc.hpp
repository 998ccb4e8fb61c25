#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "copula_rank/estimators.hpp"
#include "copula_rank/models.hpp"
#include "copula_rank/sampler.hpp"

namespace copula_rank {

struct McConfig {
  ModelDescriptor model;
  std::vector<Vector> theta_grid;  // one experiment per point
  Index n = 250;
  Index replications = 2000;
  std::vector<Method> estimators{Method::ple, Method::one_step};
  std::uint64_t seed = 0;
  std::vector<MarginKind> margins;  // empty: uniform
  std::string output_dir;           // empty: nothing written
  unsigned workers = 0;             // 0: hardware concurrency
  double max_failure_fraction = 0.05;
};

/// Throws ConfigError naming the offending field.
void validate_config(const McConfig& cfg);

struct EstimatorSummary {
  Method method = Method::ple;
  Index successes = 0;
  Index failures = 0;
  Vector bias;
  Vector variance;    // across successful replications, divisor N - 1
  Vector n_variance;  // n * variance
  std::vector<std::string> failure_samples;  // first few messages
};

struct McReport {
  ModelDescriptor model;
  std::string model_name;
  Vector theta_true;
  Index n = 0;
  Index replications = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> margins;
  Vector eff_bound;  // diag(I*^-1) at theta_true, NaN if unavailable
  Vector ple_bound;  // diag(ple_cov) at theta_true
  std::vector<EstimatorSummary> estimators;
  std::vector<Matrix> errors;  // per estimator: replications x k, NaN rows on failure
};

/// Replications of sample -> margins -> ranks -> estimates at
/// cfg.theta_grid[grid_index]. Replication r uses stream (cfg.seed, r); the
/// reduction runs in replication order, so the report does not depend on
/// the worker count. Throws ExperimentError when an estimator fails in more
/// than cfg.max_failure_fraction of replications.
McReport run_experiment(const McConfig& cfg, std::size_t grid_index = 0);

std::vector<McReport> run_grid(const McConfig& cfg);

struct SummaryRow {
  Vector theta;
  Index n = 0;
  std::string estimator;
  Index component = 0;
  double bias = 0.0;
  double n_variance = 0.0;
  double eff_bound = 0.0;
  double ple_bound = 0.0;
  Index successes = 0;
  Index failures = 0;
};

/// One row per (theta, n, estimator, component). Throws ShapeError when the
/// reports disagree on model or estimator set.
std::vector<SummaryRow> summarize(std::span<const McReport> reports);

std::string summary_csv(std::span<const SummaryRow> rows);

/// replication x estimator x component listing.
std::string errors_csv(std::span<const McReport> reports);

}  // namespace copula_rank
