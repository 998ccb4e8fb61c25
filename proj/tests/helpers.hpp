#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "copula_rank/models.hpp"
#include "copula_rank/numcore.hpp"

namespace testing {

using namespace copula_rank;

inline SymMatrix random_sym(Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> n01;
  Matrix m(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) m(i, j) = n01(rng);
  return SymMatrix::symmetrized(m);
}

// Rejection sampling from a box around zero.
inline Vector random_theta(const CorrelationModel& model, std::mt19937_64& rng,
                           double half_width = 0.6) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  for (int tries = 0; tries < 100000; ++tries) {
    Vector t(model.k());
    for (Index m = 0; m < model.k(); ++m) t(m) = u(rng);
    if (model.in_domain(t)) return t;
  }
  throw std::runtime_error("random_theta: no in-domain draw");
}

// Like random_theta, but factor loadings are drawn away from zero so that
// every factor is clearly present in moderate samples.
inline Vector identifiable_theta(const CorrelationModel& model, std::mt19937_64& rng,
                                 double half_width = 0.5) {
  if (model.name() != "factor") return random_theta(model, rng, half_width);
  std::uniform_real_distribution<double> mag(0.35, 0.65);
  std::bernoulli_distribution sign(0.5);
  for (int tries = 0; tries < 100000; ++tries) {
    Vector t(model.k());
    for (Index m = 0; m < model.k(); ++m) t(m) = sign(rng) ? mag(rng) : -mag(rng);
    if (model.in_domain(t)) return t;
  }
  throw std::runtime_error("identifiable_theta: no in-domain draw");
}

inline std::vector<ModelPtr> builtin_models() {
  return {make_unrestricted(3),
          make_unrestricted(4),
          make_exchangeable(3),
          make_exchangeable(5),
          make_toeplitz(3),
          make_toeplitz(4),
          make_circular(),
          make_factor(4, 1),
          make_factor(5, 2),
          make_factor(5, 2, LoadingConstraint::none),
          make_adaptivity_demo()};
}

inline std::string label(const CorrelationModel& m) {
  return m.name() + "(p=" + std::to_string(m.p()) + ",k=" +
         std::to_string(m.k()) + ")";
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace testing
