#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "copula_rank/numcore.hpp"

namespace copula_rank {

/// n draws from the Gaussian copula with correlation R, as an n x p matrix in
/// (0,1)^p. The stream (seed, stream) fully determines the output.
/// Throws SingularityError if R is not positive definite after one jitter
/// retry.
Matrix sample_copula(const SymMatrix& r, Index n, std::uint64_t seed,
                     std::uint64_t stream = 0);

enum class MarginKind { uniform, gaussian, exponential, cauchy, user };

std::string margin_name(MarginKind k);
MarginKind parse_margin(const std::string& s);

struct Margin {
  MarginKind kind = MarginKind::uniform;
  std::function<double(double)> transform;  // MarginKind::user only
};

/// One margin per column; a single entry applies to every column and an
/// empty spec means uniform margins.
struct MarginSpec {
  std::vector<Margin> columns;

  static MarginSpec all(MarginKind kind);
  const Margin& for_column(Index j) const;
};

/// Applies the quantile transform of each column's margin.
Matrix apply_margins(const Matrix& u, const MarginSpec& spec);

}  // namespace copula_rank
