#include "copula_rank/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "copula_rank/errors.hpp"

namespace copula_rank {

namespace {

// Midpoints of the 2^53 grid, so never 0 or 1.
double open_uniform(std::mt19937_64& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

Matrix cholesky_factor(const SymMatrix& r) {
  Eigen::LLT<Matrix> llt(r.mat());
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const Index p = r.dim();
  llt.compute(r.mat() + 1e-12 * Matrix::Identity(p, p));
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const double ev = min_eigenvalue(r);
  std::ostringstream msg;
  msg << "sample_copula: R is not positive definite (smallest eigenvalue "
      << ev << ")";
  throw SingularityError(msg.str(), ev);
}

}  // namespace

Matrix sample_copula(const SymMatrix& r, Index n, std::uint64_t seed,
                     std::uint64_t stream) {
  if (n < 1) throw DomainError("sample_copula: n must be at least 1");
  const Matrix l = cholesky_factor(r);
  const Index p = r.dim();

  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 gen(seq);

  Matrix e(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) e(i, j) = normal_quantile(open_uniform(gen));
  const Matrix z = e * l.transpose();

  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return z.unaryExpr([&](double x) {
    return std::clamp(normal_cdf(x), lo, hi);
  });
}

std::string margin_name(MarginKind k) {
  switch (k) {
    case MarginKind::uniform:
      return "uniform";
    case MarginKind::gaussian:
      return "gaussian";
    case MarginKind::exponential:
      return "exponential";
    case MarginKind::cauchy:
      return "cauchy";
    case MarginKind::user:
      return "user";
  }
  return "unknown";
}

MarginKind parse_margin(const std::string& s) {
  for (MarginKind k : {MarginKind::uniform, MarginKind::gaussian,
                       MarginKind::exponential, MarginKind::cauchy})
    if (margin_name(k) == s) return k;
  throw ConfigError("margins: unknown margin '" + s + "'");
}

MarginSpec MarginSpec::all(MarginKind kind) {
  if (kind == MarginKind::user)
    throw ConfigError("margins: a user margin needs a transform");
  return MarginSpec{{Margin{kind, {}}}};
}

const Margin& MarginSpec::for_column(Index j) const {
  static const Margin uniform{};
  if (columns.empty()) return uniform;
  if (columns.size() == 1) return columns.front();
  return columns.at(static_cast<std::size_t>(j));
}

Matrix apply_margins(const Matrix& u, const MarginSpec& spec) {
  if (spec.columns.size() > 1 &&
      static_cast<Index>(spec.columns.size()) != u.cols())
    throw ShapeError("apply_margins: one margin per column expected");
  Matrix out(u.rows(), u.cols());
  for (Index j = 0; j < u.cols(); ++j) {
    const Margin& m = spec.for_column(j);
    for (Index i = 0; i < u.rows(); ++i) {
      const double x = u(i, j);
      switch (m.kind) {
        case MarginKind::uniform:
          out(i, j) = x;
          break;
        case MarginKind::gaussian:
          out(i, j) = normal_quantile(x);
          break;
        case MarginKind::exponential:
          out(i, j) = -std::log1p(-x);
          break;
        case MarginKind::cauchy:
          out(i, j) = std::tan(std::numbers::pi * (x - 0.5));
          break;
        case MarginKind::user:
          if (!m.transform)
            throw ConfigError("margins: user margin without a transform");
          out(i, j) = m.transform(x);
          break;
      }
    }
  }
  return out;
}

}  // namespace copula_rank
