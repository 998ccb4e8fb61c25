#include <doctest.h>

#include <cmath>
#include <random>

#include "copula_rank/errors.hpp"
#include "copula_rank/models.hpp"
#include "copula_rank/numcore.hpp"
#include "copula_rank/sampler.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace copula_rank;
using testing::random_sym;

TEST_CASE("normal functions at symmetric points") {
  CHECK(std_gauss(GaussKind::quantile, 0.5) == 0.0);
  CHECK(std_gauss(GaussKind::cdf, 0.0) == 0.5);
  CHECK(std_gauss(GaussKind::density, 0.0) ==
        doctest::Approx(0.3989422804014327).epsilon(1e-15));
}

TEST_CASE("quantile agrees with bisection on an erf series") {
  const double ref = oracle::quantile_bisection(0.975);
  CHECK(std::abs(ref - 1.959964) < 1e-6);
  CHECK(std::abs(normal_quantile(0.975) - ref) < 1e-6);
  for (double p : {1e-4, 0.01, 0.1, 0.3, 0.42, 0.5, 0.6, 0.9, 0.99, 0.9999}) {
    CAPTURE(p);
    CHECK(std::abs(normal_quantile(p) - oracle::quantile_bisection(p)) < 1e-12);
  }
}

TEST_CASE("cdf agrees with the erf series") {
  for (double x = -4.0; x <= 4.0; x += 0.25) {
    CAPTURE(x);
    CHECK(std::abs(normal_cdf(x) - static_cast<double>(oracle::cdf_series(x))) <
          1e-15);
  }
}

TEST_CASE("quantile rejects arguments outside (0,1)") {
  for (double p : {0.0, 1.0, -0.1, 1.5, std::nan("")}) {
    CAPTURE(p);
    CHECK_THROWS_AS(normal_quantile(p), DomainError);
    CHECK_THROWS_AS(std_gauss(GaussKind::quantile, p), DomainError);
  }
}

TEST_CASE("quantile(cdf(x)) round trip") {
  // Below x = 5 the 1e-9 target is attainable in double precision.
  for (int i = -6000; i <= 5000; ++i) {
    const double x = i / 1000.0;
    CAPTURE(x);
    REQUIRE(std::abs(normal_quantile(normal_cdf(x)) - x) <= 1e-9);
  }
  // Above, cdf(x) lies within a few ulps of 1; the round trip can only be
  // as good as that rounding propagated through the quantile slope.
  for (int i = 5000; i <= 6000; ++i) {
    const double x = i / 1000.0;
    CAPTURE(x);
    const double limit = 1e-9 + 0x1.0p-53 / normal_pdf(x);
    REQUIRE(std::abs(normal_quantile(normal_cdf(x)) - x) <= limit);
  }
  // The quantile itself is symmetric, so the lower-tail accuracy carries
  // over to the upper tail whenever 1 - p is exact.
  for (double p : {1e-15, 1e-10, 1e-5, 0.01, 0.2}) {
    CAPTURE(p);
    CHECK(normal_quantile(1.0 - p) == doctest::Approx(-normal_quantile(
                                          1.0 - (1.0 - p))).epsilon(1e-15));
  }
}

TEST_CASE("quantile deep in the lower tail") {
  for (double x : {-8.0, -10.0, -20.0, -30.0}) {
    CAPTURE(x);
    const double p = normal_cdf(x);
    CHECK(normal_quantile(p) == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("SymMatrix construction") {
  Matrix a(2, 3);
  a.setZero();
  CHECK_THROWS_AS(SymMatrix{a}, ShapeError);
  Matrix b(2, 2);
  b << 1, 2, 3, 4;
  CHECK_THROWS_AS(SymMatrix{b}, ShapeError);
  b(1, 0) = 2.0;
  const SymMatrix s(b);
  CHECK(s(0, 1) == s(1, 0));
  CHECK(s.dim() == 2);
}

TEST_CASE("InnerProductContext validation") {
  Matrix r = Matrix::Identity(3, 3);
  r(0, 0) = 2.0;
  CHECK_THROWS_AS(InnerProductContext{SymMatrix(r)}, DomainError);
  Matrix q = Matrix::Constant(3, 3, -0.6);
  q.diagonal().setOnes();
  try {
    InnerProductContext ctx{SymMatrix(q)};
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(e.estimate() == doctest::Approx(1.0 - 2.0 * 0.6));
  }
}

TEST_CASE("theta_inner examples") {
  for (Index p : {2, 3, 5}) {
    const InnerProductContext ctx(SymMatrix::identity(p));
    CHECK(theta_inner(SymMatrix::identity(p), SymMatrix::identity(p), ctx) ==
          doctest::Approx(p / 2.0));
  }
  std::mt19937_64 rng(1);
  const InnerProductContext ctx(make_exchangeable(4)->r_of_theta(testing::vec({0.3})));
  CHECK(theta_inner(SymMatrix::zero(4), random_sym(4, rng), ctx) == 0.0);

  Matrix ones = Matrix::Ones(3, 3);
  ones.diagonal().setZero();
  const InnerProductContext id3(SymMatrix::identity(3));
  CHECK(theta_inner(SymMatrix(ones), SymMatrix(ones), id3) == doctest::Approx(3.0));
  CHECK_THROWS_AS(theta_inner(SymMatrix::identity(2), SymMatrix::identity(3), id3),
                  ShapeError);
}

TEST_CASE("theta_inner is symmetric, positive and matches explicit loops") {
  std::mt19937_64 rng(7);
  const auto model = make_toeplitz(5);
  for (int rep = 0; rep < 50; ++rep) {
    const SymMatrix r = model->r_of_theta(testing::random_theta(*model, rng, 0.3));
    const InnerProductContext ctx(r);
    const SymMatrix a = random_sym(5, rng), b = random_sym(5, rng);
    const double ab = theta_inner(a, b, ctx), ba = theta_inner(b, a, ctx);
    CHECK(std::abs(ab - ba) <= 1e-12 * (1.0 + std::abs(ab)));
    CHECK(theta_inner(a, a, ctx) > 0.0);
    CHECK(ab == doctest::Approx(oracle::inner_loops(a.mat(), b.mat(), r.mat()))
                    .epsilon(1e-12));
  }
}

TEST_CASE("gram examples") {
  const auto ex = make_exchangeable(3);
  const SymMatrix rd = ex->r_dot(testing::vec({0.0}), 0);
  const InnerProductContext id3(SymMatrix::identity(3));
  const std::vector<SymMatrix> basis{rd};
  CHECK(gram(basis, id3)(0, 0) == doctest::Approx(3.0));

  std::mt19937_64 rng(3);
  const std::vector<SymMatrix> with_zero{random_sym(3, rng), SymMatrix::zero(3),
                                         random_sym(3, rng)};
  const Matrix g = gram(with_zero, id3);
  CHECK(g.row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gram of the unrestricted p=2 score against the closed form and FD") {
  const auto model = make_unrestricted(2);
  for (double r : {-0.8, -0.3, 0.0, 0.25, 0.6, 0.9}) {
    CAPTURE(r);
    const Vector t = testing::vec({r});
    const SymMatrix rr = model->r_of_theta(t);
    const Matrix s = rr.mat().inverse();
    const SymMatrix sdot = SymMatrix::symmetrized(
        -(s * model->r_dot(t, 0).mat() * s));
    const std::vector<SymMatrix> basis{-sdot};
    const double got = gram(basis, InnerProductContext(rr))(0, 0);
    const double closed = (1 + r * r) / ((1 - r * r) * (1 - r * r));
    const double fd = oracle::fd_fisher_1d(
        [](double x) {
          Matrix m(2, 2);
          m << 1, x, x, 1;
          return m;
        },
        r);
    CHECK(got == doctest::Approx(closed).epsilon(1e-12));
    CHECK(got == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("gram matches pairwise inner products and is PSD") {
  std::mt19937_64 rng(11);
  const auto model = make_exchangeable(4);
  for (int rep = 0; rep < 20; ++rep) {
    const InnerProductContext ctx(model->r_of_theta(testing::random_theta(*model, rng)));
    std::vector<SymMatrix> basis;
    for (int m = 0; m < 4; ++m) basis.push_back(random_sym(4, rng));
    basis.push_back(basis[0] * 2.0 - basis[1]);  // dependent
    const Matrix g = gram(basis, ctx);
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = 0; j < basis.size(); ++j)
        CHECK(g(i, j) == doctest::Approx(theta_inner(basis[i], basis[j], ctx))
                             .epsilon(1e-13));
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * (1.0 + es.eigenvalues().maxCoeff()));
  }
}

TEST_CASE("span_residual basics") {
  std::mt19937_64 rng(5);
  const auto model = make_toeplitz(4);
  const Vector t = testing::vec({0.2, 0.1, -0.1});
  std::vector<SymMatrix> basis;
  for (Index m = 0; m < 3; ++m) basis.push_back(model->r_dot(t, m));

  const SpanResult self = span_residual(basis[0], basis);
  CHECK(self.residual_norm < 1e-14);
  CHECK(self.coefficients(0) == doctest::Approx(1.0));
  CHECK(std::abs(self.coefficients(1)) < 1e-14);
  CHECK(std::abs(self.coefficients(2)) < 1e-14);
  CHECK(self.rank == 3);

  const SymMatrix m = random_sym(4, rng);
  const SpanResult sr = span_residual(m, basis);
  CHECK(sr.residual_norm >= m.mat().diagonal().norm() - 1e-12);

  const SpanResult empty = span_residual(m, {});
  CHECK(empty.residual_norm == doctest::Approx(m.frobenius()));
  CHECK(empty.coefficients.size() == 0);

  // Rank-deficient basis: a duplicated generator does not change the fit.
  std::vector<SymMatrix> dup = basis;
  dup.push_back(basis[1] * 3.0);
  const SpanResult d = span_residual(m, dup);
  CHECK(d.rank == 3);
  CHECK(d.residual_norm == doctest::Approx(sr.residual_norm).epsilon(1e-12));
}

TEST_CASE("span_residual is invariant under adding span elements") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<SymMatrix> basis;
    for (int m = 0; m < 3; ++m) basis.push_back(random_sym(4, rng));
    const SymMatrix m = random_sym(4, rng);
    SymMatrix shifted = m;
    for (const auto& b : basis) shifted = shifted + n01(rng) * b;
    CHECK(std::abs(span_residual(shifted, basis).residual_norm -
                   span_residual(m, basis).residual_norm) <= 1e-9);
  }
}

TEST_CASE("quadratic forms: covariance equals the inner product (MC)") {
  const auto model = make_toeplitz(3);
  const SymMatrix r = model->r_of_theta(testing::vec({0.5, 0.3}));
  const InnerProductContext ctx(r);
  std::mt19937_64 rng(21);
  const SymMatrix a = random_sym(3, rng), b = random_sym(3, rng);

  const Index n = 1000000;
  const Matrix z =
      sample_copula(r, n, 424242).unaryExpr([](double u) { return normal_quantile(u); });
  Vector qa(n), qb(n);
  for (Index i = 0; i < n; ++i) {
    const Vector zi = z.row(i).transpose();
    qa(i) = 0.5 * zi.dot(a.mat() * zi);
    qb(i) = 0.5 * zi.dot(b.mat() * zi);
  }
  const Vector ca = qa.array() - qa.mean(), cb = qb.array() - qb.mean();
  const Vector prod = ca.cwiseProduct(cb);
  const double cov = prod.sum() / static_cast<double>(n - 1);
  const double se = std::sqrt((prod.array() - cov).square().sum() /
                              static_cast<double>(n - 1) / static_cast<double>(n));
  const double expected = theta_inner(a, b, ctx);
  CAPTURE(cov);
  CAPTURE(expected);
  CAPTURE(se);
  CHECK(std::abs(cov - expected) <= 3.0 * se);
}

TEST_CASE("spd_inverse reports the offending eigenvalue") {
  Matrix a(2, 2);
  a << 1, 2, 2, 1;
  try {
    spd_inverse(a, "test");
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(e.estimate() == doctest::Approx(-1.0));
  }
}
