#include <acsel/diagnostics.hpp>
#include <acsel/models.hpp>

#include <catch_amalgamated.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace acsel;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

FitResult at_truth(const ModelSpec& spec, const ParamVector& theta, std::size_t n) {
  FitResult f;
  f.spec = spec;
  f.theta = theta;
  f.n = n;
  return f;
}

double chi2_density(double x, double k) {
  return std::exp((k / 2.0 - 1.0) * std::log(x) - x / 2.0 - (k / 2.0) * std::log(2.0) -
                  std::lgamma(k / 2.0));
}

OptimizerOptions mc_opts(std::uint64_t seed) {
  auto o = OptimizerOptions::fast();
  o.seed = seed;
  return o;
}

}  // namespace

TEST_CASE("chi2_sf closed forms", "[diagnostics][chi2]") {
  for (double k : {1.0, 2.0, 3.0, 6.0}) CHECK(chi2_sf(0.0, k) == 1.0);
  for (double x : {1.0, 5.0, 20.0}) CHECK_THAT(chi2_sf(x, 2.0), WithinAbs(std::exp(-x / 2.0), 1e-12));
  CHECK_THROWS_AS(chi2_sf(-1.0, 3.0), InvalidParameters);
  CHECK_THROWS_AS(chi2_sf(1.0, 0.0), InvalidParameters);
}

TEST_CASE("chi2_sf against integrated density", "[diagnostics][chi2]") {
  using boost::math::quadrature::gauss_kronrod;
  CHECK_THAT(chi2_sf(7.8147, 3.0), WithinAbs(0.05, 5e-5));
  for (double k : {1.0, 3.0, 4.0, 6.0})
    for (double x : {0.5, 2.0, 7.8147, 12.6}) {
      const double tail = gauss_kronrod<double, 61>::integrate(
          [k](double t) { return chi2_density(t, k); }, x, std::numeric_limits<double>::infinity(),
          15, 1e-13);
      CHECK_THAT(chi2_sf(x, k), WithinAbs(tail, 1e-9));
    }
}

TEST_CASE("chi2_sf is strictly decreasing", "[diagnostics][chi2]") {
  for (double k : {1.0, 3.0, 6.0}) {
    double prev = 1.0;
    for (double x = 0.25; x < 40.0; x += 0.25) {
      const double p = chi2_sf(x, k);
      CHECK(p < prev);
      prev = p;
    }
  }
}

TEST_CASE("correlogram hand case", "[diagnostics][correlogram]") {
  const double r2 = std::sqrt(2.0);
  const auto c = squared_residual_correlogram({{r2, 0.0, -r2, 0.0}}, 1);
  CHECK_THAT(c.gamma[0], WithinAbs(1.0, 1e-15));
  CHECK_THAT(c.gamma[1], WithinAbs(-0.75, 1e-15));
  CHECK_THAT(c.rho[0], WithinAbs(-0.75, 1e-15));
  CHECK_THROWS_AS(squared_residual_correlogram({{1.0, 1.0, 1.0, 1.0}}, 2), DegenerateResiduals);
  CHECK_THROWS_AS(squared_residual_correlogram({{1.0, 2.0}}, 2), InvalidParameters);
}

TEST_CASE("correlogram equals its prefix-sum form", "[diagnostics][correlogram]") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> e(300 + 17 * rep);
    for (auto& v : e) v = nd(rng);
    const std::size_t K = 6;
    const auto c = squared_residual_correlogram({e}, K);
    for (std::size_t k = 0; k <= K; ++k) {
      std::vector<double> prod(e.size() - k), prefix(e.size() - k);
      for (std::size_t t = k; t < e.size(); ++t)
        prod[t - k] = (e[t] * e[t] - 1.0) * (e[t - k] * e[t - k] - 1.0);
      std::partial_sum(prod.begin(), prod.end(), prefix.begin());
      CHECK(c.gamma[k] == prefix.back() / static_cast<double>(e.size()));
    }
  }
}

TEST_CASE("correlogram of iid noise is small", "[diagnostics][correlogram]") {
  int ok = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto rng = make_rng(500 + s);
    std::normal_distribution<double> nd;
    std::vector<double> e(10000);
    for (auto& v : e) v = nd(rng);
    const auto c = squared_residual_correlogram({e}, 6);
    double m = 0.0;
    for (double r : c.rho) m = std::max(m, std::abs(r));
    ok += m <= 0.05 ? 1 : 0;
  }
  CHECK(ok >= 95);
}

TEST_CASE("solve_spd", "[diagnostics][linalg]") {
  const Vector b = Vector::LinSpaced(4, -1.0, 2.0);
  CHECK(solve_spd(Matrix::Identity(4, 4), b).x.col(0).isApprox(b));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 4.0;
  const auto s = solve_spd(d, Vector(Eigen::Vector2d(2.0, 8.0)));
  CHECK_THAT(s.x(0, 0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(s.x(1, 0), WithinAbs(2.0, 1e-15));
  CHECK_FALSE(s.regularized);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 10; ++rep) {
    Matrix B(6, 6);
    for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
    const Matrix A = B.transpose() * B + Matrix::Identity(6, 6);
    Vector r(6);
    for (auto& v : r) v = nd(rng);
    const auto sol = solve_spd(A, r);
    CHECK((A * sol.x.col(0) - r).lpNorm<Eigen::Infinity>() <= 1e-8);
  }

  Matrix singular = Matrix::Zero(2, 2);
  singular(0, 0) = 1.0;
  CHECK(solve_spd(singular, Vector(Eigen::Vector2d(1.0, 0.0))).regularized);
  Matrix neg = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(solve_spd(neg, Vector(Eigen::Vector2d(1.0, 1.0))), SingularMatrix);
}

TEST_CASE("quadratic statistic properties", "[diagnostics][portmanteau]") {
  const Vector zero = Vector::Zero(3);
  CHECK(quadratic_statistic(zero, Matrix::Identity(3, 3), 500).Q == 0.0);
  CHECK(chi2_sf(quadratic_statistic(zero, Matrix::Identity(3, 3), 500).Q, 3.0) == 1.0);

  Vector rho(4);
  rho << 0.05, -0.02, 0.03, 0.01;
  CHECK_THAT(quadratic_statistic(rho, Matrix::Identity(4, 4), 1000).Q,
             WithinRel(1000.0 * rho.squaredNorm(), 1e-14));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  Matrix B(4, 4);
  for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
  const Matrix V = B.transpose() * B + Matrix::Identity(4, 4);
  const double q = quadratic_statistic(rho, V, 1000).Q;
  std::vector<int> perm{0, 1, 2, 3};
  while (std::next_permutation(perm.begin(), perm.end())) {
    Eigen::PermutationMatrix<4> P;
    for (int i = 0; i < 4; ++i) P.indices()(i) = perm[static_cast<std::size_t>(i)];
    const Vector pr = P * rho;
    const Matrix pv = P * V * P.transpose();
    CHECK_THAT(quadratic_statistic(pr, pv, 1000).Q, WithinRel(q, 1e-12));
  }
}

TEST_CASE("ARCH shortcut hand case", "[diagnostics][portmanteau]") {
  const std::vector<double> rho{0.5, 0.1, 0.2};
  CHECK_THAT(arch_statistic(rho, 100, 1), WithinAbs(5.0, 1e-12));
  CHECK(arch_statistic(std::vector<double>{0.0, 0.0, 0.0}, 100, 1) == 0.0);
}

TEST_CASE("homoscedastic fits have zero J columns for mean slots", "[diagnostics][V]") {
  const auto spec = ModelSpec::full(family::AR{2});
  const auto theta = make_params(spec, {1.0, 0.4, 0.4});
  const auto x = simulate(spec, theta, 2000, 500, 1);
  const auto fit = fit_qmle(spec, x);
  const auto v = estimate_V(fit, x, 3);
  CHECK(v.J_hat.col(1).isZero(0.0));
  CHECK(v.J_hat.col(2).isZero(0.0));
  CHECK(v.V_hat.isApprox(v.V_hat.transpose()));
}

TEST_CASE("ARCH V is near identity beyond the order", "[diagnostics][V]") {
  const auto spec = ModelSpec::full(family::ARCH{2});
  const auto theta = make_params(spec, {0.2, 0.4, 0.2});
  const auto x = simulate(spec, theta, 50000, 1000, 3);
  const auto v = estimate_V(at_truth(spec, theta, x.size()), x, 6);
  CHECK(v.V_hat(0, 0) < 0.5);
  for (Eigen::Index k = 2; k < 6; ++k) {
    CHECK(std::abs(v.V_hat(k, k) - 1.0) < 0.1);
    for (Eigen::Index j = 2; j < 6; ++j)
      if (j != k) CHECK(std::abs(v.V_hat(k, j)) < 0.1);
  }
  // J itself decays with the lag rather than vanishing
  for (Eigen::Index k = 3; k < 6; ++k)
    CHECK(v.J_hat.row(k).norm() < v.J_hat.row(k - 1).norm());
}

TEST_CASE("GARCH V is positive definite at the truth", "[diagnostics][V][slow]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const auto theta = make_params(spec, {0.2, 0.4, 0.2});
  int pd = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto x = simulate(spec, theta, 10000, 1000, 700 + s);
    const auto v = estimate_V(at_truth(spec, theta, x.size()), x, 3);
    Eigen::LLT<Matrix> llt(v.V_hat);
    pd += llt.info() == Eigen::Success ? 1 : 0;
  }
  CHECK(pd == 100);
}

TEST_CASE("identity form is Box-Pierce", "[diagnostics][portmanteau]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const auto theta = make_params(spec, {0.2, 0.4, 0.2});
  const auto x = simulate(spec, theta, 2000, 500, 9);
  const auto fit = fit_qmle(spec, x);
  const auto rep = portmanteau(fit, x, 3, VarianceForm::Identity);
  double s = 0.0;
  for (double r : rep.rho.rho) s += r * r;
  CHECK_THAT(rep.Q, WithinRel(2000.0 * s, 1e-12));
  CHECK(rep.df == 3);
  CHECK_THAT(rep.p_value, WithinRel(chi2_sf(rep.Q, 3.0), 1e-14));
}

TEST_CASE("GARCH(1,1) test size", "[diagnostics][portmanteau][slow]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const auto theta = make_params(spec, {0.02, 0.1, 0.88});
  int rejects = 0, done = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto x = simulate(spec, theta, 2273, 1000, 9000 + s);
    try {
      const auto fit = fit_qmle(spec, x, mc_opts(s));
      rejects += portmanteau(fit, x, 3).rejects(0.05) ? 1 : 0;
      ++done;
    } catch (const Error&) {
    }
  }
  REQUIRE(done >= 190);
  const double size = 100.0 * rejects / done;
  CHECK(size >= 2.0);
  CHECK(size <= 9.0);
}

TEST_CASE("ARCH(2) shortcut size", "[diagnostics][portmanteau][slow]") {
  const auto spec = ModelSpec::full(family::ARCH{2});
  const auto theta = make_params(spec, {0.2, 0.4, 0.2});
  int rejects = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto x = simulate(spec, theta, 2000, 1000, 4000 + s);
    const auto fit = fit_qmle(spec, x, mc_opts(s));
    rejects += portmanteau_arch(fit, x, 2, 6).rejects(0.05) ? 1 : 0;
  }
  const double size = rejects / 10.0;
  CHECK(size >= 2.0);
  CHECK(size <= 9.0);
}

TEST_CASE("misspecified AR fit is rejected", "[diagnostics][portmanteau][slow]") {
  // AR(3) data tested as AR(2)
  const auto truth = ModelSpec::full(family::AR{3});
  const auto null = ModelSpec::full(family::AR{2});
  const auto theta = make_params(truth, {1.0, 0.2, 0.2, 0.4});
  int rejects = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto x = simulate(truth, theta, 2000, 1000, 6000 + s);
    const auto fit = fit_qmle(null, x, mc_opts(s));
    rejects += portmanteau(fit, x, 3).rejects(0.05) ? 1 : 0;
  }
  CHECK(rejects >= 10);
}

TEST_CASE("ARCH shortcut guards", "[diagnostics][portmanteau]") {
  const auto spec = ModelSpec::full(family::ARCH{2});
  const auto theta = make_params(spec, {0.2, 0.4, 0.2});
  const auto x = simulate(spec, theta, 1000, 500, 1);
  const auto fit = fit_qmle(spec, x);
  CHECK_THROWS_AS(portmanteau_arch(fit, x, 2, 2), InvalidParameters);
  CHECK_THROWS_AS(portmanteau_arch(fit, x, 1, 4), InvalidParameters);
  const auto rep = portmanteau_arch(fit, x, 2, 4);
  CHECK(rep.df == 2);
  CHECK(rep.variant == PortmanteauVariant::ArchSpecial);
  CHECK_THAT(rep.Q, WithinRel(arch_statistic(rep.rho.rho, 1000, 2), 1e-15));
}

TEST_CASE("additive and subtractive forms share the outer term", "[diagnostics][V]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const auto theta = make_params(spec, {0.2, 0.4, 0.2});
  const auto x = simulate(spec, theta, 3000, 500, 2);
  const auto fit = fit_qmle(spec, x);
  const auto a = estimate_V(fit, x, 3, VarianceForm::Additive);
  const auto s = estimate_V(fit, x, 3, VarianceForm::Subtractive);
  const auto i = estimate_V(fit, x, 3, VarianceForm::Identity);
  CHECK(i.V_hat.isIdentity(0.0));
  CHECK(a.J_hat == s.J_hat);
  // A - S = 3 J F^-1 J' / (mu4 - 1)
  const Matrix W = fit.F_hat.lu().solve(a.J_hat.transpose());
  const Matrix cross = a.J_hat * W / (a.mu4_hat - 1.0);
  const Matrix diff = a.V_hat - s.V_hat;
  const Matrix expect = 1.5 * (cross + cross.transpose());
  CHECK((diff - expect).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + expect.cwiseAbs().maxCoeff()));
}
