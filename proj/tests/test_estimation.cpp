#include <acsel/estimation.hpp>
#include <acsel/models.hpp>

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>

using namespace acsel;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

OptimizerOptions single_start() {
  OptimizerOptions o;
  o.restarts = 1;
  return o;
}

}  // namespace

TEST_CASE("white noise scale is the root mean square", "[estimation]") {
  const auto spec = ModelSpec::full(family::WhiteNoise{});
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto x = simulate(spec, make_params(spec, {0.7 * static_cast<double>(seed)}), 800, 0, seed);
    double s = 0.0;
    for (double v : x.values) s += v * v;
    s /= static_cast<double>(x.size());
    const auto fit = fit_qmle(spec, x);
    CHECK_THAT(fit.theta[0] * fit.theta[0], WithinRel(s, 1e-8));
  }
}

TEST_CASE("AR(2) estimate equals zero-padded least squares", "[estimation]") {
  const auto spec = ModelSpec::full(family::AR{2});
  const auto x = simulate(spec, make_params(spec, {1.0, 0.4, 0.4}), 2000, 1000, 8);
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    y(t) = x[static_cast<std::size_t>(t)];
    if (t >= 1) Z(t, 0) = x[static_cast<std::size_t>(t - 1)];
    if (t >= 2) Z(t, 1) = x[static_cast<std::size_t>(t - 2)];
  }
  const Eigen::Vector2d beta = (Z.transpose() * Z).ldlt().solve(Z.transpose() * y);
  const double s2 = (y - Z * beta).squaredNorm() / static_cast<double>(n);
  const auto fit = fit_qmle(spec, x);
  CHECK_THAT(fit.theta[1], WithinAbs(beta(0), 1e-4));
  CHECK_THAT(fit.theta[2], WithinAbs(beta(1), 1e-4));
  CHECK_THAT(fit.theta[0] * fit.theta[0], WithinRel(s2, 1e-4));
  CHECK(fit.convergence.converged);
}

TEST_CASE("GARCH(1,1) estimates cover the truth", "[estimation][slow]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const std::vector<double> truth{0.2, 0.4, 0.2};
  const auto theta = make_params(spec, truth);
  auto opts = single_start();
  opts.polish_rounds = 1;
  int all_in = 0, runs = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto x = simulate(spec, theta, 10000, 1000, seed);
    opts.seed = seed;
    const auto fit = fit_qmle(spec, x, opts);
    REQUIRE(fit.has_covariance);
    bool ok = true;
    for (std::size_t i = 0; i < 3; ++i)
      ok = ok && std::abs(fit.theta[i] - truth[i]) <= 3.0 * fit.std_errors[i];
    all_in += ok ? 1 : 0;
    ++runs;
  }
  CHECK(all_in >= 90);
}

TEST_CASE("fit invariants", "[estimation]") {
  const auto spec = ModelSpec::masked(family::GARCH{2, 1}, {true, true, false, true});
  const auto x = simulate(spec, make_params(spec, {0.1, 0.2, 0.0, 0.6}), 3000, 500, 4);
  const auto fit = fit_qmle(spec, x);
  CHECK(fit.theta[2] == 0.0);
  REQUIRE(fit.has_covariance);
  CHECK(fit.F_hat.isApprox(fit.F_hat.transpose(), 1e-12));
  CHECK(fit.G_hat.isApprox(fit.G_hat.transpose(), 1e-12));
  CHECK(fit.sandwich.isApprox(fit.sandwich.transpose(), 1e-12));
  Eigen::SelfAdjointEigenSolver<Matrix> es(fit.sandwich);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  CHECK(fit.std_errors.size() == 3);
  CHECK(fit.n == x.size());
  CHECK(fit.loglik == quasi_loglik(spec, fit.theta, x).total);
}

TEST_CASE("white noise sandwich variance", "[estimation]") {
  // var(sqrt(n)(s^2 - sigma^2)) = 2 sigma^4, i.e. sigma^2 / 2 for sigma
  const auto spec = ModelSpec::full(family::WhiteNoise{});
  const auto x = simulate(spec, make_params(spec, {1.4}), 10000, 0, 3);
  const auto fit = fit_qmle(spec, x);
  const double s = fit.theta[0];
  CHECK_THAT(fit.sandwich(0, 0), WithinRel(s * s / 2.0, 0.15));
  CHECK_THAT(fit.F_hat(0, 0), WithinRel(4.0 / (s * s), 0.05));
}

TEST_CASE("AR(1) sandwich variance", "[estimation]") {
  const auto spec = ModelSpec::full(family::AR{1});
  const double phi = 0.6;
  const auto x = simulate(spec, make_params(spec, {1.0, phi}), 10000, 1000, 12);
  const auto fit = fit_qmle(spec, x);
  CHECK_THAT(fit.sandwich(1, 1), WithinRel(1.0 - phi * phi, 0.15));
}

TEST_CASE("halving the difference step leaves curvature stable", "[estimation]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const auto theta = make_params(spec, {0.2, 0.3, 0.4});
  const auto x = simulate(spec, theta, 3000, 500, 15);
  OptimizerOptions a, b;
  b.fd_scale = a.fd_scale / 2.0;
  const auto sa = score_and_curvature(spec, theta, x, a);
  const auto sb = score_and_curvature(spec, theta, x, b);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK_THAT(sb.F_hat(i, j), WithinRel(sa.F_hat(i, j), 1e-3));
      CHECK_THAT(sb.G_hat(i, j), WithinRel(sa.G_hat(i, j), 1e-3));
    }
}

TEST_CASE("AR(1) gradient against the analytic score", "[estimation]") {
  const auto spec = ModelSpec::full(family::AR{1});
  const auto x = simulate(spec, make_params(spec, {1.0, 0.5}), 1000, 100, 2);
  const double s = 1.3, phi = 0.2;
  double gphi = 0.0, gs = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double r = x[t] - (t ? phi * x[t - 1] : 0.0);
    gphi += r * (t ? x[t - 1] : 0.0) / (s * s);
    gs += r * r / (s * s * s) - 1.0 / s;
  }
  const auto g = loglik_gradient(spec, make_params(spec, {s, phi}), x);
  CHECK_THAT(g[0], WithinRel(gs, 1e-5));
  CHECK_THAT(g[1], WithinRel(gphi, 1e-5));
}

TEST_CASE("more restarts never lower the optimum", "[estimation]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const auto x = simulate(spec, make_params(spec, {0.1, 0.15, 0.75}), 1500, 500, 33);
  OptimizerOptions one, five;
  one.restarts = 1;
  five.restarts = 5;
  const auto a = fit_qmle(spec, x, one);
  const auto b = fit_qmle(spec, x, five);
  CHECK(b.loglik >= a.loglik - 1e-9 * std::abs(a.loglik));
  CHECK(b.convergence.starts_run == 5);
}

TEST_CASE("seeded fits are reproducible", "[estimation]") {
  const auto spec = ModelSpec::full(family::ARMA{1, 1});
  const auto x = simulate(spec, make_params(spec, {1.0, 0.3, -0.5}), 1000, 500, 7);
  OptimizerOptions o;
  o.seed = 99;
  const auto a = fit_qmle(spec, x, o);
  const auto b = fit_qmle(spec, x, o);
  CHECK(a.theta.values == b.theta.values);
  CHECK(a.loglik == b.loglik);
  CHECK(a.std_errors == b.std_errors);
}

TEST_CASE("dropping a zero slot costs at most the tolerance", "[estimation]") {
  const auto small = ModelSpec::full(family::AR{2});
  const auto big = ModelSpec::full(family::AR{3});
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = simulate(small, make_params(small, {1.0, 0.4, 0.4}), 2000, 500, seed);
    const auto a = fit_qmle(small, x);
    const auto b = fit_qmle(big, x);
    CHECK(a.loglik <= b.loglik + 1e-8 * std::abs(b.loglik));
  }
}

TEST_CASE("moment start is admissible", "[estimation]") {
  for (const auto& fam : {ModelFamily{family::GARCH{2, 2}}, ModelFamily{family::ARMA{2, 2}},
                          ModelFamily{family::APARCH{1.5, 1, 1}},
                          ModelFamily{family::ArmaGarch{1, 1, 1, 1}},
                          ModelFamily{family::ArArchInf{3, 3.0, 10000}}}) {
    const auto spec = ModelSpec::full(fam);
    const auto g = ModelSpec::full(family::GARCH{1, 1});
    const auto x = simulate(g, make_params(g, {0.1, 0.1, 0.8}), 1000, 200, 1);
    const auto start = moment_start(spec, x, kDefaultMomentOrder);
    CHECK(validate_params(spec, start).valid);
  }
}

TEST_CASE("boundary optimum is flagged", "[estimation]") {
  // ARCH(1) weight pinned near zero on Gaussian noise
  const auto wn = ModelSpec::full(family::WhiteNoise{});
  const auto spec = ModelSpec::full(family::GARCH{1, 2});
  int flagged = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto x = simulate(wn, make_params(wn, {1.0}), 2000, 0, seed);
    flagged += fit_qmle(spec, x).convergence.boundary ? 1 : 0;
  }
  CHECK(flagged >= 3);
}

TEST_CASE("too short a series is an error", "[estimation]") {
  const auto spec = ModelSpec::full(family::ARMA{2, 2});
  CHECK_THROWS_AS(fit_qmle(spec, TimeSeries({1.0, 2.0, 0.5})), Error);
}
