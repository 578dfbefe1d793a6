#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "labeldist/errors.hpp"
#include "labeldist/losses.hpp"
#include "oracles.hpp"

using namespace labeldist;

namespace {

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

TEST_CASE("ccc examples") {
  const std::vector<double> a{1, 2, 3}, b{2, 3, 4}, c{3, 2, 1};
  CHECK(ccc(a, a) == doctest::Approx(1.0));
  CHECK(ccc(a, b) == doctest::Approx(4.0 / 7.0).epsilon(1e-14));
  CHECK(ccc(a, c) < 0.0);
  CHECK(ccc(std::vector<double>{2, 2, 2}, std::vector<double>{2, 2, 2}) == 1.0);
  CHECK(ccc(std::vector<double>{2, 2, 2}, a) == 0.0);
  CHECK(ccc(a, std::vector<double>{5, 5, 5}) == 0.0);
  CHECK_THROWS_AS(ccc(a, std::vector<double>{1, 2}), ShapeError);
  CHECK_THROWS_AS(ccc(std::vector<double>{1}, std::vector<double>{1}), ShapeError);
}

TEST_CASE("ccc properties") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_series(rng, 40), y = random_series(rng, 40);
    for (double& v : y) v = 0.3 * v + 0.8;
    const double value = ccc(x, y);
    CHECK(value >= -1.0);
    CHECK(value <= 1.0);
    CHECK(value == doctest::Approx(oracle::naive_ccc(x, y)).epsilon(1e-12));

    std::vector<std::size_t> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> xp, yp;
    for (std::size_t i : perm) xp.push_back(x[i]), yp.push_back(y[i]);
    CHECK(ccc(xp, yp) == doctest::Approx(value).epsilon(1e-12));
  }
}

TEST_CASE("ccc gradient matches central differences") {
  std::mt19937_64 rng(12);
  const double h = 1e-5;
  for (int trial = 0; trial < 25; ++trial) {
    auto x = random_series(rng, 12), y = random_series(rng, 12);
    const CccGradient g = ccc_with_gradient(x, y);
    CHECK(g.value == doctest::Approx(ccc(x, y)));
    double worst = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
      auto xp = x, xm = x, yp = y, ym = y;
      xp[t] += h, xm[t] -= h, yp[t] += h, ym[t] -= h;
      worst = std::max(worst, rel_err(g.d_truth[t], (ccc(xp, y) - ccc(xm, y)) / (2 * h)));
      worst = std::max(worst, rel_err(g.d_estimate[t], (ccc(x, yp) - ccc(x, ym)) / (2 * h)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("kl_gaussian") {
  CHECK(kl_gaussian({0, 1}, {0, 1}) == 0.0);
  CHECK(kl_gaussian({0, 1}, {1, 1}) == doctest::Approx(0.5));
  CHECK(kl_gaussian({0, 0.5}, {0, 1}) == doctest::Approx(std::log(2.0) + 0.125 - 0.5).epsilon(1e-14));
  CHECK_THROWS_AS(kl_gaussian({0, 0}, {0, 1}), DomainError);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> mu(-2, 2), sd(0.1, 3);
  for (int i = 0; i < 200; ++i) {
    const GaussianParams a{mu(rng), sd(rng)}, b{mu(rng), sd(rng)};
    CHECK(kl_gaussian(a, b) > 0.0);
    const double quad = oracle::integrate_line(
        [&](double y) {
          const double la = oracle::normal_log_density(a.mu, a.sigma, y);
          return std::exp(la) * (la - oracle::normal_log_density(b.mu, b.sigma, y));
        },
        a.mu);
    CHECK(kl_gaussian(a, b) == doctest::Approx(quad).epsilon(1e-8));
  }
}

TEST_CASE("kl_t matches the quadrature KL of the same densities") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> nu(2.5, 60), mu(-2, 2), sd(0.1, 3);
  for (int i = 0; i < 60; ++i) {
    const StudentTParams t{nu(rng), mu(rng), sd(rng)};
    const GaussianParams g{mu(rng), sd(rng)};
    CAPTURE(t.nu);
    CHECK(std::abs(kl_t(t, g) - oracle::kl_t_normal(t.nu, t.mu, t.sigma, g.mu, g.sigma)) < 1e-5);
  }
  CHECK_THROWS_AS(kl_t({2.0, 0, 1}, {0, 1}), UndefinedMomentError);
  CHECK_THROWS_AS(kl_label(LabelFamily::kStudentT, 2.0, 0, 1, 0, 1), UndefinedMomentError);
}

TEST_CASE("label t loss: minimiser over the label spread") {
  auto argmin_s = [](double nu, double s_hat) {
    return oracle::argmin(
        [&](double s) { return kl_label(LabelFamily::kStudentT, nu, 0.0, s, 0.0, s_hat); }, 0.05,
        4.0);
  };
  CHECK(argmin_s(6.0, 0.5) == doctest::Approx(0.61).epsilon(0.01 / 0.61));
  CHECK(argmin_s(6.0, 1.0) - 1.0 == doctest::Approx(0.22).epsilon(0.02 / 0.22));
  for (double nu : {3.0, 4.0, 6.0, 12.0, 30.0})
    for (double s_hat : {0.25, 0.5, 1.0})
      CHECK(argmin_s(nu, s_hat) ==
            doctest::Approx(scaled_std({nu, 0.0, s_hat})).epsilon(1e-5));
  const double gauss = oracle::argmin(
      [](double s) { return kl_label(LabelFamily::kGaussian, 30.0, 0.0, s, 0.0, 1.0); }, 0.05, 4.0);
  CHECK(std::abs(argmin_s(30.0, 1.0) - gauss) < 0.04);
}

TEST_CASE("label t loss near the Gaussian limit") {
  const double t = kl_label(LabelFamily::kStudentT, 1000.0, 0.0, 1.0, 0.3, 1.1);
  const double g = kl_gaussian({0.0, 1.0}, {0.3, 1.1});
  CHECK(std::abs(t - g) < 1e-2);
}

TEST_CASE("label t loss exceeds the Gaussian loss for small spreads") {
  for (double nu : {4.0, 6.0, 12.0, 30.0})
    for (double s_hat : {0.5, 1.0})
      for (double r : {0.1, 0.25, 0.5, 0.75, 1.0})
        for (double dm : {0.0, 0.3}) {
          const double s = r * s_hat;
          CHECK(kl_label(LabelFamily::kStudentT, nu, dm, s, 0.0, s_hat) >
                kl_label(LabelFamily::kGaussian, nu, dm, s, 0.0, s_hat));
        }
}

TEST_CASE("KL argument order matters") {
  const StudentTParams t{4.0, 0.0, 0.7};
  const GaussianParams g{0.2, 0.5};
  const double forward = kl_t(t, g);
  const double reverse = oracle::integrate_line(
      [&](double y) {
        const double lg = oracle::normal_log_density(g.mu, g.sigma, y);
        return std::exp(lg) * (lg - oracle::t_log_density(t.nu, t.mu, t.sigma, y));
      },
      g.mu);
  CHECK(std::abs(forward - reverse) > 1e-2);
  CHECK(kl_gaussian({0, 1}, {0, 2}) != doctest::Approx(kl_gaussian({0, 2}, {0, 1})));
}

TEST_CASE("KL partial derivatives match central differences") {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> nu(2.5, 40), mu(-1.5, 1.5), sd(0.2, 2);
  const double h = 1e-5;
  for (LabelFamily fam : {LabelFamily::kGaussian, LabelFamily::kStudentT})
    for (int i = 0; i < 25; ++i) {
      const double n = nu(rng), m = mu(rng), s = sd(rng), mh = mu(rng), sh = sd(rng);
      const KlTerms k = kl_label_terms(fam, n, m, s, mh, sh);
      auto f = [&](double a, double b, double c, double d) { return kl_label(fam, n, a, b, c, d); };
      CHECK(rel_err(k.d_truth_mu, (f(m + h, s, mh, sh) - f(m - h, s, mh, sh)) / (2 * h)) < 1e-4);
      CHECK(rel_err(k.d_truth_spread, (f(m, s + h, mh, sh) - f(m, s - h, mh, sh)) / (2 * h)) < 1e-4);
      CHECK(rel_err(k.d_est_mu, (f(m, s, mh + h, sh) - f(m, s, mh - h, sh)) / (2 * h)) < 1e-4);
      CHECK(rel_err(k.d_est_sigma, (f(m, s, mh, sh + h) - f(m, s, mh, sh - h)) / (2 * h)) < 1e-4);
    }
}

TEST_CASE("elbo_bbb") {
  const DrawTerms single{-1.0, -2.0, -3.0};
  CHECK(elbo_bbb(std::span(&single, 1)) == doctest::Approx(4.0));
  CHECK_THROWS_AS(elbo_bbb({}), std::invalid_argument);

  // q equal to the prior: log q - log P vanishes draw by draw.
  std::mt19937_64 rng(16);
  std::normal_distribution<double> g;
  std::vector<DrawTerms> draws;
  for (int i = 0; i < 100; ++i) {
    const double w = g(rng);
    const double lp = gaussian_logpdf({0, 1}, w);
    draws.push_back({lp, lp, 0.0});
  }
  CHECK(elbo_bbb(draws) == doctest::Approx(0.0));
}

TEST_CASE("composite_loss") {
  CHECK(composite_loss(1.0, 0.0, 5.0, {0.0, LabelFamily::kStudentT}) == 0.0);
  CHECK(composite_loss(0.5, 2.0, 3.0, {1.0, LabelFamily::kStudentT}) == doctest::Approx(5.5));
  CHECK(composite_loss(0.5, 2.0, 3.0, {0.8, LabelFamily::kStudentT}) == doctest::Approx(4.9));
  CHECK_THROWS_AS(composite_loss(0.5, 2.0, 3.0, {1.2, LabelFamily::kStudentT}), ConfigError);
  CHECK_THROWS_AS(composite_loss(0.5, 2.0, 3.0, {-0.1, LabelFamily::kGaussian}), ConfigError);
}

TEST_CASE("family names") {
  CHECK(parse_family("t") == LabelFamily::kStudentT);
  CHECK(parse_family("gaussian") == LabelFamily::kGaussian);
  CHECK(family_name(LabelFamily::kStudentT) == "t");
  CHECK_THROWS_AS(parse_family("laplace"), ConfigError);
}
