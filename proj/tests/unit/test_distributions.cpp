#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "labeldist/distributions.hpp"
#include "labeldist/errors.hpp"
#include "oracles.hpp"

using namespace labeldist;

TEST_CASE("log_gamma") {
  CHECK(log_gamma(1.0) == 0.0);
  CHECK(log_gamma(2.0) == 0.0);
  CHECK(log_gamma(0.5) == doctest::Approx(0.5 * std::log(std::numbers::pi)).epsilon(1e-13));
  CHECK(log_gamma(5.0) == doctest::Approx(std::log(24.0)).epsilon(1e-13));
  CHECK_THROWS_AS(log_gamma(0.0), DomainError);
  CHECK_THROWS_AS(log_gamma(-1.5), DomainError);

  SUBCASE("factorials") {
    double fact = 1.0;
    for (int n = 1; n <= 25; ++n) {
      CHECK(log_gamma(n) == doctest::Approx(std::log(fact)).epsilon(1e-12));
      fact *= n;
    }
  }
  SUBCASE("relative accuracy against boost") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (int i = 0; i < 2000; ++i) {
      const double x = std::pow(10.0, u(rng));
      const double ref = boost::math::lgamma(x);
      CHECK(std::abs(log_gamma(x) - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("log_beta") {
  CHECK(log_beta(1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(log_beta(0.5, 0.5) == doctest::Approx(std::log(std::numbers::pi)).epsilon(1e-12));
  CHECK(log_beta(0.5, 3.0) == doctest::Approx(0.06453852113757116).epsilon(1e-10));
  CHECK(log_beta(2.5, 7.0) == doctest::Approx(log_gamma(2.5) + log_gamma(7.0) - log_gamma(9.5)));
  CHECK_THROWS_AS(log_beta(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(log_beta(1.0, -2.0), DomainError);
}

TEST_CASE("digamma") {
  const double euler = 0.57721566490153286;
  CHECK(digamma(1.0) == doctest::Approx(-euler).epsilon(1e-13));
  CHECK(digamma(2.0) == doctest::Approx(1.0 - euler).epsilon(1e-13));
  CHECK(digamma(0.5) == doctest::Approx(-euler - 2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(digamma(0.0), DomainError);

  SUBCASE("finite difference of log_gamma") {
    for (double x : {0.5, 1.3, 3.0, 7.5, 40.0}) {
      const double h = 1e-5;
      const double fd = (log_gamma(x + h) - log_gamma(x - h)) / (2 * h);
      CHECK(digamma(x) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
  SUBCASE("recurrence and boost reference") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.01, 60.0);
    for (int i = 0; i < 1000; ++i) {
      const double x = u(rng);
      CHECK(std::abs(digamma(x + 1.0) - digamma(x) - 1.0 / x) < 1e-12 * std::max(1.0, 1.0 / x));
      CHECK(digamma(x) == doctest::Approx(boost::math::digamma(x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gaussian_logpdf") {
  CHECK(gaussian_logpdf({0.0, 1.0}, 0.0) == doctest::Approx(-0.9189385332046727));
  CHECK(gaussian_logpdf({2.0, 1.0}, 2.0) == doctest::Approx(-0.9189385332046727));
  CHECK(gaussian_logpdf({0.0, 0.5}, 1.0) == doctest::Approx(-2.2257913526447273).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_logpdf({0.0, 0.0}, 1.0), DomainError);
  CHECK_THROWS_AS(gaussian_logpdf({0.0, -1.0}, 1.0), DomainError);
}

TEST_CASE("studentt_logpdf") {
  CHECK(studentt_logpdf({1.0, 0.0, 1.0}, 0.0) ==
        doctest::Approx(-std::log(std::numbers::pi)).epsilon(1e-12));
  CHECK(std::abs(studentt_logpdf({1e6, 0.0, 1.0}, 0.0) - gaussian_logpdf({0.0, 1.0}, 0.0)) < 1e-4);
  CHECK(studentt_logpdf({6.0, 0.0, 1.0}, 2.0) == doctest::Approx(-2.748307938932566).epsilon(1e-12));
  CHECK(oracle::t_mass(6.0, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(studentt_logpdf({0.0, 0.0, 1.0}, 0.0), DomainError);
  CHECK_THROWS_AS(studentt_logpdf({3.0, 0.0, 0.0}, 0.0), DomainError);

  SUBCASE("symmetry and agreement with the oracle density") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> nu(0.5, 50.0), mu(-3, 3), sc(0.1, 4), y(-20, 20);
    for (int i = 0; i < 500; ++i) {
      const StudentTParams p{nu(rng), mu(rng), sc(rng)};
      const double d = y(rng);
      CHECK(studentt_logpdf(p, p.mu + d) == doctest::Approx(studentt_logpdf(p, p.mu - d)).epsilon(1e-13));
      CHECK(studentt_logpdf(p, p.mu + d) ==
            doctest::Approx(oracle::t_log_density(p.nu, p.mu, p.sigma, p.mu + d)).epsilon(1e-11));
    }
  }
}

TEST_CASE("quadrature normalisation for random parameters") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> nu(0.8, 40.0), mu(-5, 5), sc(0.05, 5);
  for (int i = 0; i < 30; ++i) {
    const double n = nu(rng), m = mu(rng), s = sc(rng);
    CHECK(oracle::t_mass(n, m, s) == doctest::Approx(1.0).epsilon(1e-5));
    const double g = oracle::integrate_line(
        [&](double y) { return std::exp(gaussian_logpdf({m, s}, y)); }, m);
    CHECK(g == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("t approaches the Gaussian as nu grows") {
  double sup = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double y = -5.0 + 10.0 * i / 1000.0;
    sup = std::max(sup, std::abs(studentt_logpdf({1e6, 0.0, 1.0}, y) - gaussian_logpdf({0.0, 1.0}, y)));
  }
  CHECK(sup < 1e-3);
}

TEST_CASE("studentt_entropy") {
  const double gauss = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  CHECK(std::abs(studentt_entropy({1e6, 0.0, 1.0}) - gauss) < 1e-3);
  CHECK(studentt_entropy({6.0, 0.0, 1.0}) == doctest::Approx(1.5917213251653144).epsilon(1e-11));
  CHECK(studentt_entropy({6.0, 5.0, 1.0}) == studentt_entropy({6.0, 0.0, 1.0}));
  CHECK(gaussian_entropy({3.0, 1.0}) == doctest::Approx(gauss));

  for (double nu : {3.0, 4.0, 6.0, 12.0, 30.0})
    for (double s : {0.25, 0.5, 1.0, 2.0}) {
      CAPTURE(nu);
      CAPTURE(s);
      CHECK(std::abs(studentt_entropy({nu, 0.0, s}) - oracle::t_entropy(nu, s)) < 1e-6);
    }
}

TEST_CASE("scaled_std") {
  CHECK(scaled_std({6.0, 0.0, 0.5}) == doctest::Approx(0.6124).epsilon(1e-4));
  CHECK(scaled_std({3.0, 0.0, 1.0}) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
  CHECK(std::abs(scaled_std({1e6, 0.0, 1.0}) - 1.0) < 1e-5);
  CHECK_THROWS_AS(scaled_std({2.0, 0.0, 1.0}), UndefinedMomentError);
  CHECK_THROWS_AS(studentt_variance({1.5, 0.0, 1.0}), UndefinedMomentError);

  SUBCASE("strictly decreasing in nu, diverging towards 2") {
    double prev = scaled_std({2.0 + 1e-9, 0.0, 1.0});
    CHECK(prev > 1e4);
    for (double nu = 2.01; nu < 200.0; nu *= 1.1) {
      const double cur = scaled_std({nu, 0.0, 1.0});
      CHECK(cur < prev);
      prev = cur;
    }
  }
}
