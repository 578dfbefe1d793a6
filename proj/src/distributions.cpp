#include "labeldist/distributions.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "labeldist/errors.hpp"

namespace labeldist {
namespace {

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczosCoeffs = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x))
    throw DomainError(std::string(fn) + ": argument must be finite and > 0, got " +
                      std::to_string(x));
}

// Lanczos form for x >= 0.5.
double log_gamma_lanczos(double x) {
  const double z = x - 1.0;
  double series = kLanczosCoeffs[0];
  for (std::size_t i = 1; i < kLanczosCoeffs.size(); ++i)
    series += kLanczosCoeffs[i] / (z + static_cast<double>(i));
  const double t = z + kLanczosG + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(series);
}

}  // namespace

void validate(const GaussianParams& p) {
  if (!std::isfinite(p.mu)) throw DomainError("gaussian: mu must be finite");
  require_positive(p.sigma, "gaussian sigma");
}

void validate(const StudentTParams& p) {
  if (!std::isfinite(p.mu)) throw DomainError("student-t: mu must be finite");
  require_positive(p.nu, "student-t nu");
  require_positive(p.sigma, "student-t sigma");
}

double log_gamma(double x) {
  require_positive(x, "log_gamma");
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x < 0.5) {
    // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x); sin(pi x) > 0 on (0, 0.5).
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma_lanczos(1.0 - x);
  }
  return log_gamma_lanczos(x);
}

double log_beta(double i, double j) {
  require_positive(i, "log_beta");
  require_positive(j, "log_beta");
  return log_gamma(i) + log_gamma(j) - log_gamma(i + j);
}

double digamma(double x) {
  require_positive(x, "digamma");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Asymptotic series with Bernoulli numbers B2..B12.
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 -
                      inv2 * (1.0 / 252.0 -
                              inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
  return acc + std::log(x) - 0.5 * inv - tail;
}

double gaussian_logpdf(const GaussianParams& p, double y) {
  validate(p);
  const double z = (y - p.mu) / p.sigma;
  return -0.5 * z * z - std::log(p.sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double gaussian_entropy(const GaussianParams& p) {
  validate(p);
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e) + std::log(p.sigma);
}

double studentt_logpdf(const StudentTParams& p, double y) {
  validate(p);
  const double z = (y - p.mu) / p.sigma;
  return -log_beta(0.5, 0.5 * p.nu) - 0.5 * std::log(p.nu * p.sigma * p.sigma) -
         0.5 * (p.nu + 1.0) * std::log1p(z * z / p.nu);
}

double studentt_entropy(const StudentTParams& p) {
  validate(p);
  const double half_nu = 0.5 * p.nu;
  const double half_nu1 = 0.5 * (p.nu + 1.0);
  return std::log(p.sigma) + 0.5 * std::log(p.nu) + log_beta(0.5, half_nu) +
         half_nu1 * (digamma(half_nu1) - digamma(half_nu));
}

double studentt_variance(const StudentTParams& p) {
  validate(p);
  if (p.nu <= 2.0)
    throw UndefinedMomentError("student-t variance undefined for nu <= 2 (nu = " +
                               std::to_string(p.nu) + ")");
  return p.sigma * p.sigma * p.nu / (p.nu - 2.0);
}

double scaled_std(const StudentTParams& p) { return std::sqrt(studentt_variance(p)); }

}  // namespace labeldist
