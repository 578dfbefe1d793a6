#include "labeldist/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "labeldist/errors.hpp"

namespace labeldist {

std::string_view family_name(LabelFamily family) {
  return family == LabelFamily::kGaussian ? "gaussian" : "t";
}

LabelFamily parse_family(std::string_view name) {
  if (name == "gaussian" || name == "g" || name == "normal") return LabelFamily::kGaussian;
  if (name == "t" || name == "student_t" || name == "studentt") return LabelFamily::kStudentT;
  throw ConfigError("unknown label family '" + std::string(name) + "' (expected t or gaussian)");
}

namespace {

struct Moments {
  double mean_a = 0.0, mean_b = 0.0, var_a = 0.0, var_b = 0.0, cov = 0.0;
};

Moments population_moments(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("ccc: series lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  if (a.size() < 2) throw ShapeError("ccc: need at least 2 frames");
  const double n = static_cast<double>(a.size());
  Moments m;
  // Summed relative to the first sample so constant series have zero spread exactly.
  double sa = 0, sb = 0;
  for (std::size_t i = 1; i < a.size(); ++i) {
    sa += a[i] - a[0];
    sb += b[i] - b[0];
  }
  m.mean_a = a[0] + sa / n;
  m.mean_b = b[0] + sb / n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - m.mean_a;
    const double db = b[i] - m.mean_b;
    m.var_a += da * da;
    m.var_b += db * db;
    m.cov += da * db;
  }
  m.var_a /= n;
  m.var_b /= n;
  m.cov /= n;
  return m;
}

}  // namespace

double ccc(std::span<const double> truth, std::span<const double> estimate) {
  const Moments m = population_moments(truth, estimate);
  const double bias = m.mean_a - m.mean_b;
  const double denom = m.var_a + m.var_b + bias * bias;
  if (denom == 0.0) return 1.0;  // both constant and equal
  return 2.0 * m.cov / denom;
}

CccGradient ccc_with_gradient(std::span<const double> truth, std::span<const double> estimate) {
  const Moments m = population_moments(truth, estimate);
  const std::size_t n = truth.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double bias = m.mean_a - m.mean_b;
  const double denom = m.var_a + m.var_b + bias * bias;
  CccGradient out;
  out.d_truth.assign(n, 0.0);
  out.d_estimate.assign(n, 0.0);
  if (denom == 0.0) {
    out.value = 1.0;
    return out;
  }
  const double numer = 2.0 * m.cov;
  out.value = numer / denom;
  const double inv_d = 1.0 / denom;
  const double ratio = numer * inv_d * inv_d;
  for (std::size_t t = 0; t < n; ++t) {
    const double da = truth[t] - m.mean_a;
    const double db = estimate[t] - m.mean_b;
    // d numer / d a_t = 2 db / n, d denom / d a_t = 2 da / n + 2 bias / n
    out.d_truth[t] = 2.0 * inv_n * (db * inv_d - (da + bias) * ratio);
    out.d_estimate[t] = 2.0 * inv_n * (da * inv_d - (db - bias) * ratio);
  }
  return out;
}

KlTerms kl_gaussian_terms(const GaussianParams& truth, const GaussianParams& estimate) {
  validate(truth);
  validate(estimate);
  const double s = truth.sigma;
  const double sh = estimate.sigma;
  const double delta = truth.mu - estimate.mu;
  const double sh2 = sh * sh;
  const double quad = s * s + delta * delta;
  KlTerms k;
  k.value = std::log(sh / s) + quad / (2.0 * sh2) - 0.5;
  k.d_truth_mu = delta / sh2;
  k.d_est_mu = -delta / sh2;
  k.d_truth_spread = -1.0 / s + s / sh2;
  k.d_est_sigma = 1.0 / sh - quad / (sh2 * sh);
  return k;
}

double kl_gaussian(const GaussianParams& truth, const GaussianParams& estimate) {
  return kl_gaussian_terms(truth, estimate).value;
}

KlTerms kl_t_terms(const StudentTParams& truth, const GaussianParams& estimate) {
  validate(estimate);
  const double var_t = studentt_variance(truth);  // validates, throws for nu <= 2
  const double sh = estimate.sigma;
  const double sh2 = sh * sh;
  const double delta = truth.mu - estimate.mu;
  const double quad = var_t + delta * delta;
  KlTerms k;
  k.value = 0.5 * std::log(2.0 * std::numbers::pi * sh2) + quad / (2.0 * sh2) -
            studentt_entropy(truth);
  k.d_truth_mu = delta / sh2;
  k.d_est_mu = -delta / sh2;
  // d Var_t / d sigma = 2 Var_t / sigma, d H / d sigma = 1 / sigma
  k.d_truth_spread = var_t / (truth.sigma * sh2) - 1.0 / truth.sigma;
  k.d_est_sigma = 1.0 / sh - quad / (sh2 * sh);
  return k;
}

double kl_t(const StudentTParams& truth, const GaussianParams& estimate) {
  return kl_t_terms(truth, estimate).value;
}

double label_t_scale_factor(double nu) {
  if (!(nu > 2.0))
    throw UndefinedMomentError("t label distribution needs nu > 2 (nu = " + std::to_string(nu) +
                               ")");
  return (nu - 2.0) / nu;
}

StudentTParams label_student_t(double nu, double m, double s) {
  return StudentTParams{nu, m, s * label_t_scale_factor(nu)};
}

KlTerms kl_label_terms(LabelFamily family, double nu, double m, double s, double m_hat,
                       double s_hat) {
  if (family == LabelFamily::kGaussian)
    return kl_gaussian_terms(GaussianParams{m, s}, GaussianParams{m_hat, s_hat});
  const double factor = label_t_scale_factor(nu);
  KlTerms k = kl_t_terms(StudentTParams{nu, m, s * factor}, GaussianParams{m_hat, s_hat});
  k.d_truth_spread *= factor;
  return k;
}

double kl_label(LabelFamily family, double nu, double m, double s, double m_hat, double s_hat) {
  return kl_label_terms(family, nu, m, s, m_hat, s_hat).value;
}

double elbo_bbb(std::span<const DrawTerms> draws) {
  if (draws.empty()) throw std::invalid_argument("elbo_bbb: no weight draws");
  double total = 0.0;
  for (const DrawTerms& d : draws) total += d.log_q - d.log_prior - d.log_lik;
  return total;
}

void validate(const CompositeLossConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(cfg.alpha));
}

double composite_loss(double ccc_m, double elbo, double kl_label, const CompositeLossConfig& cfg) {
  validate(cfg);
  return (1.0 - ccc_m) + elbo + cfg.alpha * kl_label;
}

}  // namespace labeldist
