#pragma once
// Training losses: concordance correlation, label-distribution KL terms,
// the Bayes-by-Backprop ELBO estimate and the composite objective.

#include <span>
#include <string_view>
#include <vector>

#include "labeldist/distributions.hpp"

namespace labeldist {

enum class LabelFamily { kGaussian, kStudentT };

std::string_view family_name(LabelFamily family);
/// Accepts "gaussian"/"g" and "t"/"student_t". Throws ConfigError otherwise.
LabelFamily parse_family(std::string_view name);

// ---------------------------------------------------------------------------
// Concordance correlation coefficient

/// CCC with population (1/T) moments. Both series constant and equal gives 1;
/// otherwise a constant series gives 0. Throws ShapeError unless the series
/// have equal length >= 2.
double ccc(std::span<const double> truth, std::span<const double> estimate);

struct CccGradient {
  double value = 0.0;
  std::vector<double> d_truth;
  std::vector<double> d_estimate;
};

CccGradient ccc_with_gradient(std::span<const double> truth, std::span<const double> estimate);

// ---------------------------------------------------------------------------
// KL(truth || estimate), mean-seeking order.

/// Value and partial derivatives with respect to the truth location/spread
/// and the estimate mean/std.
struct KlTerms {
  double value = 0.0;
  double d_truth_mu = 0.0;
  double d_truth_spread = 0.0;
  double d_est_mu = 0.0;
  double d_est_sigma = 0.0;
};

/// ln(s_hat/s) + (s^2 + (m - m_hat)^2) / (2 s_hat^2) - 1/2
double kl_gaussian(const GaussianParams& truth, const GaussianParams& estimate);
KlTerms kl_gaussian_terms(const GaussianParams& truth, const GaussianParams& estimate);

/// Exact KL between a location-scale t and a Gaussian:
///   1/2 ln(2 pi s_hat^2) + (Var_t + (mu - m_hat)^2) / (2 s_hat^2) - H(t)
/// d_truth_spread is with respect to the t scale. Throws UndefinedMomentError
/// for nu <= 2.
double kl_t(const StudentTParams& truth, const GaussianParams& estimate);
KlTerms kl_t_terms(const StudentTParams& truth, const GaussianParams& estimate);

/// Ratio between the t scale and the label spread s_t: (nu - 2) / nu.
///
/// The fused label spread is read as the nu-scaled deviation sigma sqrt(nu/(nu-2))
/// of the label distribution's own standard deviation, so the label t has
/// standard deviation s sqrt((nu-2)/nu). Under this reading the loss, as a
/// function of s with the estimate fixed, is minimised at s = s_hat sqrt(nu/(nu-2)).
double label_t_scale_factor(double nu);

/// Label distribution for (nu, m, s) under the convention above.
StudentTParams label_student_t(double nu, double m, double s);

/// Per-frame label KL for either family. For the t family the spread
/// derivative is with respect to the label spread s (not the t scale).
KlTerms kl_label_terms(LabelFamily family, double nu, double m, double s, double m_hat,
                       double s_hat);
double kl_label(LabelFamily family, double nu, double m, double s, double m_hat, double s_hat);

// ---------------------------------------------------------------------------
// Bayes by Backprop

/// One Monte-Carlo weight draw w(i) ~ q(w|theta).
struct DrawTerms {
  double log_q = 0.0;       // log q(w(i) | theta)
  double log_prior = 0.0;   // log P(w(i))
  double log_lik = 0.0;     // log P(D | w(i))
};

/// sum_i [log q(w(i)|theta) - log P(w(i)) - log P(D|w(i))]. Throws
/// std::invalid_argument on an empty draw list.
double elbo_bbb(std::span<const DrawTerms> draws);

// ---------------------------------------------------------------------------

struct CompositeLossConfig {
  double alpha = 1.0;
  LabelFamily truth_family = LabelFamily::kStudentT;
};

void validate(const CompositeLossConfig& cfg);

/// (1 - ccc_m) + elbo + alpha * kl_label
double composite_loss(double ccc_m, double elbo, double kl_label, const CompositeLossConfig& cfg);

}  // namespace labeldist
