#pragma once
// Location-scale Gaussian and Student's t densities and the special functions
// behind them.

namespace labeldist {

struct GaussianParams {
  double mu = 0.0;
  double sigma = 1.0;  // standard deviation, > 0
};

/// `sigma` is the scale of the density, not its standard deviation; the
/// standard deviation is scaled_std() and exists only for nu > 2.
struct StudentTParams {
  double nu = 1.0;
  double mu = 0.0;
  double sigma = 1.0;
};

/// Throws DomainError unless sigma > 0 and finite.
void validate(const GaussianParams& p);
/// Throws DomainError unless nu > 0 and sigma > 0.
void validate(const StudentTParams& p);

// Special functions. All throw DomainError for x <= 0.

/// ln Gamma(x) via a g=7, 9-term Lanczos series.
double log_gamma(double x);
/// ln B(i, j) = ln Gamma(i) + ln Gamma(j) - ln Gamma(i + j).
double log_beta(double i, double j);
/// psi(x) = d/dx ln Gamma(x).
double digamma(double x);

double gaussian_logpdf(const GaussianParams& p, double y);
double gaussian_entropy(const GaussianParams& p);

double studentt_logpdf(const StudentTParams& p, double y);

/// Differential entropy of the location-scale t:
///   ln(sigma sqrt(nu) B(1/2, nu/2)) + (nu+1)/2 (psi((nu+1)/2) - psi(nu/2))
double studentt_entropy(const StudentTParams& p);

/// sigma * sqrt(nu / (nu - 2)). Throws UndefinedMomentError for nu <= 2.
double scaled_std(const StudentTParams& p);

/// Second central moment sigma^2 nu / (nu - 2). Throws for nu <= 2.
double studentt_variance(const StudentTParams& p);

}  // namespace labeldist
