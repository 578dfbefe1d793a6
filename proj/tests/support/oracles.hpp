#pragma once
// Reference implementations used only by tests. They are written against
// Boost.Math and plain loops so they share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace oracle {

inline double t_log_density(double nu, double mu, double scale, double y) {
  using boost::math::lgamma;
  const double z = (y - mu) / scale;
  return lgamma((nu + 1.0) / 2.0) - lgamma(nu / 2.0) - 0.5 * std::log(nu * std::numbers::pi) -
         std::log(scale) - (nu + 1.0) / 2.0 * std::log1p(z * z / nu);
}

inline double normal_log_density(double mu, double sigma, double y) {
  const double z = (y - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Integral of f over the real line, split at `centre` into two half-lines.
inline double integrate_line(const std::function<double(double)>& f, double centre) {
  boost::math::quadrature::exp_sinh<double> half;
  const double right = half.integrate([&](double u) { return f(centre + u); }, 1e-13);
  const double left = half.integrate([&](double u) { return f(centre - u); }, 1e-13);
  return left + right;
}

/// KL(t(nu, mu, scale) || N(m_hat, s_hat^2)) by quadrature.
inline double kl_t_normal(double nu, double mu, double scale, double m_hat, double s_hat) {
  return integrate_line(
      [&](double y) {
        const double lp = t_log_density(nu, mu, scale, y);
        const double p = std::exp(lp);
        if (p == 0.0) return 0.0;
        return p * (lp - normal_log_density(m_hat, s_hat, y));
      },
      mu);
}

/// -integral p ln p for the location-scale t.
inline double t_entropy(double nu, double scale) {
  return integrate_line(
      [&](double y) {
        const double lp = t_log_density(nu, 0.0, scale, y);
        const double p = std::exp(lp);
        return p == 0.0 ? 0.0 : -p * lp;
      },
      0.0);
}

inline double t_mass(double nu, double mu, double scale) {
  return integrate_line([&](double y) { return std::exp(t_log_density(nu, mu, scale, y)); }, mu);
}

/// Argmin of f over [lo, hi] by a dense scan followed by golden-section refinement.
inline double argmin(const std::function<double(double)>& f, double lo, double hi) {
  const int n = 2000;
  double best = lo, best_v = f(lo);
  for (int i = 1; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const double v = f(x);
    if (v < best_v) best_v = v, best = x;
  }
  const double step = (hi - lo) / n;
  double a = std::max(lo, best - step), b = std::min(hi, best + step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 100; ++i) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (f(c) < f(d)) b = d; else a = c;
  }
  return 0.5 * (a + b);
}

inline double naive_ccc(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, c = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    c += (a[i] - ma) * (b[i] - mb);
  }
  va /= n, vb /= n, c /= n;
  return 2 * c / (va + vb + (ma - mb) * (ma - mb));
}

inline std::vector<double> naive_median_filter(const std::vector<double>& x, std::size_t window) {
  const std::ptrdiff_t half_lo = static_cast<std::ptrdiff_t>((window - 1) / 2);
  const std::ptrdiff_t half_hi = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(x.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    std::vector<double> w;
    for (std::ptrdiff_t j = t - half_lo; j <= t + half_hi; ++j)
      if (j >= 0 && j < n) w.push_back(x[j]);
    std::sort(w.begin(), w.end());
    const std::size_t k = w.size();
    out[t] = k % 2 ? w[k / 2] : 0.5 * (w[k / 2 - 1] + w[k / 2]);
  }
  return out;
}

/// Amplitude of the component at `freq` (Hz) by a single-bin DFT.
inline double tone_amplitude(const std::vector<double>& x, double freq, double rate) {
  double re = 0, im = 0;
  const double w = 2.0 * std::numbers::pi * freq / rate;
  for (std::size_t t = 0; t < x.size(); ++t) {
    re += x[t] * std::cos(w * t);
    im -= x[t] * std::sin(w * t);
  }
  return 2.0 * std::hypot(re, im) / static_cast<double>(x.size());
}

}  // namespace oracle
