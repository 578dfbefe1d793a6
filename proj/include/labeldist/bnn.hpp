#pragma once
// Bayes-by-Backprop layers: a factorised Gaussian q(w | mu, rho) over every
// weight, sampled with the reparameterisation w = mu + softplus(rho) * eps.

#include <cstdint>
#include <span>
#include <vector>

#include "labeldist/autodiff/ops.hpp"
#include "labeldist/distributions.hpp"
#include "labeldist/rng.hpp"

namespace labeldist::bnn {

/// sigma = ln(1 + exp(rho)), evaluated without overflow.
double softplus_sigma(double rho);
/// Inverse of softplus_sigma; sigma must be > 0.
double softplus_inverse(double sigma);

struct VariationalParam {
  double mu_w = 0.0;
  double rho_w = -3.0;
  double sigma() const { return softplus_sigma(rho_w); }
};

struct SamplingSchedule {
  std::size_t window_b = 50;  // frames sharing one weight draw
  std::size_t n_passes = 30;

  /// Throws ConfigError for window_b == 0 or n_passes == 0.
  void validate() const;
  /// Fewer passes than the 30 needed for a stable spread estimate.
  bool below_recommended() const { return n_passes < 30; }
};

/// First frame of every weight window for a sequence of T frames.
std::vector<std::size_t> window_starts(std::size_t frames, std::size_t window_b);

struct InitConfig {
  double mu_low = -0.1, mu_high = 0.1;
  double rho_low = -3.0, rho_high = -2.0;
};

enum class Activation { kTanh, kIdentity };

/// Dense variational layer y = act(x W + b).
struct BbbLayer {
  ad::Tensor w_mu, w_rho;  // [in x out]
  ad::Tensor b_mu, b_rho;  // [out]
  Activation activation = Activation::kTanh;
  GaussianParams prior{0.0, 1.0};

  BbbLayer() = default;
  BbbLayer(std::size_t in, std::size_t out, Activation act, GaussianParams prior,
           const InitConfig& init, Rng& rng);

  std::size_t in_dim() const { return w_mu.dim(0); }
  std::size_t out_dim() const { return w_mu.dim(1); }
  std::size_t weight_count() const { return w_mu.size() + b_mu.size(); }
  /// Variational parameters in storage order: weights row-major, then biases.
  VariationalParam param(std::size_t index) const;
  /// Multiplies every sigma by `factor` (adjusting rho accordingly).
  void scale_sigma(double factor);
};

/// A layer's parameters registered on a tape.
struct BoundLayer {
  ad::Var w_mu, w_rho, b_mu, b_rho;
  Activation activation = Activation::kTanh;
  GaussianParams prior;
};

/// Registers the parameters as variables (trainable) or constants.
BoundLayer bind(ad::Tape& tape, const BbbLayer& layer, bool trainable);
std::vector<BoundLayer> bind_stack(ad::Tape& tape, std::span<const BbbLayer> layers, bool trainable);

/// One reparameterised draw of a layer's weights.
struct WeightDraw {
  ad::Var w, b;
  ad::Var log_q;      // log q(w | theta), summed over weights and biases
  ad::Var log_prior;  // log P(w), summed likewise
};

WeightDraw sample_weights(const BoundLayer& layer, Rng& rng);

/// Applies a layer with explicit weights to x[... x in].
ad::Var apply(const BoundLayer& layer, ad::Var x, ad::Var w, ad::Var b);

struct StochasticOutput {
  std::vector<ad::Var> passes;  // n outputs [B x T]
  ad::Var complexity;           // mean over draws of log q - log P
  std::size_t draws = 0;
};

/// n stochastic passes of the stack over x[B x T x D]. Within a pass the
/// weights are redrawn at every window start and shared by all sequences
/// in the batch. Pass p draws from an rng derived from (seed, p) so the
/// result does not depend on pass order.
StochasticOutput forward_stochastic(std::span<const BoundLayer> stack, ad::Var x,
                                    const SamplingSchedule& schedule, std::uint64_t seed);

/// Deterministic pass with w = mu everywhere; returns [B x T].
ad::Var forward_mean(std::span<const BoundLayer> stack, ad::Var x);

struct PredictiveVars {
  ad::Var m_hat;
  ad::Var s_hat;
};

/// m_hat from the mean-weight path, s_hat the unbiased std across passes.
/// Throws std::invalid_argument for fewer than 2 passes.
PredictiveVars aggregate_predictive(std::span<const ad::Var> passes, ad::Var mean_path,
                                    double eps = 0.0);

struct PredictiveSeries {
  std::vector<double> m;
  std::vector<double> s;
};

/// Plain-vector form: passes[k][t]. Throws std::invalid_argument for n < 2.
PredictiveSeries aggregate_predictive(const std::vector<std::vector<double>>& passes,
                                      std::vector<double> mean_path);

/// Closed-form KL(q || prior) summed over the layer's weights.
double kl_to_prior(const BbbLayer& layer);

}  // namespace labeldist::bnn
