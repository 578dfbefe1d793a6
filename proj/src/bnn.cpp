#include "labeldist/bnn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "labeldist/errors.hpp"

namespace labeldist::bnn {

double softplus_sigma(double rho) {
  return rho > 0.0 ? rho + std::log1p(std::exp(-rho)) : std::log1p(std::exp(rho));
}

double softplus_inverse(double sigma) {
  if (!(sigma > 0.0)) throw DomainError("softplus_inverse: sigma must be positive");
  // ln(exp(sigma) - 1), rearranged to stay finite for large sigma
  return sigma + std::log(-std::expm1(-sigma));
}

void SamplingSchedule::validate() const {
  if (window_b == 0) throw ConfigError("BBB window size must be >= 1 frame");
  if (n_passes == 0) throw ConfigError("number of stochastic passes must be >= 1");
}

std::vector<std::size_t> window_starts(std::size_t frames, std::size_t window_b) {
  if (window_b == 0) throw ConfigError("BBB window size must be >= 1 frame");
  std::vector<std::size_t> starts;
  for (std::size_t t = 0; t < frames; t += window_b) starts.push_back(t);
  return starts;
}

BbbLayer::BbbLayer(std::size_t in, std::size_t out, Activation act, GaussianParams prior_,
                   const InitConfig& init, Rng& rng)
    : w_mu({in, out}), w_rho({in, out}), b_mu({out}), b_rho({out}), activation(act), prior(prior_) {
  validate(prior);
  std::uniform_real_distribution<double> mu(init.mu_low, init.mu_high);
  std::uniform_real_distribution<double> rho(init.rho_low, init.rho_high);
  for (double& v : w_mu.values()) v = mu(rng);
  for (double& v : w_rho.values()) v = rho(rng);
  for (double& v : b_mu.values()) v = mu(rng);
  for (double& v : b_rho.values()) v = rho(rng);
}

VariationalParam BbbLayer::param(std::size_t index) const {
  if (index < w_mu.size()) return {w_mu[index], w_rho[index]};
  index -= w_mu.size();
  if (index >= b_mu.size()) throw std::out_of_range("BbbLayer::param: index out of range");
  return {b_mu[index], b_rho[index]};
}

void BbbLayer::scale_sigma(double factor) {
  if (!(factor > 0.0)) throw DomainError("scale_sigma: factor must be positive");
  for (ad::Tensor* t : {&w_rho, &b_rho})
    for (double& r : t->values()) r = softplus_inverse(factor * softplus_sigma(r));
}

BoundLayer bind(ad::Tape& tape, const BbbLayer& layer, bool trainable) {
  auto reg = [&](const ad::Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); };
  return {reg(layer.w_mu), reg(layer.w_rho), reg(layer.b_mu), reg(layer.b_rho), layer.activation,
          layer.prior};
}

std::vector<BoundLayer> bind_stack(ad::Tape& tape, std::span<const BbbLayer> layers, bool trainable) {
  std::vector<BoundLayer> out;
  out.reserve(layers.size());
  for (const BbbLayer& l : layers) out.push_back(bind(tape, l, trainable));
  return out;
}

WeightDraw sample_weights(const BoundLayer& layer, Rng& rng) {
  std::normal_distribution<double> normal;
  auto eps_like = [&](const ad::Var& v) {
    ad::Tensor e(v.shape());
    for (double& x : e.values()) x = normal(rng);
    return e;
  };
  const ad::Tensor eps_w = eps_like(layer.w_mu);
  const ad::Tensor eps_b = eps_like(layer.b_mu);
  WeightDraw d;
  d.w = ad::reparameterize(layer.w_mu, layer.w_rho, eps_w);
  d.b = ad::reparameterize(layer.b_mu, layer.b_rho, eps_b);
  d.log_q = ad::add(ad::gaussian_log_density(d.w, layer.w_mu, layer.w_rho),
                    ad::gaussian_log_density(d.b, layer.b_mu, layer.b_rho));
  d.log_prior = ad::add(ad::prior_log_density(d.w, layer.prior),
                        ad::prior_log_density(d.b, layer.prior));
  return d;
}

ad::Var apply(const BoundLayer& layer, ad::Var x, ad::Var w, ad::Var b) {
  ad::Var y = ad::dense(x, w, b);
  return layer.activation == Activation::kTanh ? ad::tanh(y) : y;
}

namespace {

ad::Var squeeze_output(ad::Var y) {
  const auto& s = y.shape();
  if (s.size() != 3 || s[2] != 1)
    throw ShapeError("BBB stack must end in a single output unit, got " + ad::shape_string(s));
  return ad::reshape(y, {s[0], s[1]});
}

void check_stack(std::span<const BoundLayer> stack) {
  if (stack.empty()) throw ConfigError("BBB stack has no layers");
}

}  // namespace

StochasticOutput forward_stochastic(std::span<const BoundLayer> stack, ad::Var x,
                                    const SamplingSchedule& schedule, std::uint64_t seed) {
  check_stack(stack);
  schedule.validate();
  const auto& shape = x.shape();
  if (shape.size() != 3) throw ShapeError("forward_stochastic expects [B x T x D] input");
  const std::size_t frames = shape[1];
  const std::vector<std::size_t> starts = window_starts(frames, schedule.window_b);

  StochasticOutput out;
  std::vector<ad::Var> complexity_terms;
  for (std::size_t p = 0; p < schedule.n_passes; ++p) {
    Rng rng = make_rng(seed, "bbb-pass", p);
    std::vector<ad::Var> pieces;
    for (std::size_t t0 : starts) {
      const std::size_t t1 = std::min(frames, t0 + schedule.window_b);
      ad::Var h = starts.size() == 1 ? x : ad::time_slice(x, t0, t1);
      for (const BoundLayer& layer : stack) {
        WeightDraw d = sample_weights(layer, rng);
        complexity_terms.push_back(ad::sub(d.log_q, d.log_prior));
        h = apply(layer, h, d.w, d.b);
      }
      pieces.push_back(h);
    }
    ad::Var y = pieces.size() == 1 ? pieces[0] : ad::concat_time(pieces);
    out.passes.push_back(squeeze_output(y));
    out.draws += starts.size();
  }
  // Summed over layers and draws, then averaged over draws.
  ad::Var total = complexity_terms[0];
  for (std::size_t i = 1; i < complexity_terms.size(); ++i)
    total = ad::add(total, complexity_terms[i]);
  out.complexity = ad::scale(total, 1.0 / static_cast<double>(out.draws));
  return out;
}

ad::Var forward_mean(std::span<const BoundLayer> stack, ad::Var x) {
  check_stack(stack);
  ad::Var h = x;
  for (const BoundLayer& layer : stack) h = apply(layer, h, layer.w_mu, layer.b_mu);
  return squeeze_output(h);
}

PredictiveVars aggregate_predictive(std::span<const ad::Var> passes, ad::Var mean_path,
                                    double eps) {
  if (passes.size() < 2)
    throw std::invalid_argument("aggregate_predictive: need at least 2 passes, got " +
                                std::to_string(passes.size()));
  if (mean_path.shape() != passes[0].shape())
    throw ShapeError("aggregate_predictive: mean path shape differs from pass shape");
  return {mean_path, ad::pass_std(passes, eps)};
}

PredictiveSeries aggregate_predictive(const std::vector<std::vector<double>>& passes,
                                      std::vector<double> mean_path) {
  const std::size_t n = passes.size();
  if (n < 2)
    throw std::invalid_argument("aggregate_predictive: need at least 2 passes, got " +
                                std::to_string(n));
  const std::size_t T = passes[0].size();
  for (const auto& p : passes)
    if (p.size() != T) throw ShapeError("aggregate_predictive: pass lengths differ");
  if (mean_path.size() != T) throw ShapeError("aggregate_predictive: mean path length differs");
  PredictiveSeries out{std::move(mean_path), std::vector<double>(T, 0.0)};
  for (std::size_t t = 0; t < T; ++t) {
    double mean = 0.0;
    for (const auto& p : passes) mean += p[t];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& p : passes) ss += (p[t] - mean) * (p[t] - mean);
    out.s[t] = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return out;
}

double kl_to_prior(const BbbLayer& layer) {
  double total = 0.0;
  const double sp = layer.prior.sigma;
  for (std::size_t i = 0; i < layer.weight_count(); ++i) {
    const VariationalParam v = layer.param(i);
    const double sq = v.sigma();
    const double d = v.mu_w - layer.prior.mu;
    total += std::log(sp / sq) + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
  }
  return total;
}

}  // namespace labeldist::bnn
