#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gradcheck.hpp"
#include "labeldist/bnn.hpp"
#include "labeldist/errors.hpp"

using namespace labeldist;
using namespace labeldist::bnn;

namespace {

std::vector<BbbLayer> toy_stack(std::uint64_t seed, std::size_t in = 3) {
  Rng rng(seed);
  InitConfig init{-0.5, 0.5, -3.0, -2.0};
  return {BbbLayer(in, 8, Activation::kTanh, {0, 1}, init, rng),
          BbbLayer(8, 4, Activation::kTanh, {0, 1}, init, rng),
          BbbLayer(4, 1, Activation::kIdentity, {0, 1}, init, rng)};
}

ad::Tensor toy_input(std::size_t B, std::size_t T, std::size_t D, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gradcheck::random_tensor({B, T, D}, rng);
}

double mean_pass_variance(const std::vector<BbbLayer>& stack, const ad::Tensor& x) {
  ad::Tape tape;
  auto bound = bind_stack(tape, stack, false);
  StochasticOutput out = forward_stochastic(bound, tape.constant(x), {10, 30}, 5);
  ad::Var s = ad::pass_std(out.passes, 0.0);
  double v = 0.0;
  for (double e : s.value().values()) v += e * e;
  return v / static_cast<double>(s.value().size());
}

}  // namespace

TEST_CASE("softplus_sigma") {
  CHECK(softplus_sigma(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus_sigma(std::log(std::exp(1.0) - 1.0)) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(softplus_sigma(-3.0) == doctest::Approx(0.04858735157374205).epsilon(1e-12));
  CHECK(softplus_sigma(-800.0) >= 0.0);
  CHECK(softplus_sigma(800.0) == doctest::Approx(800.0));
  double prev = softplus_sigma(-30.0);
  for (double r = -29.5; r < 30.0; r += 0.5) {
    const double cur = softplus_sigma(r);
    CHECK(cur > prev);
    CHECK(softplus_inverse(cur) == doctest::Approx(r).epsilon(1e-9));
    prev = cur;
  }
  CHECK_THROWS_AS(softplus_inverse(0.0), DomainError);
}

TEST_CASE("schedule and windows") {
  CHECK(window_starts(300, 50) == std::vector<std::size_t>{0, 50, 100, 150, 200, 250});
  CHECK(window_starts(7, 3) == std::vector<std::size_t>{0, 3, 6});
  CHECK(window_starts(5, 10) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(window_starts(5, 0), ConfigError);
  CHECK(SamplingSchedule{50, 10}.below_recommended());
  CHECK_FALSE(SamplingSchedule{50, 30}.below_recommended());
  CHECK_THROWS_AS((SamplingSchedule{0, 30}.validate()), ConfigError);
}

TEST_CASE("layer construction") {
  Rng rng(1);
  BbbLayer layer(4, 3, Activation::kTanh, {0, 1}, InitConfig{}, rng);
  CHECK(layer.weight_count() == 15);
  for (std::size_t i = 0; i < layer.weight_count(); ++i) {
    const VariationalParam p = layer.param(i);
    CHECK(p.mu_w >= -0.1);
    CHECK(p.mu_w <= 0.1);
    CHECK(p.rho_w >= -3.0);
    CHECK(p.rho_w <= -2.0);
    CHECK(p.sigma() > 0.0);
  }
  CHECK_THROWS_AS(layer.param(15), std::out_of_range);
  const double before = layer.param(0).sigma();
  layer.scale_sigma(2.0);
  CHECK(layer.param(0).sigma() == doctest::Approx(2.0 * before).epsilon(1e-12));
  CHECK_THROWS_AS(BbbLayer(1, 1, Activation::kTanh, {0, 0}, InitConfig{}, rng), DomainError);
}

TEST_CASE("sample_weights") {
  SUBCASE("degenerate posterior returns the means") {
    Rng rng(2);
    BbbLayer layer(3, 2, Activation::kTanh, {0, 1}, InitConfig{-1, 1, -60, -60}, rng);
    ad::Tape tape;
    BoundLayer b = bind(tape, layer, false);
    for (int i = 0; i < 5; ++i) {
      WeightDraw d = sample_weights(b, rng);
      for (std::size_t k = 0; k < layer.w_mu.size(); ++k)
        CHECK(std::abs(d.w.value()[k] - layer.w_mu[k]) < 1e-20);
    }
  }
  SUBCASE("q equal to the prior") {
    BbbLayer layer;
    layer.w_mu = ad::Tensor({2, 2}, 0.0);
    layer.w_rho = ad::Tensor({2, 2}, softplus_inverse(1.0));
    layer.b_mu = ad::Tensor({2}, 0.0);
    layer.b_rho = ad::Tensor({2}, softplus_inverse(1.0));
    Rng rng(3);
    ad::Tape tape;
    BoundLayer b = bind(tape, layer, false);
    double total = 0.0;
    for (int i = 0; i < 1000; ++i) {
      WeightDraw d = sample_weights(b, rng);
      total += d.log_q.value().item() - d.log_prior.value().item();
    }
    CHECK(std::abs(total / 1000.0) < 1e-9);
    CHECK(kl_to_prior(layer) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("empirical KL on a two-weight layer against the closed form") {
    BbbLayer layer;
    layer.w_mu = ad::Tensor({1, 1}, 0.4);
    layer.w_rho = ad::Tensor({1, 1}, softplus_inverse(0.3));
    layer.b_mu = ad::Tensor({1}, -0.7);
    layer.b_rho = ad::Tensor({1}, softplus_inverse(1.6));
    // ln(sp/sq) + (sq^2 + mu^2) / (2 sp^2) - 1/2 for each weight
    const double expect = (std::log(1 / 0.3) + (0.09 + 0.16) / 2 - 0.5) +
                          (std::log(1 / 1.6) + (2.56 + 0.49) / 2 - 0.5);
    CHECK(kl_to_prior(layer) == doctest::Approx(expect).epsilon(1e-12));
    Rng rng(4);
    ad::Tape tape;
    BoundLayer b = bind(tape, layer, false);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      WeightDraw d = sample_weights(b, rng);
      const double v = d.log_q.value().item() - d.log_prior.value().item();
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - expect) < 3.0 * se);
  }
}

TEST_CASE("forward passes") {
  const auto stack = toy_stack(10);
  const ad::Tensor x = toy_input(2, 23, 3, 11);

  SUBCASE("shapes and draw counts") {
    ad::Tape tape;
    auto bound = bind_stack(tape, stack, false);
    StochasticOutput out = forward_stochastic(bound, tape.constant(x), {5, 4}, 1);
    CHECK(out.passes.size() == 4);
    CHECK(out.draws == 4 * 5);
    for (const ad::Var& p : out.passes) CHECK(p.shape() == std::vector<std::size_t>{2, 23});
    CHECK(forward_mean(bound, tape.constant(x)).shape() == std::vector<std::size_t>{2, 23});
    StochasticOutput single = forward_stochastic(bound, tape.constant(x), {23, 30}, 1);
    CHECK(single.draws == 30);
  }
  SUBCASE("vanishing sigma reproduces the mean path") {
    auto frozen = stack;
    for (auto& l : frozen) {
      l.w_rho.fill(-60.0);
      l.b_rho.fill(-60.0);
    }
    ad::Tape tape;
    auto bound = bind_stack(tape, frozen, false);
    ad::Var mean = forward_mean(bound, tape.constant(x));
    StochasticOutput out = forward_stochastic(bound, tape.constant(x), {7, 1}, 3);
    for (std::size_t i = 0; i < mean.value().size(); ++i)
      CHECK(std::abs(out.passes[0].value()[i] - mean.value()[i]) < 1e-14);
  }
  SUBCASE("mean path is deterministic") {
    ad::Tape t1, t2;
    auto b1 = bind_stack(t1, stack, false);
    auto b2 = bind_stack(t2, stack, false);
    CHECK(forward_mean(b1, t1.constant(x)).value() == forward_mean(b2, t2.constant(x)).value());
  }
  SUBCASE("pass p does not depend on how many passes run") {
    ad::Tape tape;
    auto bound = bind_stack(tape, stack, false);
    StochasticOutput few = forward_stochastic(bound, tape.constant(x), {5, 2}, 9);
    StochasticOutput many = forward_stochastic(bound, tape.constant(x), {5, 6}, 9);
    CHECK(few.passes[1].value() == many.passes[1].value());
  }
}

TEST_CASE("weights change exactly at window boundaries") {
  Rng rng(12);
  // One identity unit on a constant input: the output is w + b, so it only
  // changes where a new draw starts.
  std::vector<BbbLayer> stack{BbbLayer(1, 1, Activation::kIdentity, {0, 1}, InitConfig{-1, 1, 0, 1}, rng)};
  ad::Tape tape;
  auto bound = bind_stack(tape, stack, false);
  const std::size_t T = 37, b = 6;
  StochasticOutput out = forward_stochastic(bound, tape.constant(ad::Tensor({1, T, 1}, 1.0)), {b, 3}, 4);
  for (const ad::Var& p : out.passes)
    for (std::size_t t = 1; t < T; ++t) {
      CAPTURE(t);
      if (t % b == 0) CHECK(p.value()[t] != p.value()[t - 1]);
      else CHECK(p.value()[t] == p.value()[t - 1]);
    }
}

TEST_CASE("spread across passes grows with sigma") {
  const ad::Tensor x = toy_input(2, 40, 3, 13);
  std::vector<double> variances;
  for (double factor : {0.5, 1.0, 2.0}) {
    auto stack = toy_stack(14);
    for (auto& l : stack) l.scale_sigma(factor);
    variances.push_back(mean_pass_variance(stack, x));
  }
  CHECK(variances[0] < variances[1]);
  CHECK(variances[1] < variances[2]);
}

TEST_CASE("aggregate_predictive") {
  CHECK_THROWS_AS(aggregate_predictive(std::vector<std::vector<double>>{{1, 2}}, {1, 2}),
                  std::invalid_argument);
  auto same = aggregate_predictive({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}, {1, 2, 3});
  CHECK(same.s == std::vector<double>{0, 0, 0});
  auto two = aggregate_predictive({{0.0}, {2.0}}, {1.0});
  CHECK(two.s[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(two.m[0] == 1.0);

  std::mt19937_64 rng(15);
  std::normal_distribution<double> g;
  const std::size_t frames = 200, n = 30;
  std::vector<std::vector<double>> passes(n, std::vector<double>(frames));
  for (auto& p : passes)
    for (double& v : p) v = g(rng);
  auto pred = aggregate_predictive(passes, std::vector<double>(frames, 0.0));
  double mean = 0.0, m2 = 0.0;
  for (double s : pred.s) mean += s, m2 += s * s;
  mean /= frames;
  const double se = std::sqrt((m2 / frames - mean * mean) / frames);
  CHECK(std::abs(mean - 1.0) < 3.0 * se + 0.01);  // 0.01 covers the small-sample bias of s

  ad::Tape tape;
  std::vector<ad::Var> vars{tape.constant(ad::Tensor::vector({0.0})), tape.constant(ad::Tensor::vector({2.0}))};
  PredictiveVars pv = aggregate_predictive(vars, tape.constant(ad::Tensor::vector({1.0})));
  CHECK(pv.s_hat.value().item() == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(aggregate_predictive(std::span(vars.data(), 1), vars[0]), std::invalid_argument);
}

TEST_CASE("reparameterisation gradient through the sampler") {
  const ad::Tensor x = toy_input(1, 12, 2, 16);
  for (int trial = 0; trial < 5; ++trial) {
    auto stack = toy_stack(20 + trial, 2);
    std::vector<ad::Tensor> inputs;
    for (const auto& l : stack) {
      inputs.push_back(l.w_mu);
      inputs.push_back(l.w_rho);
      inputs.push_back(l.b_mu);
      inputs.push_back(l.b_rho);
    }
    const double err = gradcheck::max_relative_error(
        [&](ad::Tape& tape, const std::vector<ad::Var>& v) {
          std::vector<BoundLayer> bound;
          for (std::size_t k = 0; k < stack.size(); ++k)
            bound.push_back({v[4 * k], v[4 * k + 1], v[4 * k + 2], v[4 * k + 3], stack[k].activation,
                             stack[k].prior});
          // Common random numbers: same seed on every replay.
          StochasticOutput out = forward_stochastic(bound, tape.constant(x), {4, 3}, 77);
          ad::Var m = ad::mean(ad::pass_mean(out.passes));
          return ad::add(m, ad::scale(out.complexity, 1e-3));
        },
        inputs);
    CHECK(err < 1e-3);
  }
}
