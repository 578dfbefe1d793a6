#include "labeldist/pipeline/evaluate.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "labeldist/errors.hpp"

namespace labeldist::pipeline {

namespace {

constexpr double kPredictedSpreadFloor = 1e-6;

}  // namespace

Prediction predict(const Model& model, const Corpus& corpus, std::size_t index, std::uint64_t seed) {
  const Sequence& seq = corpus.sequences.at(index);
  const std::size_t T = seq.frames();
  const std::size_t L = T * corpus.samples_per_frame + corpus.feature_tail;
  const std::size_t D = seq.feature_dim;
  if (L * D > seq.features.size())
    throw InputError("sequence " + std::to_string(index) + " has too few feature samples");
  ad::Tensor features({1, L, D}, std::vector<double>(seq.features.begin(), seq.features.begin() + L * D));

  ad::Tape tape;
  const BoundModel bound = bind(tape, model, false);
  Rng unused;
  ad::Var h = trunk(bound, model.config, tape.constant(std::move(features)), T, false, unused);
  const bnn::StochasticOutput out = bnn::forward_stochastic(bound.head, h, model.config.schedule(),
                                                            derive_seed(seed, "eval-passes", index));
  std::vector<std::vector<double>> passes;
  for (const ad::Var& p : out.passes) passes.push_back(p.value().storage());
  const bnn::PredictiveSeries series =
      bnn::aggregate_predictive(passes, bnn::forward_mean(bound.head, h).value().storage());
  return {series.m, series.s};
}

std::vector<Prediction> predict_all(const Model& model, const Corpus& corpus, std::uint64_t seed) {
  std::vector<Prediction> out;
  out.reserve(corpus.sequences.size());
  for (std::size_t k = 0; k < corpus.sequences.size(); ++k) out.push_back(predict(model, corpus, k, seed));
  return out;
}

EvalReport score(std::span<const Prediction> preds, std::span<const annotations::LabelDistSeries> labels,
                 LabelFamily family) {
  if (preds.size() != labels.size() || preds.empty())
    throw ShapeError("score: need one prediction per labelled sequence");
  EvalReport r;
  r.family = family;
  std::vector<double> m, s, m_hat, s_hat;
  double kl_t_sum = 0, kl_g_sum = 0, s_hat_sum = 0;
  std::size_t frames = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const Prediction& p = preds[k];
    const annotations::LabelDistSeries& y = labels[k];
    if (p.m.size() != y.m.size() || p.s.size() != y.s.size())
      throw ShapeError("score: prediction length differs from labels");
    const bool t_defined = y.nu > 2.0;
    SequenceMetrics seq;
    seq.ccc_m = ccc(y.m, p.m);
    seq.ccc_s = ccc(y.s, p.s);
    for (std::size_t t = 0; t < y.m.size(); ++t) {
      const double st = std::max(y.s[t], kLabelSpreadFloor);
      const double sh = std::max(p.s[t], kPredictedSpreadFloor);
      seq.kl_gaussian += kl_label(LabelFamily::kGaussian, y.nu, y.m[t], st, p.m[t], sh);
      if (t_defined) seq.kl_t += kl_label(LabelFamily::kStudentT, y.nu, y.m[t], st, p.m[t], sh);
      s_hat_sum += p.s[t];
    }
    kl_t_sum += seq.kl_t;
    kl_g_sum += seq.kl_gaussian;
    const double n = static_cast<double>(y.m.size());
    seq.kl_gaussian /= n;
    seq.kl_t = t_defined ? seq.kl_t / n : std::numeric_limits<double>::quiet_NaN();
    if (!t_defined) kl_t_sum = std::numeric_limits<double>::quiet_NaN();
    frames += y.m.size();
    m.insert(m.end(), y.m.begin(), y.m.end());
    s.insert(s.end(), y.s.begin(), y.s.end());
    m_hat.insert(m_hat.end(), p.m.begin(), p.m.end());
    s_hat.insert(s_hat.end(), p.s.begin(), p.s.end());
    r.per_sequence.push_back(seq);
  }
  r.ccc_m = ccc(m, m_hat);
  r.ccc_s = ccc(s, s_hat);
  r.kl_t = kl_t_sum / static_cast<double>(frames);
  r.kl_gaussian = kl_g_sum / static_cast<double>(frames);
  r.kl = family == LabelFamily::kStudentT ? r.kl_t : r.kl_gaussian;
  r.mean_s_hat = s_hat_sum / static_cast<double>(frames);
  return r;
}

Prediction shift_prediction(const Prediction& pred, std::size_t frames) {
  auto delay = [frames](const std::vector<double>& x) {
    std::vector<double> out(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = t < frames ? x.front() : x[t - frames];
    return out;
  };
  return {delay(pred.m), delay(pred.s)};
}

ShiftResult tune_time_shift(std::span<const Prediction> preds,
                            std::span<const annotations::LabelDistSeries> labels, double frame_rate,
                            const ShiftGrid& grid) {
  if (preds.size() != labels.size() || preds.empty())
    throw ShapeError("tune_time_shift: need one prediction per labelled sequence");
  if (!(grid.min_s > 0.0 && grid.min_s <= grid.max_s) || !(frame_rate > 0.0))
    throw ConfigError("tune_time_shift: invalid grid");
  std::vector<double> truth;
  std::size_t shortest = std::numeric_limits<std::size_t>::max();
  for (const auto& y : labels) {
    truth.insert(truth.end(), y.m.begin(), y.m.end());
    shortest = std::min(shortest, y.m.size());
  }
  auto ccc_at = [&](std::size_t k) {
    std::vector<double> est;
    est.reserve(truth.size());
    for (const Prediction& p : preds) {
      const std::size_t T = p.m.size();
      for (std::size_t t = 0; t < T; ++t) est.push_back(t < k ? p.m.front() : p.m[t - k]);
    }
    return ccc(truth, est);
  };

  const auto k_min = static_cast<std::size_t>(std::llround(grid.min_s * frame_rate));
  const auto k_max = static_cast<std::size_t>(std::llround(grid.max_s * frame_rate));
  const double base = ccc_at(0);
  ShiftResult r;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = std::max<std::size_t>(k_min, 1); k <= k_max && k < shortest; ++k) {
    const double v = ccc_at(k);
    if (v > best) best = v, r.grid_best_frames = k;
  }
  if (r.grid_best_frames == 0) throw ConfigError("tune_time_shift: sequences shorter than the grid");
  r.grid_best_s = static_cast<double>(r.grid_best_frames) / frame_rate;
  r.improvement = best - base;
  r.applied = r.improvement >= grid.threshold;
  return r;
}

EvalReport evaluate(const Model& model, const Corpus& report, const EvalOptions& options,
                    const Corpus* tune) {
  std::vector<Prediction> preds = predict_all(model, report, options.seed);
  std::vector<annotations::LabelDistSeries> labels;
  for (const auto& s : report.sequences) labels.push_back(s.labels);

  ShiftResult shift;
  if (options.time_shift) {
    if (options.tune_partition == options.report_partition)
      throw ConfigError("time-shift tuning and reporting must use different partitions (both '" +
                        options.report_partition + "')");
    if (tune == nullptr) throw ConfigError("time-shift tuning partition not provided");
    const std::vector<Prediction> tune_preds = predict_all(model, *tune, options.seed);
    std::vector<annotations::LabelDistSeries> tune_labels;
    for (const auto& s : tune->sequences) tune_labels.push_back(s.labels);
    shift = tune_time_shift(tune_preds, tune_labels, tune->frame_rate, options.grid);
    if (shift.applied)
      for (auto& p : preds) p = shift_prediction(p, shift.grid_best_frames);
  }
  EvalReport r = score(preds, labels, options.family);
  r.shift_applied = shift.applied;
  r.best_time_shift_s = static_cast<double>(shift.frames()) / report.frame_rate;
  return r;
}

double significance_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ConfigError("significance_test: need two paired lists of equal length >= 2");
  const double n = static_cast<double>(a.size());
  double mean = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) return mean > 0.0 ? 0.0 : 1.0;
  const double t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  return boost::math::cdf(boost::math::complement(dist, t));
}

}  // namespace labeldist::pipeline
