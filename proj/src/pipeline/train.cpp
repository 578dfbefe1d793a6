#include "labeldist/pipeline/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "labeldist/csv.hpp"
#include "labeldist/errors.hpp"

namespace labeldist::pipeline {

std::size_t Corpus::total_frames() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.frames();
  return n;
}

annotations::LabelDistSeries fuse(const annotations::AnnotationMatrix& ratings, const FusionConfig& fusion) {
  annotations::AnnotationMatrix ann = annotations::preprocess(ratings, fusion.preprocess);
  if (fusion.keep != 0) ann = annotations::drop_annotators(ann, fusion.keep);
  return annotations::build_label_dist(ann, fusion.family);
}

Corpus make_corpus(const synth::Dataset& data, const std::vector<std::size_t>& indices,
                   const FusionConfig& fusion) {
  Corpus corpus;
  corpus.frame_rate = data.frame_rate;
  corpus.samples_per_frame = data.samples_per_frame;
  corpus.feature_tail = data.feature_tail;
  for (std::size_t idx : indices) {
    if (idx >= data.sequences.size())
      throw ConfigError("sequence index " + std::to_string(idx) + " out of range");
    const synth::SynthSequence& src = data.sequences[idx];
    corpus.sequences.push_back({src.features, src.feature_dim, fuse(src.ratings, fusion)});
  }
  return corpus;
}

Split split_indices(std::size_t n, double dev_fraction) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0))
    throw ConfigError("dev_fraction must lie in (0, 1)");
  const auto dev = static_cast<std::size_t>(std::ceil(dev_fraction * static_cast<double>(n)));
  if (n < 2 || dev >= n) throw ConfigError("need at least one train and one dev sequence");
  Split s;
  for (std::size_t i = 0; i < n; ++i) (i < n - dev ? s.train : s.dev).push_back(i);
  return s;
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (seq_frames < model.window_b)
    throw ConfigError("train.seq_frames (" + std::to_string(seq_frames) + ") must be >= model.window_b (" +
                      std::to_string(model.window_b) + ")");
}

TrainConfig train_config_from(const Config& cfg, TrainConfig base) {
  TrainConfig t = base;
  t.lr = cfg.get_double("train.lr", t.lr);
  t.batch_size = cfg.get_uint("train.batch_size", t.batch_size);
  t.seq_frames = cfg.get_uint("train.seq_frames", t.seq_frames);
  t.epochs = cfg.get_uint("train.epochs", t.epochs);
  t.seed = cfg.get_uint("seed", t.seed);
  t.freeze_sigma = cfg.get_bool("train.freeze_sigma", t.freeze_sigma);
  return t;
}

void write_train_config(const TrainConfig& t, Config& cfg) {
  cfg.set("train.lr", csv::format(t.lr));
  cfg.set("train.batch_size", std::to_string(t.batch_size));
  cfg.set("train.seq_frames", std::to_string(t.seq_frames));
  cfg.set("train.epochs", std::to_string(t.epochs));
  cfg.set("train.freeze_sigma", t.freeze_sigma ? "true" : "false");
  cfg.set("seed", std::to_string(t.seed));
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<ad::Tensor*>& params, const std::vector<ad::Tensor>& grads) {
  if (params.size() != grads.size()) throw ShapeError("Adam: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const ad::Tensor* p : params) {
      m_.emplace_back(p->shape(), 0.0);
      v_.emplace_back(p->shape(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ShapeError("Adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Tensor& p = *params[k];
    const ad::Tensor& g = grads[k];
    if (g.size() != p.size()) throw ShapeError("Adam: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
    }
  }
}

std::vector<Window> make_windows(const Corpus& corpus, std::size_t seq_frames) {
  if (seq_frames == 0) throw ConfigError("seq_frames must be >= 1");
  std::vector<Window> out;
  for (std::size_t k = 0; k < corpus.sequences.size(); ++k) {
    const std::size_t T = corpus.sequences[k].frames();
    if (T < seq_frames) {
      out.push_back({k, 0, T});
      continue;
    }
    for (std::size_t start = 0; start + seq_frames <= T; start += seq_frames)
      out.push_back({k, start, seq_frames});
  }
  return out;
}

Batch make_batch(const Corpus& corpus, std::span<const Window> windows) {
  if (windows.empty()) throw ShapeError("make_batch: no windows");
  const std::size_t T = windows[0].frames;
  const std::size_t D = corpus.sequences[windows[0].sequence].feature_dim;
  const std::size_t L = T * corpus.samples_per_frame + corpus.feature_tail;
  const std::size_t B = windows.size();
  Batch batch;
  batch.frames = T;
  batch.nu = corpus.sequences[windows[0].sequence].labels.nu;
  batch.features = ad::Tensor({B, L, D});
  batch.m = ad::Tensor({B, T});
  batch.s = ad::Tensor({B, T});
  for (std::size_t b = 0; b < B; ++b) {
    const Window& w = windows[b];
    const Sequence& seq = corpus.sequences[w.sequence];
    if (w.frames != T) throw ShapeError("make_batch: windows differ in length");
    if (seq.feature_dim != D) throw ShapeError("make_batch: feature dimensions differ");
    if (seq.labels.nu != batch.nu) throw ShapeError("make_batch: sequences differ in nu");
    const std::size_t first = w.start * corpus.samples_per_frame;
    if ((first + L) * D > seq.features.size())
      throw InputError("sequence " + std::to_string(w.sequence) + " has too few feature samples");
    std::copy_n(seq.features.begin() + first * D, L * D, batch.features.data() + b * L * D);
    for (std::size_t t = 0; t < T; ++t) {
      batch.m[b * T + t] = seq.labels.m[w.start + t];
      batch.s[b * T + t] = std::max(seq.labels.s[w.start + t], kLabelSpreadFloor);
    }
  }
  return batch;
}

BatchLoss batch_loss(const BoundModel& bound, const ModelConfig& config, const Batch& batch,
                     std::size_t train_frames, bool training, Rng& dropout_rng,
                     std::uint64_t pass_seed) {
  ad::Tape& tape = *bound.head.front().w_mu.tape;
  ad::Var x = tape.constant(batch.features);
  ad::Var h = trunk(bound, config, x, batch.frames, training, dropout_rng);
  const bnn::StochasticOutput out = bnn::forward_stochastic(bound.head, h, config.schedule(), pass_seed);
  const bnn::PredictiveVars pred =
      bnn::aggregate_predictive(out.passes, bnn::forward_mean(bound.head, h), config.s_hat_variance_eps);

  BatchLoss loss;
  loss.ccc_term = ad::add_scalar(ad::scale(ad::ccc_rows(batch.m, pred.m_hat), -1.0), 1.0);
  ad::Var nll = ad::gaussian_nll_mean(batch.m, out.passes[0]);
  for (std::size_t p = 1; p < out.passes.size(); ++p)
    nll = ad::add(nll, ad::gaussian_nll_mean(batch.m, out.passes[p]));
  nll = ad::scale(nll, 1.0 / static_cast<double>(out.passes.size()));
  loss.elbo_term = ad::add(ad::scale(out.complexity, 1.0 / static_cast<double>(train_frames)), nll);
  auto finite = [](const ad::Var& v) {
    const auto vals = v.value().values();
    return std::all_of(vals.begin(), vals.end(), [](double x) { return std::isfinite(x); });
  };
  // The label KL validates its inputs, so a diverged estimate becomes a NaN term instead.
  loss.kl_term = finite(pred.m_hat) && finite(pred.s_hat)
                     ? ad::kl_label_mean(config.truth_family, batch.nu, batch.m, batch.s, pred.m_hat, pred.s_hat)
                     : tape.constant(ad::Tensor::scalar(std::numeric_limits<double>::quiet_NaN()));
  loss.total = ad::add(ad::add(loss.ccc_term, loss.elbo_term), ad::scale(loss.kl_term, config.alpha));
  return loss;
}

TrainResult train(const ModelConfig& model_cfg, const Corpus& data, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch) {
  model_cfg.validate();
  tcfg.validate(model_cfg);
  if (data.sequences.empty()) throw InputError("train: empty training partition");
  const std::size_t expected = model_cfg.required_input_length(tcfg.seq_frames);
  const std::size_t provided = tcfg.seq_frames * data.samples_per_frame + data.feature_tail;
  if (model_cfg.output_length(provided) < tcfg.seq_frames)
    throw ConfigError("features provide " + std::to_string(provided) + " samples per window but the extractor needs " +
                      std::to_string(expected));

  TrainResult result{Model(model_cfg, data.sequences[0].feature_dim, tcfg.seed), {}};
  Model& model = result.model;
  if (tcfg.freeze_sigma) {
    const double rho = bnn::softplus_inverse(1e-6);
    for (auto& layer : model.head) {
      layer.w_rho.fill(rho);
      layer.b_rho.fill(rho);
    }
  }

  const std::vector<Window> windows = make_windows(data, tcfg.seq_frames);
  std::size_t train_frames = 0;
  for (const Window& w : windows) train_frames += w.frames;

  Adam adam(tcfg.lr);
  std::vector<std::size_t> order(windows.size());
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(tcfg.seed, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += tcfg.batch_size, ++step) {
      std::vector<Window> chosen;
      for (std::size_t i = first; i < std::min(order.size(), first + tcfg.batch_size); ++i)
        chosen.push_back(windows[order[i]]);
      const Batch batch = make_batch(data, chosen);

      ad::Tape tape;
      const BoundModel bound = bind(tape, model, true);
      Rng dropout_rng = make_rng(tcfg.seed, "dropout", step);
      const BatchLoss loss = batch_loss(bound, model_cfg, batch, train_frames, true, dropout_rng,
                                        derive_seed(tcfg.seed, "bbb-passes", step));
      const std::pair<const char*, ad::Var> parts[] = {
          {"ccc", loss.ccc_term}, {"elbo", loss.elbo_term}, {"kl", loss.kl_term}, {"total", loss.total}};
      for (const auto& [name, var] : parts)
        if (!std::isfinite(var.value().item()))
          throw NumericError(name, std::string("non-finite ") + name + " loss term at epoch " +
                                       std::to_string(epoch) + ", batch " + std::to_string(batches + 1));

      tape.backward(loss.total);
      const std::vector<ad::Var> vars = bound_parameters(bound);
      auto params = model.parameters();
      std::vector<ad::Tensor*> targets;
      std::vector<ad::Tensor> grads;
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (tcfg.freeze_sigma && params[k].is_rho) continue;
        ad::Tensor g = vars[k].grad();
        for (double v : g.values())
          if (!std::isfinite(v))
            throw NumericError("gradient", "non-finite gradient for " + params[k].name + " at epoch " +
                                               std::to_string(epoch));
        targets.push_back(params[k].tensor);
        grads.push_back(std::move(g));
      }
      adam.step(targets, grads);

      rec.ccc_term += loss.ccc_term.value().item();
      rec.elbo_term += loss.elbo_term.value().item();
      rec.kl_term += loss.kl_term.value().item();
      rec.total += loss.total.value().item();
      ++batches;
    }
    if (batches > 0) {
      const double n = static_cast<double>(batches);
      rec.ccc_term /= n, rec.elbo_term /= n, rec.kl_term /= n, rec.total /= n;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, model);
  }
  return result;
}

}  // namespace labeldist::pipeline
