#pragma once
// Training data assembly, the optimiser and the end-to-end training loop.

#include <cstdint>
#include <functional>
#include <vector>

#include "labeldist/annotations.hpp"
#include "labeldist/pipeline/model.hpp"
#include "labeldist/synth.hpp"

namespace labeldist::pipeline {

/// A feature sequence with its fused label distribution.
struct Sequence {
  std::vector<double> features;  // samples x feature_dim, row-major
  std::size_t feature_dim = 0;
  annotations::LabelDistSeries labels;
  std::size_t frames() const { return labels.m.size(); }
};

struct Corpus {
  std::vector<Sequence> sequences;
  double frame_rate = 25.0;
  std::size_t samples_per_frame = 250;
  std::size_t feature_tail = 307;
  std::size_t total_frames() const;
};

struct FusionConfig {
  LabelFamily family = LabelFamily::kStudentT;
  annotations::PreprocessConfig preprocess;
  /// Annotators kept per sequence; 0 keeps all.
  std::size_t keep = 0;
};

/// Preprocess, optional annotator drop, then fusion.
annotations::LabelDistSeries fuse(const annotations::AnnotationMatrix& ratings, const FusionConfig& fusion);

/// Applies `fuse` to each selected sequence.
Corpus make_corpus(const synth::Dataset& data, const std::vector<std::size_t>& indices,
                   const FusionConfig& fusion);

/// The last ceil(n * dev_fraction) sequences form the dev partition.
struct Split {
  std::vector<std::size_t> train, dev;
};
Split split_indices(std::size_t n, double dev_fraction);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 5;
  std::size_t seq_frames = 300;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  /// Pins every weight sigma near zero and leaves rho untrained.
  bool freeze_sigma = false;

  void validate(const ModelConfig& model) const;
};

TrainConfig train_config_from(const Config& cfg, TrainConfig base = {});
void write_train_config(const TrainConfig& train, Config& cfg);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// One bias-corrected update of every parameter with its gradient.
  void step(const std::vector<ad::Tensor*>& params, const std::vector<ad::Tensor>& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<ad::Tensor> m_, v_;
};

/// Training window: frames [start, start + frames) of one sequence.
struct Window {
  std::size_t sequence = 0;
  std::size_t start = 0;
  std::size_t frames = 0;
};

/// Disjoint windows of `seq_frames`; a trailing remainder is dropped and
/// shorter sequences give one window over their full length.
std::vector<Window> make_windows(const Corpus& corpus, std::size_t seq_frames);

/// Batch of windows stacked as features [B x L x D] and labels [B x T].
struct Batch {
  ad::Tensor features, m, s;
  double nu = 0.0;
  std::size_t frames = 0;
};
Batch make_batch(const Corpus& corpus, std::span<const Window> windows);

/// Label spreads below this are raised to it before any KL evaluation.
inline constexpr double kLabelSpreadFloor = 1e-3;

struct BatchLoss {
  ad::Var total;
  ad::Var ccc_term;   // 1 - mean CCC(m)
  ad::Var elbo_term;  // complexity / N_train_frames + mean unit-variance NLL
  ad::Var kl_term;    // mean label KL (before alpha)
};

/// Composite objective on one batch. `train_frames` is the frame count of
/// the whole training partition.
BatchLoss batch_loss(const BoundModel& bound, const ModelConfig& config, const Batch& batch,
                     std::size_t train_frames, bool training, Rng& dropout_rng,
                     std::uint64_t pass_seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double ccc_term = 0, elbo_term = 0, kl_term = 0, total = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&, const Model&)>;

/// Deterministic given tcfg.seed. Throws NumericError naming the first
/// non-finite loss component or gradient.
TrainResult train(const ModelConfig& model, const Corpus& data, const TrainConfig& tcfg,
                  const EpochCallback& on_epoch = {});

}  // namespace labeldist::pipeline
