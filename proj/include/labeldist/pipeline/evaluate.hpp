#pragma once
// Prediction, metrics, time-shift post-processing and significance testing.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "labeldist/pipeline/train.hpp"

namespace labeldist::pipeline {

struct Prediction {
  std::vector<double> m;  // mean-weight path
  std::vector<double> s;  // unbiased std over the stochastic passes
};

/// Runs one full sequence through the model without dropout. Pass draws
/// come from `seed`, so repeated calls agree.
Prediction predict(const Model& model, const Corpus& corpus, std::size_t index, std::uint64_t seed);
std::vector<Prediction> predict_all(const Model& model, const Corpus& corpus, std::uint64_t seed);

struct SequenceMetrics {
  double ccc_m = 0, ccc_s = 0;
  double kl_t = 0, kl_gaussian = 0;
};

struct EvalReport {
  LabelFamily family = LabelFamily::kStudentT;
  double ccc_m = 0, ccc_s = 0;
  double kl = 0;            // under `family`
  double kl_t = 0;          // t-family metric; NaN when nu <= 2
  double kl_gaussian = 0;
  double mean_s_hat = 0;
  double best_time_shift_s = 0;  // 0 unless a shift was applied
  bool shift_applied = false;
  std::vector<SequenceMetrics> per_sequence;
};

/// CCC over the concatenated partition and mean per-frame KL.
EvalReport score(std::span<const Prediction> preds, std::span<const annotations::LabelDistSeries> labels,
                 LabelFamily family);

/// Delays a prediction by `frames`, padding with its first value.
Prediction shift_prediction(const Prediction& pred, std::size_t frames);

struct ShiftResult {
  std::size_t grid_best_frames = 0;  // best grid point, always within the grid
  double grid_best_s = 0;
  double improvement = 0;            // CCC(m) gain of the best grid point over no shift
  bool applied = false;              // improvement reached the no-op threshold
  std::size_t frames() const { return applied ? grid_best_frames : 0; }
};

struct ShiftGrid {
  double min_s = 0.04;
  double max_s = 10.0;
  double threshold = 1e-3;
};

/// Grid search over delays maximising concatenated CCC(m). Grid points that
/// leave no overlap with a sequence are skipped.
ShiftResult tune_time_shift(std::span<const Prediction> preds,
                            std::span<const annotations::LabelDistSeries> labels, double frame_rate,
                            const ShiftGrid& grid = {});

struct EvalOptions {
  LabelFamily family = LabelFamily::kStudentT;
  bool time_shift = false;
  std::string tune_partition = "train";
  std::string report_partition = "dev";
  ShiftGrid grid;
  std::uint64_t seed = 0;
};

/// Scores `report`, tuning the time shift on `tune` when enabled. Throws
/// ConfigError if the tuning and reporting partitions coincide.
EvalReport evaluate(const Model& model, const Corpus& report, const EvalOptions& options,
                    const Corpus* tune = nullptr);

/// One-tailed paired t-test of "a exceeds b". Zero-variance differences
/// give 0 when a's mean is higher and 1 otherwise.
double significance_test(std::span<const double> a, std::span<const double> b);

}  // namespace labeldist::pipeline
