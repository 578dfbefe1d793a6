#pragma once
// Multi-annotator ratings: fusion into label distributions, smoothing filters,
// normalisation and annotator selection.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "labeldist/losses.hpp"

namespace labeldist::annotations {

/// T x a ratings, row-major (frame-major).
struct AnnotationMatrix {
  std::size_t frames = 0;
  std::size_t annotators = 0;
  std::vector<double> ratings;
  double frame_rate = 25.0;
  std::vector<std::string> ids;

  double at(std::size_t t, std::size_t i) const { return ratings[t * annotators + i]; }
  double& at(std::size_t t, std::size_t i) { return ratings[t * annotators + i]; }
  std::vector<double> column(std::size_t i) const;
  void set_column(std::size_t i, std::span<const double> values);

  /// Throws InputError unless a >= 2, T >= 2, sizes agree and values are finite.
  void validate() const;
};

/// Builds a matrix from per-annotator series. Ids default to a1, a2, ...
AnnotationMatrix from_columns(const std::vector<std::vector<double>>& columns, double frame_rate,
                              std::vector<std::string> ids = {});

/// Fused ground truth: per-frame mean and spread plus nu = annotator count.
struct LabelDistSeries {
  std::vector<double> m;
  std::vector<double> s;
  double nu = 0.0;
  LabelFamily family = LabelFamily::kStudentT;
};

std::vector<double> fuse_mean(const AnnotationMatrix& ann);
/// Unbiased per-frame standard deviation. Throws InputError for a < 2.
std::vector<double> fuse_std(const AnnotationMatrix& ann);

struct EweResult {
  std::vector<double> m;
  std::vector<double> weights;  // non-negative, sum to 1
  bool fallback = false;        // all correlations <= 0, plain mean used
};

/// Evaluator-weighted estimate: each annotator is weighted by the Pearson
/// correlation of its series with the mean of the others, clipped at 0.
EweResult fuse_ewe(const AnnotationMatrix& ann);

/// Pearson correlation; 0 if either series is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// Per-annotator zero mean, unit (population) standard deviation. Throws
/// InputError naming the annotator if a series is constant.
AnnotationMatrix normalize_local(const AnnotationMatrix& ann);

/// Centred running median. The window spans (w-1)/2 frames back and w/2
/// frames ahead, truncated at the sequence ends; an even number of samples
/// takes the mean of the two middle values.
std::vector<double> median_filter(std::span<const double> x, std::size_t window);

/// Second-order Butterworth low-pass run forward and backward (zero phase).
/// Throws ConfigError unless 0 < cutoff_hz < frame_rate / 2.
std::vector<double> lowpass_filter(std::span<const double> x, double cutoff_hz, double frame_rate);

struct PreprocessConfig {
  std::size_t median_window = 0;  // frames; 0 disables
  double lowpass_hz = 0.0;        // 0 disables
  /// Annotator indices the low-pass applies to; empty means all.
  std::vector<std::size_t> lowpass_annotators;
  bool normalize = false;
};

/// Applies median -> low-pass -> normalisation in that fixed order.
AnnotationMatrix preprocess(const AnnotationMatrix& ann, const PreprocessConfig& cfg);

/// Annotator indices ordered for removal: ascending mean Pearson correlation
/// with the other annotators, lower index first on ties.
std::vector<std::size_t> removal_order(const AnnotationMatrix& ann);

/// Keeps `keep` annotators, dropping the least correlated ones. Remaining
/// columns keep their original order. Throws ConfigError unless 2 <= keep <= a.
AnnotationMatrix drop_annotators(const AnnotationMatrix& ann, std::size_t keep);

/// m = fuse_mean, s = fuse_std, nu = a. The t family needs a >= 3 (warns
/// at a == 3) and throws UndefinedMomentError otherwise.
LabelDistSeries build_label_dist(const AnnotationMatrix& ann, LabelFamily family);

// CSV interchange ------------------------------------------------------------

/// `time_s,<id>...` with uniform frame spacing. Throws InputError on
/// malformed cells, fewer than 2 annotators or uneven spacing.
AnnotationMatrix read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const AnnotationMatrix& ann);

/// `time_s,m,s,nu`.
void write_fused(const std::filesystem::path& path, const LabelDistSeries& labels,
                 double frame_rate);
LabelDistSeries read_fused(const std::filesystem::path& path, LabelFamily family);

}  // namespace labeldist::annotations
