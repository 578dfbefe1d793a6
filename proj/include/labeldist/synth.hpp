#pragma once
// Synthetic sequences with known per-frame truth (m_t, s_t), a feature channel
// the network can learn from, and simulated annotators.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "labeldist/annotations.hpp"
#include "labeldist/config.hpp"

namespace labeldist::synth {

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t num_sequences = 20;
  std::size_t frames_per_sequence = 300;
  double frame_rate = 25.0;
  std::size_t num_annotators = 6;
  std::size_t feature_dim = 3;
  /// Scales annotator noise and bias; 0 makes every annotator equal the truth.
  double noise_scale = 1.0;
  double bias_scale = 0.05;
  double feature_noise = 0.05;
  double injected_lag_s = 0.0;
  std::vector<std::size_t> distortion_annotators;
  double distortion_freq_hz = 2.0;
  double distortion_amplitude = 0.3;
  /// Feature samples per label frame and extra trailing samples, matching the
  /// extractor's total downsampling and receptive field.
  std::size_t samples_per_frame = 250;
  std::size_t feature_tail = 307;

  /// Throws ConfigError on an invalid configuration.
  void validate() const;
  std::size_t feature_length() const {
    return frames_per_sequence * samples_per_frame + feature_tail;
  }
};

struct SynthSequence {
  std::vector<double> features;  // feature_length x feature_dim, row-major
  std::size_t feature_dim = 0;
  std::vector<double> truth_m;
  std::vector<double> truth_s;   // per-frame std of the annotator noise
  annotations::AnnotationMatrix ratings;

  std::size_t feature_length() const { return feature_dim ? features.size() / feature_dim : 0; }
};

/// `synth.*` keys plus `seed`.
SynthConfig synth_config_from(const Config& cfg, SynthConfig base = {});
void write_synth_config(const SynthConfig& synth, Config& cfg);

/// Sequence k depends only on (seed, k).
std::vector<SynthSequence> generate(const SynthConfig& cfg);

/// Delays x by round(lag_s * frame_rate) frames, padding with x[0]. Throws
/// ConfigError for a negative lag or one that reaches past the sequence.
std::vector<double> inject_lag(std::span<const double> x, double lag_s, double frame_rate);

/// Directory layout: dataset.txt plus seq_NNN_{annotations,features,truth}.csv.
void write_dataset(const std::filesystem::path& dir, const SynthConfig& cfg,
                   const std::vector<SynthSequence>& sequences);

struct Dataset {
  std::vector<SynthSequence> sequences;
  double frame_rate = 25.0;
  std::size_t samples_per_frame = 250;
  std::size_t feature_tail = 307;
};

/// Reads a directory written by write_dataset. Throws InputError.
Dataset read_dataset(const std::filesystem::path& dir);

std::filesystem::path sequence_file(const std::filesystem::path& dir, std::size_t index,
                                    const char* kind);

}  // namespace labeldist::synth
