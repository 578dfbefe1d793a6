#include "labeldist/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "labeldist/config.hpp"
#include "labeldist/csv.hpp"
#include "labeldist/errors.hpp"
#include "labeldist/rng.hpp"

namespace labeldist::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Tone {
  double amplitude, freq_hz, phase;
};

/// Smooth processes evaluated at continuous time (seconds).
struct TruthProcess {
  std::vector<Tone> mean_tones;
  Tone spread_tone;

  double m(double time_s) const {
    double v = 0.0;
    for (const Tone& k : mean_tones) v += k.amplitude * std::sin(kTwoPi * k.freq_hz * time_s + k.phase);
    return v;
  }
  double s(double time_s) const {
    // Stays within [0.05, 0.30].
    return 0.05 + 0.25 * (0.5 + 0.5 * std::sin(kTwoPi * spread_tone.freq_hz * time_s + spread_tone.phase));
  }
};

TruthProcess draw_truth(Rng& rng) {
  std::uniform_real_distribution<double> amp(0.2, 0.45), freq(0.03, 0.4), phase(0.0, kTwoPi),
      slow(0.03, 0.2);
  TruthProcess p;
  for (int k = 0; k < 3; ++k) p.mean_tones.push_back({amp(rng), freq(rng), phase(rng)});
  p.spread_tone = {1.0, slow(rng), phase(rng)};
  return p;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_sequences == 0) throw ConfigError("synth: num_sequences must be >= 1");
  if (frames_per_sequence < 2) throw ConfigError("synth: frames_per_sequence must be >= 2");
  if (num_annotators < 2) throw ConfigError("synth: num_annotators must be >= 2");
  if (feature_dim == 0) throw ConfigError("synth: feature_dim must be >= 1");
  if (!(frame_rate > 0.0)) throw ConfigError("synth: frame_rate must be > 0");
  if (!(noise_scale >= 0.0) || !(bias_scale >= 0.0) || !(feature_noise >= 0.0))
    throw ConfigError("synth: noise scales must be >= 0");
  if (samples_per_frame == 0) throw ConfigError("synth: samples_per_frame must be >= 1");
  if (!(injected_lag_s >= 0.0) ||
      std::lround(injected_lag_s * frame_rate) >= static_cast<long>(frames_per_sequence))
    throw ConfigError("synth: injected_lag_s must be >= 0 and shorter than a sequence");
  for (std::size_t i : distortion_annotators)
    if (i >= num_annotators)
      throw ConfigError("synth: distortion annotator " + std::to_string(i) + " out of range");
  if (!distortion_annotators.empty() &&
      !(distortion_freq_hz > 0.0 && distortion_freq_hz < frame_rate / 2.0))
    throw ConfigError("synth: distortion_freq_hz must lie in (0, frame_rate / 2)");
}

std::vector<double> inject_lag(std::span<const double> x, double lag_s, double frame_rate) {
  if (!(lag_s >= 0.0)) throw ConfigError("inject_lag: lag must be >= 0");
  if (!(frame_rate > 0.0)) throw ConfigError("inject_lag: frame_rate must be > 0");
  const long k = std::lround(lag_s * frame_rate);
  if (x.empty() || k >= static_cast<long>(x.size()))
    throw ConfigError("inject_lag: lag of " + std::to_string(k) + " frames exceeds the sequence");
  std::vector<double> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t)
    out[t] = static_cast<long>(t) < k ? x[0] : x[t - static_cast<std::size_t>(k)];
  return out;
}

std::vector<SynthSequence> generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t T = cfg.frames_per_sequence, a = cfg.num_annotators, D = cfg.feature_dim;

  // Mixing from (m, s) to feature channels, shared by every sequence.
  Rng mix_rng = make_rng(cfg.seed, "synth-mix");
  std::normal_distribution<double> normal;
  std::vector<double> mix(D * 2);
  for (double& w : mix) w = normal(mix_rng) / std::numbers::sqrt2;

  std::vector<SynthSequence> out;
  out.reserve(cfg.num_sequences);
  for (std::size_t k = 0; k < cfg.num_sequences; ++k) {
    Rng truth_rng = make_rng(cfg.seed, "synth-truth", k);
    Rng ann_rng = make_rng(cfg.seed, "synth-annotators", k);
    Rng feat_rng = make_rng(cfg.seed, "synth-features", k);
    const TruthProcess proc = draw_truth(truth_rng);

    SynthSequence seq;
    seq.feature_dim = D;
    seq.truth_m.resize(T);
    seq.truth_s.resize(T);
    std::vector<double> base_s(T);
    for (std::size_t t = 0; t < T; ++t) {
      const double time = static_cast<double>(t) / cfg.frame_rate;
      seq.truth_m[t] = proc.m(time);
      base_s[t] = proc.s(time);
      seq.truth_s[t] = cfg.noise_scale * base_s[t];
    }

    const std::vector<double> lagged = inject_lag(seq.truth_m, cfg.injected_lag_s, cfg.frame_rate);
    std::vector<double> bias(a), distortion_phase(a);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    for (std::size_t i = 0; i < a; ++i) bias[i] = cfg.bias_scale * normal(ann_rng);
    for (std::size_t i = 0; i < a; ++i) distortion_phase[i] = phase(ann_rng);
    std::vector<std::vector<double>> cols(a, std::vector<double>(T));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < a; ++i)
        cols[i][t] = lagged[t] + cfg.noise_scale * (bias[i] + base_s[t] * normal(ann_rng));
    const double dt = 1.0 / cfg.frame_rate;
    for (std::size_t i : cfg.distortion_annotators)
      for (std::size_t t = 0; t < T; ++t)
        cols[i][t] += cfg.distortion_amplitude *
                      std::sin(kTwoPi * cfg.distortion_freq_hz * t * dt + distortion_phase[i]);
    seq.ratings = annotations::from_columns(cols, cfg.frame_rate);

    // Sample j carries the truth at frame (j - centre) / samples_per_frame, so
    // frame t sits in the middle of the extractor's receptive field for output t.
    const std::size_t L = cfg.feature_length();
    const double centre = 0.5 * static_cast<double>(cfg.samples_per_frame + cfg.feature_tail);
    seq.features.resize(L * D);
    for (std::size_t j = 0; j < L; ++j) {
      const double frame = (static_cast<double>(j) - centre) / static_cast<double>(cfg.samples_per_frame);
      const double time = frame * dt;
      const double zm = 2.0 * proc.m(time);
      const double zs = (proc.s(time) - 0.175) / 0.125;
      for (std::size_t d = 0; d < D; ++d)
        seq.features[j * D + d] =
            std::tanh(mix[2 * d] * zm + mix[2 * d + 1] * zs + cfg.feature_noise * normal(feat_rng));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

SynthConfig synth_config_from(const Config& cfg, SynthConfig base) {
  SynthConfig s = base;
  s.seed = cfg.get_uint("seed", s.seed);
  s.num_sequences = cfg.get_uint("synth.num_sequences", s.num_sequences);
  s.frames_per_sequence = cfg.get_uint("synth.frames_per_sequence", s.frames_per_sequence);
  s.frame_rate = cfg.get_double("synth.frame_rate", s.frame_rate);
  s.num_annotators = cfg.get_uint("synth.num_annotators", s.num_annotators);
  s.feature_dim = cfg.get_uint("synth.feature_dim", s.feature_dim);
  s.noise_scale = cfg.get_double("synth.noise_scale", s.noise_scale);
  s.bias_scale = cfg.get_double("synth.bias_scale", s.bias_scale);
  s.feature_noise = cfg.get_double("synth.feature_noise", s.feature_noise);
  s.injected_lag_s = cfg.get_double("synth.injected_lag_s", s.injected_lag_s);
  s.distortion_annotators = cfg.get_sizes("synth.distortion_annotators", s.distortion_annotators);
  s.distortion_freq_hz = cfg.get_double("synth.distortion_freq_hz", s.distortion_freq_hz);
  s.distortion_amplitude = cfg.get_double("synth.distortion_amplitude", s.distortion_amplitude);
  s.samples_per_frame = cfg.get_uint("synth.samples_per_frame", s.samples_per_frame);
  s.feature_tail = cfg.get_uint("synth.feature_tail", s.feature_tail);
  return s;
}

void write_synth_config(const SynthConfig& s, Config& cfg) {
  cfg.set("seed", std::to_string(s.seed));
  cfg.set("synth.num_sequences", std::to_string(s.num_sequences));
  cfg.set("synth.frames_per_sequence", std::to_string(s.frames_per_sequence));
  cfg.set("synth.frame_rate", csv::format(s.frame_rate));
  cfg.set("synth.num_annotators", std::to_string(s.num_annotators));
  cfg.set("synth.feature_dim", std::to_string(s.feature_dim));
  cfg.set("synth.noise_scale", csv::format(s.noise_scale));
  cfg.set("synth.bias_scale", csv::format(s.bias_scale));
  cfg.set("synth.feature_noise", csv::format(s.feature_noise));
  cfg.set("synth.injected_lag_s", csv::format(s.injected_lag_s));
  cfg.set("synth.distortion_annotators", join(s.distortion_annotators));
  cfg.set("synth.distortion_freq_hz", csv::format(s.distortion_freq_hz));
  cfg.set("synth.distortion_amplitude", csv::format(s.distortion_amplitude));
  cfg.set("synth.samples_per_frame", std::to_string(s.samples_per_frame));
  cfg.set("synth.feature_tail", std::to_string(s.feature_tail));
}

std::filesystem::path sequence_file(const std::filesystem::path& dir, std::size_t index,
                                    const char* kind) {
  char name[64];
  std::snprintf(name, sizeof name, "seq_%03zu_%s.csv", index, kind);
  return dir / name;
}

void write_dataset(const std::filesystem::path& dir, const SynthConfig& cfg,
                   const std::vector<SynthSequence>& sequences) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());

  Config meta;
  meta.set("num_sequences", std::to_string(sequences.size()));
  meta.set("frame_rate", csv::format(cfg.frame_rate));
  meta.set("samples_per_frame", std::to_string(cfg.samples_per_frame));
  meta.set("feature_tail", std::to_string(cfg.feature_tail));
  meta.save(dir / "dataset.txt", "synthetic dataset");

  for (std::size_t k = 0; k < sequences.size(); ++k) {
    const SynthSequence& seq = sequences[k];
    annotations::write_annotations(sequence_file(dir, k, "annotations"), seq.ratings);

    csv::Table truth{{"time_s", "m", "s"}, {}};
    for (std::size_t t = 0; t < seq.truth_m.size(); ++t)
      truth.rows.push_back({t / cfg.frame_rate, seq.truth_m[t], seq.truth_s[t]});
    csv::write(sequence_file(dir, k, "truth"), truth);

    csv::Table feats;
    for (std::size_t d = 0; d < seq.feature_dim; ++d) feats.header.push_back("f" + std::to_string(d + 1));
    const std::size_t L = seq.feature_length();
    feats.rows.reserve(L);
    for (std::size_t j = 0; j < L; ++j)
      feats.rows.emplace_back(seq.features.begin() + j * seq.feature_dim,
                              seq.features.begin() + (j + 1) * seq.feature_dim);
    csv::write(sequence_file(dir, k, "features"), feats);
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "dataset.txt"))
    throw InputError(dir.string() + ": not a dataset directory (dataset.txt missing)");
  const Config meta = Config::load(dir / "dataset.txt");
  Dataset data;
  try {
    data.frame_rate = meta.get_double("frame_rate", 25.0);
    data.samples_per_frame = meta.get_uint("samples_per_frame", 250);
    data.feature_tail = meta.get_uint("feature_tail", 307);
  } catch (const ConfigError& e) {
    throw InputError(dir.string() + "/dataset.txt: " + e.what());
  }
  const std::size_t n = meta.get_uint("num_sequences", 0);
  if (n == 0) throw InputError(dir.string() + "/dataset.txt: num_sequences missing or zero");
  for (std::size_t k = 0; k < n; ++k) {
    SynthSequence seq;
    seq.ratings = annotations::read_annotations(sequence_file(dir, k, "annotations"));
    const csv::Table truth = csv::read(sequence_file(dir, k, "truth"));
    seq.truth_m = truth.column_values(truth.column("m"));
    seq.truth_s = truth.column_values(truth.column("s"));
    const csv::Table feats = csv::read(sequence_file(dir, k, "features"));
    seq.feature_dim = feats.header.size();
    seq.features.reserve(feats.rows.size() * seq.feature_dim);
    for (const auto& row : feats.rows) seq.features.insert(seq.features.end(), row.begin(), row.end());
    if (seq.truth_m.size() != seq.ratings.frames)
      throw InputError(sequence_file(dir, k, "truth").string() + ": frame count differs from annotations");
    if (seq.feature_length() != seq.ratings.frames * data.samples_per_frame + data.feature_tail)
      throw InputError(sequence_file(dir, k, "features").string() + ": unexpected number of samples");
    data.sequences.push_back(std::move(seq));
  }
  return data;
}

}  // namespace labeldist::synth
