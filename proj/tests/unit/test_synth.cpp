#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "labeldist/annotations.hpp"
#include "labeldist/errors.hpp"
#include "labeldist/synth.hpp"
#include "oracles.hpp"

using namespace labeldist;
using namespace labeldist::synth;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.seed = 11;
  cfg.num_sequences = 3;
  cfg.frames_per_sequence = 120;
  cfg.samples_per_frame = 4;
  cfg.feature_tail = 5;
  return cfg;
}

}  // namespace

TEST_CASE("generate shapes and defaults") {
  SynthConfig cfg;
  CHECK(cfg.frames_per_sequence == 300);
  CHECK(cfg.frame_rate == 25.0);
  CHECK(cfg.num_annotators == 6);
  CHECK(cfg.feature_length() == 75307);

  const auto seqs = generate(small_config());
  REQUIRE(seqs.size() == 3);
  for (const auto& s : seqs) {
    CHECK(s.truth_m.size() == 120);
    CHECK(s.truth_s.size() == 120);
    CHECK(s.ratings.frames == 120);
    CHECK(s.ratings.annotators == 6);
    CHECK(s.feature_length() == 120 * 4 + 5);
    for (double v : s.truth_s) CHECK(v > 0.0);
    for (double v : s.features) CHECK(std::abs(v) <= 1.0);
  }
}

TEST_CASE("generate is deterministic and per-sequence") {
  SynthConfig cfg = small_config();
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].features == b[k].features);
    CHECK(a[k].ratings.ratings == b[k].ratings.ratings);
    CHECK(a[k].truth_m == b[k].truth_m);
  }
  cfg.num_sequences = 5;
  const auto c = generate(cfg);
  CHECK(c[1].ratings.ratings == a[1].ratings.ratings);
  cfg.seed = 12;
  CHECK(generate(cfg)[0].truth_m != a[0].truth_m);
}

TEST_CASE("noise-free annotators equal the truth") {
  SynthConfig cfg = small_config();
  cfg.noise_scale = 0.0;
  for (const auto& s : generate(cfg))
    for (std::size_t t = 0; t < s.ratings.frames; ++t)
      for (std::size_t i = 0; i < s.ratings.annotators; ++i) CHECK(s.ratings.at(t, i) == s.truth_m[t]);
}

TEST_CASE("annotator spread tracks truth_s") {
  SynthConfig cfg = small_config();
  cfg.num_sequences = 40;
  cfg.frames_per_sequence = 300;
  cfg.samples_per_frame = 1;
  cfg.feature_tail = 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (const auto& s : generate(cfg)) {
    const auto sd = annotations::fuse_std(s.ratings);
    for (std::size_t t = 0; t < sd.size(); ++t) {
      sx += s.truth_s[t], sy += sd[t], sxx += s.truth_s[t] * s.truth_s[t], sxy += s.truth_s[t] * sd[t];
      n += 1;
    }
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("fused mean recovers the truth") {
  SynthConfig cfg = small_config();
  cfg.noise_scale = 0.2;
  for (const auto& s : generate(cfg)) {
    const auto m = annotations::fuse_mean(s.ratings);
    double err = 0, bound = 0;
    for (std::size_t t = 0; t < m.size(); ++t) {
      err += std::abs(m[t] - s.truth_m[t]);
      bound += 3.0 * s.truth_s[t] / std::sqrt(6.0);
    }
    CHECK(err < bound);
  }
}

TEST_CASE("inject_lag") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(inject_lag(x, 0.0, 25.0) == x);
  CHECK(inject_lag(x, 0.08, 25.0) == std::vector<double>{1, 1, 1, 2, 3, 4, 5, 6});
  std::vector<double> long_x(100);
  for (std::size_t t = 0; t < 100; ++t) long_x[t] = std::sin(0.3 * t);
  const auto lagged = inject_lag(long_x, 1.0, 25.0);
  for (std::size_t t = 25; t < 100; ++t) CHECK(lagged[t] == long_x[t - 25]);
  CHECK(lagged[3] == long_x[0]);
  CHECK_THROWS_AS(inject_lag(x, 0.4, 25.0), ConfigError);
  CHECK_THROWS_AS(inject_lag(x, -0.04, 25.0), ConfigError);

  SynthConfig cfg = small_config();
  cfg.noise_scale = 0.0;
  cfg.injected_lag_s = 1.0;
  const auto s = generate(cfg)[0];
  for (std::size_t t = 25; t < 120; ++t) CHECK(s.ratings.at(t, 0) == s.truth_m[t - 25]);
}

TEST_CASE("distortion is injected and removable") {
  SynthConfig cfg = small_config();
  cfg.frames_per_sequence = 300;
  cfg.distortion_annotators = {1};
  cfg.distortion_freq_hz = 2.0;
  const auto s = generate(cfg)[0];
  const auto noisy = s.ratings.column(1);
  const auto clean = s.ratings.column(0);
  const double before = oracle::tone_amplitude(noisy, 2.0, 25.0);
  CHECK(before > 5.0 * oracle::tone_amplitude(clean, 2.0, 25.0));
  const double after = oracle::tone_amplitude(annotations::lowpass_filter(noisy, 0.25, 25.0), 2.0, 25.0);
  CHECK(20.0 * std::log10(after / before) <= -12.0);
}

TEST_CASE("config validation") {
  SynthConfig cfg = small_config();
  cfg.num_annotators = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.frames_per_sequence = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.distortion_annotators = {6};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.injected_lag_s = 100.0;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("dataset round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "labeldist_test_synth";
  std::filesystem::remove_all(dir);
  const SynthConfig cfg = small_config();
  const auto seqs = generate(cfg);
  write_dataset(dir, cfg, seqs);
  const Dataset back = read_dataset(dir);
  REQUIRE(back.sequences.size() == seqs.size());
  CHECK(back.samples_per_frame == 4);
  CHECK(back.feature_tail == 5);
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    CHECK(back.sequences[k].feature_dim == 3);
    REQUIRE(back.sequences[k].features.size() == seqs[k].features.size());
    for (std::size_t j = 0; j < seqs[k].features.size(); ++j)
      CHECK(back.sequences[k].features[j] == doctest::Approx(seqs[k].features[j]).epsilon(1e-8));
  }
  CHECK_THROWS_AS(read_dataset(dir / "nope"), InputError);
}
