#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "labeldist/annotations.hpp"
#include "labeldist/errors.hpp"
#include "labeldist/log.hpp"
#include "oracles.hpp"

using namespace labeldist;
using namespace labeldist::annotations;

namespace {

std::vector<double> sine(std::size_t n, double freq, double rate, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = amp * std::sin(2.0 * std::numbers::pi * freq * t / rate + phase);
  return x;
}

AnnotationMatrix random_matrix(std::size_t T, std::size_t a, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> cols(a, std::vector<double>(T));
  for (auto& c : cols)
    for (double& v : c) v = g(rng);
  return from_columns(cols, 25.0);
}

struct WarningCapture {
  std::vector<std::string> messages;
  WarningHandler previous;
  WarningCapture() {
    previous = set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_handler(previous); }
};

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "labeldist_test_annotations";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("fuse_mean and fuse_std") {
  CHECK_THROWS_AS(from_columns({{1}, {2}, {3}, {4}, {5}, {6}}, 25.0), InputError);
  AnnotationMatrix two = from_columns({{1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}, {6, 6}}, 25.0);
  CHECK(fuse_mean(two) == std::vector<double>{3.5, 3.5});
  CHECK(fuse_std(two)[0] == doctest::Approx(std::sqrt(3.5)).epsilon(1e-15));

  const std::vector<double> sig{0.1, -0.4, 0.9};
  AnnotationMatrix same = from_columns({sig, sig, sig}, 25.0);
  CHECK(fuse_mean(same) == sig);
  for (double s : fuse_std(same)) CHECK(s == 0.0);

  AnnotationMatrix pair = from_columns({{1.0, -2.0}, {1.0 + 2 * 0.3, -2.0 - 2 * 0.7}}, 25.0);
  const auto s2 = fuse_std(pair);
  CHECK(s2[0] == doctest::Approx(0.3 * std::sqrt(2.0)));
  CHECK(s2[1] == doctest::Approx(0.7 * std::sqrt(2.0)));

  CHECK_THROWS_AS(from_columns({{1, 2, 3}}, 25.0), InputError);

  AnnotationMatrix r = random_matrix(5, 4, 1);
  const auto m = fuse_mean(r);
  const auto s = fuse_std(r);
  for (std::size_t t = 0; t < 5; ++t) {
    double sum = 0;
    for (std::size_t i = 0; i < 4; ++i) sum += r.at(t, i);
    double ss = 0;
    for (std::size_t i = 0; i < 4; ++i) ss += (r.at(t, i) - sum / 4) * (r.at(t, i) - sum / 4);
    CHECK(m[t] == doctest::Approx(sum / 4).epsilon(1e-15));
    CHECK(s[t] == doctest::Approx(std::sqrt(ss / 3)).epsilon(1e-14));
  }
}

TEST_CASE("fusion commutes with annotator permutation") {
  AnnotationMatrix r = random_matrix(30, 5, 2);
  std::vector<std::vector<double>> cols;
  for (std::size_t i : {3u, 0u, 4u, 1u, 2u}) cols.push_back(r.column(i));
  AnnotationMatrix p = from_columns(cols, 25.0);
  const auto m1 = fuse_mean(r), m2 = fuse_mean(p), s1 = fuse_std(r), s2 = fuse_std(p);
  for (std::size_t t = 0; t < 30; ++t) {
    CHECK(m1[t] == doctest::Approx(m2[t]).epsilon(1e-14));
    CHECK(s1[t] == doctest::Approx(s2[t]).epsilon(1e-14));
  }
}

TEST_CASE("fuse_ewe") {
  const auto sig = sine(200, 0.3, 25.0);
  SUBCASE("identical annotators") {
    EweResult e = fuse_ewe(from_columns({sig, sig, sig, sig}, 25.0));
    const auto m = fuse_mean(from_columns({sig, sig, sig, sig}, 25.0));
    for (std::size_t t = 0; t < sig.size(); ++t) CHECK(e.m[t] == doctest::Approx(m[t]));
    for (double w : e.weights) CHECK(w == doctest::Approx(0.25));
  }
  SUBCASE("anti-correlated annotator gets zero weight") {
    std::vector<double> flipped = sig;
    for (double& v : flipped) v = -v;
    EweResult e = fuse_ewe(from_columns({sig, sig, sig, flipped}, 25.0));
    CHECK(e.weights[3] == 0.0);
    for (std::size_t t = 0; t < sig.size(); ++t) CHECK(e.m[t] == doctest::Approx(sig[t]).epsilon(1e-12));
  }
  SUBCASE("weights form a distribution") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      WarningCapture quiet;
      EweResult e = fuse_ewe(random_matrix(50, 5, 100 + seed));
      double sum = 0;
      for (double w : e.weights) {
        CHECK(w >= 0.0);
        sum += w;
      }
      CHECK(sum == doctest::Approx(1.0));
    }
  }
  SUBCASE("fallback when no annotator agrees") {
    WarningCapture capture;
    std::vector<double> flipped = sig;
    for (double& v : flipped) v = -v;
    EweResult e = fuse_ewe(from_columns({sig, flipped}, 25.0));
    CHECK(e.fallback);
    CHECK(capture.messages.size() == 1);
    CHECK(e.m[10] == doctest::Approx(0.0));
  }
}

TEST_CASE("normalize_local") {
  AnnotationMatrix r = random_matrix(80, 3, 3);
  AnnotationMatrix n = normalize_local(r);
  for (std::size_t i = 0; i < 3; ++i) {
    auto c = n.column(i);
    double mean = 0, var = 0;
    for (double v : c) mean += v;
    mean /= c.size();
    for (double v : c) var += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(var / c.size()) - 1.0) < 1e-10);
  }
  AnnotationMatrix again = normalize_local(n);
  for (std::size_t k = 0; k < n.ratings.size(); ++k) CHECK(std::abs(again.ratings[k] - n.ratings[k]) < 1e-12);

  AnnotationMatrix affine = r;
  for (std::size_t t = 0; t < r.frames; ++t) affine.at(t, 1) = 3.0 * r.at(t, 1) - 2.0;
  AnnotationMatrix na = normalize_local(affine);
  for (std::size_t t = 0; t < r.frames; ++t) CHECK(na.at(t, 1) == doctest::Approx(n.at(t, 1)).epsilon(1e-12));

  AnnotationMatrix flat = from_columns({{1, 2, 3}, {5, 5, 5}}, 25.0, {"x", "y"});
  try {
    normalize_local(flat);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("'y'") != std::string::npos);
  }
}

TEST_CASE("median_filter") {
  CHECK(median_filter(std::vector<double>(10, 2.5), 5) == std::vector<double>(10, 2.5));
  std::vector<double> spike(9, 1.0);
  spike[4] = 50.0;
  CHECK(median_filter(spike, 3) == std::vector<double>(9, 1.0));
  CHECK(median_filter(std::vector<double>{3, 1, 2}, 1) == std::vector<double>{3, 1, 2});
  CHECK_THROWS_AS(median_filter(spike, 0), ConfigError);

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> len(1, 120), win(1, 60);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(len(rng));
    // Mix continuous values with repeated levels so ties are exercised.
    for (double& v : x) v = trial % 2 ? g(rng) : static_cast<double>(level(rng));
    const std::size_t w = win(rng);
    CHECK(median_filter(x, w) == oracle::naive_median_filter(x, w));
  }
}

TEST_CASE("lowpass_filter") {
  const double rate = 25.0, cutoff = 0.25;
  const auto flat = lowpass_filter(std::vector<double>(500, 0.7), cutoff, rate);
  for (double v : flat) CHECK(std::abs(v - 0.7) < 1e-6);

  const std::size_t n = 5000;  // whole number of periods for both tones
  const auto slow = sine(n, 0.05, rate);
  const auto fast = sine(n, 2.0, rate);
  CHECK(oracle::tone_amplitude(lowpass_filter(slow, cutoff, rate), 0.05, rate) ==
        doctest::Approx(1.0).epsilon(0.05));
  CHECK(oracle::tone_amplitude(lowpass_filter(fast, cutoff, rate), 2.0, rate) <= 0.25);
  const auto four = sine(n, 4 * cutoff, rate);
  const double ratio = oracle::tone_amplitude(lowpass_filter(four, cutoff, rate), 1.0, rate);
  CHECK(20.0 * std::log10(ratio) <= -12.0);

  CHECK_THROWS_AS(lowpass_filter(slow, 12.5, rate), ConfigError);
  CHECK_THROWS_AS(lowpass_filter(slow, 0.0, rate), ConfigError);
  CHECK(lowpass_filter(std::vector<double>{4.0}, cutoff, rate) == std::vector<double>{4.0});
  CHECK(lowpass_filter(std::vector<double>{1.0, 2.0, 3.0}, cutoff, rate).size() == 3);
}

TEST_CASE("preprocess order and selection") {
  AnnotationMatrix r = random_matrix(200, 3, 5);
  PreprocessConfig cfg;
  cfg.median_window = 5;
  cfg.lowpass_hz = 0.5;
  cfg.lowpass_annotators = {1};
  cfg.normalize = true;
  AnnotationMatrix out = preprocess(r, cfg);
  const auto c0 = normalize_local(from_columns({median_filter(r.column(0), 5), r.column(1)}, 25.0)).column(0);
  const auto c1 = normalize_local(
      from_columns({r.column(0), lowpass_filter(median_filter(r.column(1), 5), 0.5, 25.0)}, 25.0)).column(1);
  for (std::size_t t = 0; t < 200; ++t) {
    CHECK(out.at(t, 0) == doctest::Approx(c0[t]).epsilon(1e-12));
    CHECK(out.at(t, 1) == doctest::Approx(c1[t]).epsilon(1e-12));
  }
  // The two filters do not commute.
  const auto mf = median_filter(lowpass_filter(r.column(2), 0.5, 25.0), 5);
  const auto fm = lowpass_filter(median_filter(r.column(2), 5), 0.5, 25.0);
  double diff = 0;
  for (std::size_t t = 0; t < 200; ++t) diff = std::max(diff, std::abs(mf[t] - fm[t]));
  CHECK(diff > 1e-6);
  cfg.lowpass_annotators = {7};
  CHECK_THROWS_AS(preprocess(r, cfg), ConfigError);
}

TEST_CASE("drop_annotators") {
  AnnotationMatrix r = random_matrix(100, 4, 6);
  CHECK(drop_annotators(r, 4).ratings == r.ratings);
  CHECK_THROWS_AS(drop_annotators(r, 1), ConfigError);
  CHECK_THROWS_AS(drop_annotators(r, 5), ConfigError);

  const auto sig = sine(100, 0.5, 25.0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::vector<double> noise(100);
  for (double& v : noise) v = g(rng);
  AnnotationMatrix m = from_columns({sig, noise, sig, sig}, 25.0, {"a", "b", "c", "d"});
  AnnotationMatrix kept = drop_annotators(m, 3);
  CHECK(kept.ids == std::vector<std::string>{"a", "c", "d"});

  // Exact ties: the lower index goes first.
  AnnotationMatrix tie = from_columns({sig, sig, sig}, 25.0, {"x", "y", "z"});
  CHECK(removal_order(tie) == std::vector<std::size_t>{0, 1, 2});
  CHECK(drop_annotators(tie, 2).ids == std::vector<std::string>{"y", "z"});

  for (std::size_t keep : {3u, 4u, 5u, 6u}) {
    WarningCapture quiet;
    AnnotationMatrix six = random_matrix(60, 6, 8);
    CHECK(build_label_dist(drop_annotators(six, keep), LabelFamily::kStudentT).nu ==
          static_cast<double>(keep));
  }
}

TEST_CASE("build_label_dist") {
  const auto sig = sine(50, 0.4, 25.0);
  LabelDistSeries d = build_label_dist(from_columns({sig, sig, sig, sig, sig, sig}, 25.0),
                                       LabelFamily::kStudentT);
  CHECK(d.nu == 6.0);
  CHECK(d.m == sig);
  for (double s : d.s) CHECK(s == 0.0);

  AnnotationMatrix two = random_matrix(20, 2, 9);
  CHECK_THROWS_AS(build_label_dist(two, LabelFamily::kStudentT), UndefinedMomentError);
  CHECK(build_label_dist(two, LabelFamily::kGaussian).nu == 2.0);

  WarningCapture capture;
  build_label_dist(random_matrix(20, 3, 10), LabelFamily::kStudentT);
  CHECK(capture.messages.size() == 1);
}

TEST_CASE("csv round trip and diagnostics") {
  const auto dir = temp_dir();
  AnnotationMatrix r = random_matrix(40, 3, 11);
  r.ids = {"001", "007", "009"};
  write_annotations(dir / "ann.csv", r);
  AnnotationMatrix back = read_annotations(dir / "ann.csv");
  CHECK(back.ids == r.ids);
  CHECK(back.frame_rate == 25.0);
  REQUIRE(back.ratings.size() == r.ratings.size());
  for (std::size_t k = 0; k < r.ratings.size(); ++k) CHECK(back.ratings[k] == doctest::Approx(r.ratings[k]).epsilon(1e-8));

  LabelDistSeries d = build_label_dist(r, LabelFamily::kStudentT);
  write_fused(dir / "fused.csv", d, 25.0);
  LabelDistSeries fb = read_fused(dir / "fused.csv", LabelFamily::kStudentT);
  CHECK(fb.nu == 3.0);
  CHECK(fb.m.size() == 40);

  {
    std::ofstream bad(dir / "bad.csv");
    bad << "time_s,a,b\n0,1,2\n0.04,1,oops\n";
  }
  try {
    read_annotations(dir / "bad.csv");
    FAIL("expected an error");
  } catch (const InputError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 3") != std::string::npos);
    CHECK(what.find("column 3") != std::string::npos);
  }
  {
    std::ofstream uneven(dir / "uneven.csv");
    uneven << "time_s,a,b\n0,1,2\n0.04,1,2\n0.1,1,2\n";
  }
  CHECK_THROWS_AS(read_annotations(dir / "uneven.csv"), InputError);
  {
    std::ofstream one(dir / "one.csv");
    one << "time_s,a\n0,1\n0.04,1\n";
  }
  CHECK_THROWS_AS(read_annotations(dir / "one.csv"), InputError);
  CHECK_THROWS_AS(read_annotations(dir / "missing.csv"), InputError);
}
