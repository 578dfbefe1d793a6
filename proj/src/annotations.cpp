#include "labeldist/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "labeldist/csv.hpp"
#include "labeldist/errors.hpp"
#include "labeldist/log.hpp"

namespace labeldist::annotations {

std::vector<double> AnnotationMatrix::column(std::size_t i) const {
  std::vector<double> out(frames);
  for (std::size_t t = 0; t < frames; ++t) out[t] = at(t, i);
  return out;
}

void AnnotationMatrix::set_column(std::size_t i, std::span<const double> values) {
  if (values.size() != frames) throw ShapeError("set_column: length mismatch");
  for (std::size_t t = 0; t < frames; ++t) at(t, i) = values[t];
}

void AnnotationMatrix::validate() const {
  if (annotators < 2)
    throw InputError("need at least 2 annotators, got " + std::to_string(annotators));
  if (frames < 2) throw InputError("need at least 2 frames, got " + std::to_string(frames));
  if (ratings.size() != frames * annotators) throw InputError("ratings size does not match T x a");
  if (!ids.empty() && ids.size() != annotators) throw InputError("annotator id count mismatch");
  if (!(frame_rate > 0.0)) throw InputError("frame rate must be positive");
  for (std::size_t k = 0; k < ratings.size(); ++k)
    if (!std::isfinite(ratings[k]))
      throw InputError("non-finite rating at frame " + std::to_string(k / annotators) +
                       ", annotator " + std::to_string(k % annotators));
}

AnnotationMatrix from_columns(const std::vector<std::vector<double>>& columns, double frame_rate,
                              std::vector<std::string> ids) {
  AnnotationMatrix ann;
  ann.annotators = columns.size();
  ann.frames = columns.empty() ? 0 : columns[0].size();
  ann.frame_rate = frame_rate;
  ann.ratings.resize(ann.frames * ann.annotators);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].size() != ann.frames) throw InputError("annotator series lengths differ");
    ann.set_column(i, columns[i]);
  }
  if (ids.empty())
    for (std::size_t i = 0; i < ann.annotators; ++i) ids.push_back("a" + std::to_string(i + 1));
  ann.ids = std::move(ids);
  ann.validate();
  return ann;
}

std::vector<double> fuse_mean(const AnnotationMatrix& ann) {
  ann.validate();
  std::vector<double> m(ann.frames, 0.0);
  for (std::size_t t = 0; t < ann.frames; ++t) {
    // Shifted by the first rating so that unanimous frames are exact.
    const double x0 = ann.at(t, 0);
    double sum = 0.0;
    for (std::size_t i = 1; i < ann.annotators; ++i) sum += ann.at(t, i) - x0;
    m[t] = x0 + sum / static_cast<double>(ann.annotators);
  }
  return m;
}

std::vector<double> fuse_std(const AnnotationMatrix& ann) {
  const std::vector<double> m = fuse_mean(ann);
  std::vector<double> s(ann.frames, 0.0);
  for (std::size_t t = 0; t < ann.frames; ++t) {
    double ss = 0.0;
    for (std::size_t i = 0; i < ann.annotators; ++i) {
      const double d = ann.at(t, i) - m[t];
      ss += d * d;
    }
    s[t] = std::sqrt(ss / static_cast<double>(ann.annotators - 1));
  }
  return s;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double va = 0.0, vb = 0.0, c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
    c += (a[i] - ma) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return c / std::sqrt(va * vb);
}

EweResult fuse_ewe(const AnnotationMatrix& ann) {
  ann.validate();
  const std::size_t a = ann.annotators;
  EweResult out;
  out.weights.assign(a, 0.0);
  std::vector<double> total(ann.frames, 0.0);
  for (std::size_t t = 0; t < ann.frames; ++t)
    for (std::size_t i = 0; i < a; ++i) total[t] += ann.at(t, i);
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    const std::vector<double> own = ann.column(i);
    std::vector<double> others(ann.frames);
    for (std::size_t t = 0; t < ann.frames; ++t)
      others[t] = (total[t] - own[t]) / static_cast<double>(a - 1);
    out.weights[i] = std::max(0.0, pearson(own, others));
    weight_sum += out.weights[i];
  }
  if (weight_sum == 0.0) {
    warn("EWE: no annotator correlates positively with the others; using the plain mean");
    out.fallback = true;
    out.weights.assign(a, 1.0 / static_cast<double>(a));
  } else {
    for (double& w : out.weights) w /= weight_sum;
  }
  out.m.assign(ann.frames, 0.0);
  for (std::size_t t = 0; t < ann.frames; ++t)
    for (std::size_t i = 0; i < a; ++i) out.m[t] += out.weights[i] * ann.at(t, i);
  return out;
}

AnnotationMatrix normalize_local(const AnnotationMatrix& ann) {
  ann.validate();
  AnnotationMatrix out = ann;
  for (std::size_t i = 0; i < ann.annotators; ++i) {
    std::vector<double> x = ann.column(i);
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 0.0))
      throw InputError("cannot normalise constant series of annotator '" +
                       (ann.ids.empty() ? std::to_string(i) : ann.ids[i]) + "'");
    for (double& v : x) v = (v - mean) / sd;
    out.set_column(i, x);
  }
  return out;
}

std::vector<double> median_filter(std::span<const double> x, std::size_t window) {
  if (window == 0) throw ConfigError("median filter window must be >= 1");
  const std::size_t n = x.size();
  const std::size_t back = (window - 1) / 2, ahead = window / 2;
  std::vector<double> out(n);
  std::vector<double> sorted;
  sorted.reserve(window);
  // Sliding window [lo, hi) kept sorted by insertion/removal.
  std::size_t lo = 0, hi = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t want_lo = t >= back ? t - back : 0;
    const std::size_t want_hi = std::min(n, t + ahead + 1);
    for (; hi < want_hi; ++hi) sorted.insert(std::upper_bound(sorted.begin(), sorted.end(), x[hi]), x[hi]);
    for (; lo < want_lo; ++lo) sorted.erase(std::lower_bound(sorted.begin(), sorted.end(), x[lo]));
    const std::size_t k = sorted.size();
    out[t] = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  }
  return out;
}

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

Biquad butterworth2(double cutoff_hz, double frame_rate) {
  const double k = std::tan(std::numbers::pi * cutoff_hz / frame_rate);
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k * k);
  Biquad f;
  f.b0 = k * k * norm;
  f.b1 = 2.0 * f.b0;
  f.b2 = f.b0;
  f.a1 = 2.0 * (k * k - 1.0) * norm;
  f.a2 = (1.0 - std::numbers::sqrt2 * k + k * k) * norm;
  return f;
}

/// Transposed direct form II, state initialised to the steady state for a
/// constant input equal to x[0].
void filter_in_place(const Biquad& f, std::vector<double>& x) {
  if (x.empty()) return;
  const double gain = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);
  double z1 = (f.b2 - f.a2 * gain) * x[0];
  double z0 = (f.b1 - f.a1 * gain) * x[0] + z1;
  for (double& v : x) {
    const double in = v;
    const double y = f.b0 * in + z0;
    z0 = f.b1 * in - f.a1 * y + z1;
    z1 = f.b2 * in - f.a2 * y;
    v = y;
  }
}

}  // namespace

std::vector<double> lowpass_filter(std::span<const double> x, double cutoff_hz, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ConfigError("frame rate must be positive");
  if (!(cutoff_hz > 0.0 && cutoff_hz < frame_rate / 2.0))
    throw ConfigError("low-pass cutoff must lie in (0, " + csv::format(frame_rate / 2.0) +
                      ") Hz, got " + csv::format(cutoff_hz));
  const std::size_t n = x.size();
  if (n < 2) return {x.begin(), x.end()};
  const Biquad f = butterworth2(cutoff_hz, frame_rate);
  // Odd reflection about the end points, as in the usual filtfilt.
  const std::size_t pad = std::min<std::size_t>(9, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
  filter_in_place(f, ext);
  std::reverse(ext.begin(), ext.end());
  filter_in_place(f, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

AnnotationMatrix preprocess(const AnnotationMatrix& ann, const PreprocessConfig& cfg) {
  ann.validate();
  AnnotationMatrix out = ann;
  for (std::size_t i : cfg.lowpass_annotators)
    if (i >= ann.annotators)
      throw ConfigError("low-pass annotator index " + std::to_string(i) + " out of range");
  for (std::size_t i = 0; i < ann.annotators; ++i) {
    std::vector<double> x = out.column(i);
    if (cfg.median_window > 1) x = median_filter(x, cfg.median_window);
    const bool selected = cfg.lowpass_annotators.empty() ||
                          std::find(cfg.lowpass_annotators.begin(), cfg.lowpass_annotators.end(),
                                    i) != cfg.lowpass_annotators.end();
    if (cfg.lowpass_hz > 0.0 && selected) x = lowpass_filter(x, cfg.lowpass_hz, ann.frame_rate);
    out.set_column(i, x);
  }
  if (cfg.normalize) out = normalize_local(out);
  return out;
}

std::vector<std::size_t> removal_order(const AnnotationMatrix& ann) {
  ann.validate();
  const std::size_t a = ann.annotators;
  std::vector<std::vector<double>> cols;
  for (std::size_t i = 0; i < a; ++i) cols.push_back(ann.column(i));
  std::vector<double> mean_corr(a, 0.0);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < a; ++j)
      if (i != j) mean_corr[i] += pearson(cols[i], cols[j]) / static_cast<double>(a - 1);
  std::vector<std::size_t> order(a);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return mean_corr[x] < mean_corr[y]; });
  return order;
}

AnnotationMatrix drop_annotators(const AnnotationMatrix& ann, std::size_t keep) {
  if (keep < 2 || keep > ann.annotators)
    throw ConfigError("keep must lie in [2, " + std::to_string(ann.annotators) + "], got " +
                      std::to_string(keep));
  if (keep == ann.annotators) return ann;
  const std::vector<std::size_t> order = removal_order(ann);
  std::vector<bool> removed(ann.annotators, false);
  for (std::size_t k = 0; k < ann.annotators - keep; ++k) removed[order[k]] = true;
  std::vector<std::vector<double>> cols;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < ann.annotators; ++i) {
    if (removed[i]) continue;
    cols.push_back(ann.column(i));
    ids.push_back(ann.ids.empty() ? "a" + std::to_string(i + 1) : ann.ids[i]);
  }
  return from_columns(cols, ann.frame_rate, std::move(ids));
}

LabelDistSeries build_label_dist(const AnnotationMatrix& ann, LabelFamily family) {
  ann.validate();
  const double nu = static_cast<double>(ann.annotators);
  if (family == LabelFamily::kStudentT) {
    if (ann.annotators <= 2)
      throw UndefinedMomentError("t label distribution needs more than 2 annotators (nu = a = " +
                                 std::to_string(ann.annotators) + ")");
    if (ann.annotators == 3)
      warn("t label distribution with 3 annotators: scaled std inflates by sqrt(3)");
  }
  return {fuse_mean(ann), fuse_std(ann), nu, family};
}

AnnotationMatrix read_annotations(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  if (table.header.empty() || table.header[0] != "time_s")
    throw InputError(path.string() + ": first column must be 'time_s'");
  if (table.header.size() < 3)
    throw InputError(path.string() + ": need at least 2 annotator columns");
  if (table.rows.size() < 2) throw InputError(path.string() + ": need at least 2 frames");
  const double dt = table.rows[1][0] - table.rows[0][0];
  if (!(dt > 0.0)) throw InputError(path.string() + ": time_s must be increasing");
  for (std::size_t r = 1; r < table.rows.size(); ++r) {
    const double expect = table.rows[0][0] + static_cast<double>(r) * dt;
    if (std::abs(table.rows[r][0] - expect) > 1e-6 * dt + 1e-9)
      throw InputError(path.string() + ": row " + std::to_string(r + 2) +
                       " breaks uniform frame spacing");
  }
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 1; c < table.header.size(); ++c) cols.push_back(table.column_values(c));
  std::vector<std::string> ids(table.header.begin() + 1, table.header.end());
  // Rates like 25 Hz are written as 0.04 s steps; round back to the nominal value.
  const double rate = std::round(1e6 / dt) / 1e6;
  return from_columns(cols, rate, std::move(ids));
}

void write_annotations(const std::filesystem::path& path, const AnnotationMatrix& ann) {
  ann.validate();
  csv::Table table;
  table.header.push_back("time_s");
  for (std::size_t i = 0; i < ann.annotators; ++i)
    table.header.push_back(ann.ids.empty() ? "a" + std::to_string(i + 1) : ann.ids[i]);
  for (std::size_t t = 0; t < ann.frames; ++t) {
    std::vector<double> row{static_cast<double>(t) / ann.frame_rate};
    for (std::size_t i = 0; i < ann.annotators; ++i) row.push_back(ann.at(t, i));
    table.rows.push_back(std::move(row));
  }
  csv::write(path, table);
}

void write_fused(const std::filesystem::path& path, const LabelDistSeries& labels,
                 double frame_rate) {
  if (labels.m.size() != labels.s.size()) throw ShapeError("write_fused: m and s lengths differ");
  csv::Table table{{"time_s", "m", "s", "nu"}, {}};
  for (std::size_t t = 0; t < labels.m.size(); ++t)
    table.rows.push_back({static_cast<double>(t) / frame_rate, labels.m[t], labels.s[t], labels.nu});
  csv::write(path, table);
}

LabelDistSeries read_fused(const std::filesystem::path& path, LabelFamily family) {
  const csv::Table table = csv::read(path);
  LabelDistSeries out;
  out.family = family;
  out.m = table.column_values(table.column("m"));
  out.s = table.column_values(table.column("s"));
  const auto nu = table.column_values(table.column("nu"));
  if (nu.empty()) throw InputError(path.string() + ": no frames");
  out.nu = nu[0];
  for (double s : out.s)
    if (s < 0.0) throw InputError(path.string() + ": negative spread");
  return out;
}

}  // namespace labeldist::annotations
