#include "labeldist/pipeline/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <boost/math/tools/minima.hpp>

#include "labeldist/csv.hpp"
#include "labeldist/errors.hpp"

namespace labeldist::pipeline {

std::vector<KlScenario> fig2_scenarios() {
  return {{"fig2a", 0.5, 6.0}, {"fig2b", 1.0, 6.0}, {"fig2c", 1.0, 12.0}, {"fig2d", 1.0, 30.0}};
}

KlScenario fig2_scenario(const std::string& name) {
  for (const auto& s : fig2_scenarios())
    if (s.name == name) return s;
  throw ConfigError("unknown KL scenario '" + name + "' (expected fig2a..fig2d)");
}

std::vector<double> default_s_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 300; ++i) g.push_back(i / 100.0);
  return g;
}

namespace {

double refine_argmin(const std::function<double(double)>& f, std::span<const double> grid) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (f(grid[i]) < f(grid[best])) best = i;
  const double lo = grid[best > 0 ? best - 1 : 0];
  const double hi = grid[std::min(best + 1, grid.size() - 1)];
  if (lo == hi) return lo;
  return boost::math::tools::brent_find_minima(f, lo, hi, std::numeric_limits<double>::digits / 2).first;
}

}  // namespace

KlCurves analyze_kl_curves(std::span<const KlScenario> scenarios, std::span<const double> s_grid) {
  if (s_grid.empty()) throw ConfigError("analyze_kl_curves: empty s grid");
  for (std::size_t i = 0; i < s_grid.size(); ++i)
    if (!(s_grid[i] > 0.0) || (i > 0 && !(s_grid[i] > s_grid[i - 1])))
      throw ConfigError("analyze_kl_curves: s grid must be positive and increasing");
  KlCurves out;
  for (const KlScenario& sc : scenarios) {
    if (!(sc.nu > 2.0)) throw UndefinedMomentError("analyze_kl_curves: nu must exceed 2");
    if (!(sc.s_hat > 0.0)) throw ConfigError("analyze_kl_curves: s_hat must be > 0");
    auto kt = [&](double s) { return kl_label(LabelFamily::kStudentT, sc.nu, sc.m, s, sc.m_hat, sc.s_hat); };
    auto kg = [&](double s) { return kl_label(LabelFamily::kGaussian, sc.nu, sc.m, s, sc.m_hat, sc.s_hat); };
    for (double s : s_grid) out.points.push_back({sc.name, s, kt(s), kg(s)});
    out.argmins.push_back({sc.name, sc.s_hat, sc.nu, refine_argmin(kt, s_grid), refine_argmin(kg, s_grid)});
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeError("spearman: need equal lengths >= 2");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return (sxx == 0.0 || syy == 0.0) ? 0.0 : sxy / std::sqrt(sxx * syy);
}

std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

SweepResult sweep_alpha(std::span<const double> alphas, const ModelConfig& model,
                        const TrainConfig& tcfg, const Corpus& train_data, const Corpus& dev_data,
                        const EvalOptions& options) {
  SweepResult out;
  std::vector<double> low_alpha, low_kl;
  for (double alpha : alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("sweep_alpha: alpha outside [0, 1]");
    ModelConfig m = model;
    m.alpha = alpha;
    const TrainResult trained = train(m, train_data, tcfg);
    out.rows.push_back({alpha, evaluate(trained.model, dev_data, options, &train_data)});
    if (alpha <= 0.7 + 1e-12) {
      low_alpha.push_back(alpha);
      low_kl.push_back(out.rows.back().report.kl_t);
    }
  }
  out.spearman_low_alpha =
      low_alpha.size() >= 2 ? spearman(low_alpha, low_kl) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<AblationRow> ablate_annotators(const synth::Dataset& data, const Split& split,
                                           std::span<const std::size_t> keeps,
                                           std::span<const LabelFamily> families,
                                           const ModelConfig& model, const TrainConfig& tcfg,
                                           const FusionConfig& fusion, const EvalOptions& options) {
  for (std::size_t keep : keeps)
    if (keep < 3) throw ConfigError("ablation keep must be >= 3, got " + std::to_string(keep));
  std::vector<AblationRow> rows;
  for (std::size_t keep : keeps) {
    for (LabelFamily family : families) {
      FusionConfig f = fusion;
      f.family = family;
      f.keep = keep;
      const Corpus train_data = make_corpus(data, split.train, f);
      const Corpus dev_data = make_corpus(data, split.dev, f);
      ModelConfig m = model;
      m.truth_family = family;
      EvalOptions o = options;
      o.family = family;
      const TrainResult trained = train(m, train_data, tcfg);
      AblationRow row;
      row.keep = keep;
      row.family = family;
      row.nu = train_data.sequences.front().labels.nu;
      row.scaled_std_inflation = family == LabelFamily::kStudentT ? std::sqrt(row.nu / (row.nu - 2.0)) : 1.0;
      row.report = evaluate(trained.model, dev_data, o, &train_data);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

void write_rows(const std::filesystem::path& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (!out) throw InputError("cannot write " + path.string());
}

std::string f(double v) { return csv::format(v); }

}  // namespace

void write_loss_history(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : history)
    rows.push_back({std::to_string(r.epoch), f(r.ccc_term), f(r.elbo_term), f(r.kl_term), f(r.total)});
  write_rows(path, {"epoch", "ccc_term", "elbo_term", "kl_term", "total"}, rows);
}

void write_metrics(const std::filesystem::path& path, const std::string& config_hash,
                   const EvalReport& r, const EvalReport* baseline) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double p_ccc_m = nan, p_ccc_s = nan, p_kl = nan;
  if (baseline != nullptr && r.per_sequence.size() >= 2 &&
      baseline->per_sequence.size() == r.per_sequence.size()) {
    std::vector<double> a_m, b_m, a_s, b_s, a_kl, b_kl;
    for (std::size_t i = 0; i < r.per_sequence.size(); ++i) {
      const auto& x = r.per_sequence[i];
      const auto& y = baseline->per_sequence[i];
      a_m.push_back(x.ccc_m), b_m.push_back(y.ccc_m);
      a_s.push_back(x.ccc_s), b_s.push_back(y.ccc_s);
      // Lower KL is better, so the baseline is the list expected to be larger.
      const bool t = r.family == LabelFamily::kStudentT;
      a_kl.push_back(t ? y.kl_t : y.kl_gaussian), b_kl.push_back(t ? x.kl_t : x.kl_gaussian);
    }
    p_ccc_m = significance_test(a_m, b_m);
    p_ccc_s = significance_test(a_s, b_s);
    p_kl = significance_test(a_kl, b_kl);
  }
  write_rows(path,
             {"config_hash", "family", "ccc_m", "ccc_s", "kl", "kl_t", "kl_gaussian", "mean_s_hat",
              "best_shift_s", "shift_applied", "p_ccc_m", "p_ccc_s", "p_kl"},
             {{config_hash, std::string(family_name(r.family)), f(r.ccc_m), f(r.ccc_s), f(r.kl), f(r.kl_t),
               f(r.kl_gaussian), f(r.mean_s_hat), f(r.best_time_shift_s), r.shift_applied ? "1" : "0",
               f(p_ccc_m), f(p_ccc_s), f(p_kl)}});
}

void write_per_sequence(const std::filesystem::path& path, const EvalReport& r) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < r.per_sequence.size(); ++i) {
    const auto& s = r.per_sequence[i];
    rows.push_back({std::to_string(i), f(s.ccc_m), f(s.ccc_s), f(s.kl_t), f(s.kl_gaussian)});
  }
  write_rows(path, {"sequence", "ccc_m", "ccc_s", "kl_t", "kl_gaussian"}, rows);
}

void write_kl_curves(const std::filesystem::path& curves_path, const std::filesystem::path& argmin_path,
                     const KlCurves& curves) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : curves.points) rows.push_back({p.scenario, f(p.s), f(p.kl_t), f(p.kl_gaussian)});
  write_rows(curves_path, {"scenario", "s", "kl_t", "kl_gaussian"}, rows);
  rows.clear();
  for (const auto& a : curves.argmins)
    rows.push_back({a.scenario, f(a.s_hat), f(a.nu), f(a.argmin_t), f(a.argmin_gaussian), f(a.relaxation())});
  write_rows(argmin_path, {"scenario", "s_hat", "nu", "argmin_t", "argmin_gaussian", "relaxation"}, rows);
}

void write_alpha_sweep(const std::filesystem::path& path, const SweepResult& sweep) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : sweep.rows)
    rows.push_back({f(r.alpha), f(r.report.ccc_m), f(r.report.ccc_s), f(r.report.kl), f(r.report.kl_t),
                    f(r.report.kl_gaussian)});
  write_rows(path, {"alpha", "ccc_m", "ccc_s", "kl", "kl_t", "kl_gaussian"}, rows);
}

void write_ablation(const std::filesystem::path& path, std::span<const AblationRow> rows_in) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rows_in)
    rows.push_back({std::to_string(r.keep), std::string(family_name(r.family)), f(r.nu),
                    f(r.scaled_std_inflation), f(r.report.ccc_m), f(r.report.ccc_s), f(r.report.kl),
                    f(r.report.kl_t), f(r.report.kl_gaussian), f(r.report.mean_s_hat)});
  write_rows(path,
             {"keep", "family", "nu", "scaled_std_inflation", "ccc_m", "ccc_s", "kl", "kl_t", "kl_gaussian",
              "mean_s_hat"},
             rows);
}

}  // namespace labeldist::pipeline
