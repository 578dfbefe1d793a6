#pragma once
// Analysis runs: KL curve analysis, alpha sweeps and annotator ablation,
// plus the CSV writers for every pipeline artifact.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "labeldist/pipeline/evaluate.hpp"

namespace labeldist::pipeline {

// KL curves --------------------------------------------------------------------

struct KlScenario {
  std::string name;
  double s_hat = 1.0;
  double nu = 6.0;
  double m = 0.0, m_hat = 0.0;
};

/// fig2a: s_hat 0.5, nu 6; fig2b: 1.0, 6; fig2c: 1.0, 12; fig2d: 1.0, 30.
std::vector<KlScenario> fig2_scenarios();
/// Throws ConfigError for an unknown name.
KlScenario fig2_scenario(const std::string& name);

/// 0.01, 0.02, ..., 3.00
std::vector<double> default_s_grid();

struct KlCurvePoint {
  std::string scenario;
  double s = 0, kl_t = 0, kl_gaussian = 0;
};

struct KlArgmin {
  std::string scenario;
  double s_hat = 0, nu = 0;
  double argmin_t = 0, argmin_gaussian = 0;
  double relaxation() const { return argmin_t - s_hat; }
};

struct KlCurves {
  std::vector<KlCurvePoint> points;
  std::vector<KlArgmin> argmins;
};

/// Label-KL as a function of the label spread s with the estimate fixed.
/// Argmins are refined with Brent's method around the best grid point.
KlCurves analyze_kl_curves(std::span<const KlScenario> scenarios, std::span<const double> s_grid);

// Sweeps -------------------------------------------------------------------------

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// 0, 0.1, ..., 1.0
std::vector<double> default_alpha_grid();

struct SweepRow {
  double alpha = 0;
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// Spearman correlation of alpha with the t-family KL over alpha <= 0.7.
  double spearman_low_alpha = 0;
  std::pair<double, double> recommended_band{0.8, 1.0};
};

/// Trains and evaluates one model per alpha with identical seeds.
SweepResult sweep_alpha(std::span<const double> alphas, const ModelConfig& model,
                        const TrainConfig& tcfg, const Corpus& train_data, const Corpus& dev_data,
                        const EvalOptions& options);

struct AblationRow {
  std::size_t keep = 0;
  LabelFamily family = LabelFamily::kStudentT;
  double nu = 0;
  /// Std of the label t-distribution relative to its scale; 1 for Gaussian labels.
  double scaled_std_inflation = 1.0;
  EvalReport report;
};

/// Full train/eval per (keep, family). keep < 3 is rejected with ConfigError.
std::vector<AblationRow> ablate_annotators(const synth::Dataset& data, const Split& split,
                                           std::span<const std::size_t> keeps,
                                           std::span<const LabelFamily> families,
                                           const ModelConfig& model, const TrainConfig& tcfg,
                                           const FusionConfig& fusion, const EvalOptions& options);

// Artifacts --------------------------------------------------------------------

void write_loss_history(const std::filesystem::path& path, std::span<const EpochRecord> history);
/// One row per run. p-values compare per-sequence metrics against `baseline`.
void write_metrics(const std::filesystem::path& path, const std::string& config_hash,
                   const EvalReport& report, const EvalReport* baseline);
void write_per_sequence(const std::filesystem::path& path, const EvalReport& report);
void write_kl_curves(const std::filesystem::path& curves_path, const std::filesystem::path& argmin_path,
                     const KlCurves& curves);
void write_alpha_sweep(const std::filesystem::path& path, const SweepResult& sweep);
void write_ablation(const std::filesystem::path& path, std::span<const AblationRow> rows);

}  // namespace labeldist::pipeline
