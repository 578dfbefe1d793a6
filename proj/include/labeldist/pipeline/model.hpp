#pragma once
// End-to-end network: convolutional feature extractor, stacked LSTM, dropout
// and a Bayes-by-Backprop regression head.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "labeldist/autodiff/ops.hpp"
#include "labeldist/bnn.hpp"
#include "labeldist/config.hpp"
#include "labeldist/losses.hpp"

namespace labeldist::pipeline {

struct ModelConfig {
  std::vector<std::size_t> conv_filters{8, 16, 32};
  std::vector<std::size_t> conv_kernels{8, 6, 6};
  std::vector<std::size_t> conv_strides{1, 1, 1};
  std::vector<std::size_t> pool{10, 5, 5};
  std::size_t lstm_layers = 2;
  std::size_t lstm_hidden = 32;
  double dropout_p = 0.5;
  /// Widths of the hidden BBB layers; the head has bbb_hidden.size() + 1 layers.
  std::vector<std::size_t> bbb_hidden{32, 16};
  GaussianParams prior{0.0, 1.0};
  bnn::InitConfig init;
  std::size_t window_b = 50;
  std::size_t n_passes = 30;
  double alpha = 1.0;
  LabelFamily truth_family = LabelFamily::kStudentT;
  /// Added to the pass variance before the square root.
  double s_hat_variance_eps = 1e-12;

  static ModelConfig paper_scale();
  /// Throws ConfigError.
  void validate() const;
  bnn::SamplingSchedule schedule() const { return {window_b, n_passes}; }

  /// Extractor output length for an input of `samples` feature rows.
  std::size_t output_length(std::size_t samples) const;
  /// Smallest input length whose extractor output has exactly `frames` steps.
  std::size_t required_input_length(std::size_t frames) const;
};

/// Reads `model.*` keys over the defaults in `base`.
ModelConfig model_config_from(const Config& cfg, ModelConfig base = {});
void write_model_config(const ModelConfig& model, Config& cfg);

struct LstmWeights {
  ad::Tensor w_input, w_hidden, bias;
};

struct Model {
  ModelConfig config;
  std::size_t feature_dim = 0;
  std::vector<ad::Tensor> conv_w;  // [k x C_in x C_out]
  std::vector<ad::Tensor> conv_b;  // [C_out]
  std::vector<LstmWeights> lstm;
  std::vector<bnn::BbbLayer> head;

  Model() = default;
  Model(const ModelConfig& config, std::size_t feature_dim, std::uint64_t seed);

  struct NamedParam {
    std::string name;
    ad::Tensor* tensor;
    bool is_rho;
  };
  /// Every trainable tensor in a fixed order.
  std::vector<NamedParam> parameters();
  std::size_t parameter_count() const;
};

struct BoundModel {
  std::vector<ad::Var> conv_w, conv_b;
  std::vector<ad::LstmParams> lstm;
  std::vector<bnn::BoundLayer> head;
};

/// Registers parameters in Model::parameters() order.
BoundModel bind(ad::Tape& tape, const Model& model, bool trainable);
/// Variables of a bound model in Model::parameters() order.
std::vector<ad::Var> bound_parameters(const BoundModel& bound);

/// Extractor + LSTM + dropout: features [B x L x D] -> [B x frames x H].
ad::Var trunk(const BoundModel& bound, const ModelConfig& config, ad::Var features,
              std::size_t frames, bool training, Rng& dropout_rng);

/// Plain-text checkpoint with exact (hex-float) values.
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace labeldist::pipeline
