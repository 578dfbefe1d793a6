#include "labeldist/pipeline/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "labeldist/csv.hpp"
#include "labeldist/errors.hpp"
#include "labeldist/log.hpp"

namespace labeldist::pipeline {

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.conv_filters = {64, 128, 256};
  cfg.lstm_hidden = 256;
  cfg.bbb_hidden = {256, 128};
  return cfg;
}

void ModelConfig::validate() const {
  auto check_list = [](const std::vector<std::size_t>& v, const char* name) {
    if (v.size() != 3) throw ConfigError(std::string("model.") + name + " must have 3 entries");
    for (std::size_t x : v)
      if (x == 0) throw ConfigError(std::string("model.") + name + " entries must be >= 1");
  };
  check_list(conv_filters, "conv_filters");
  check_list(conv_kernels, "conv_kernels");
  check_list(conv_strides, "conv_strides");
  check_list(pool, "pool");
  if (lstm_layers == 0 || lstm_hidden == 0) throw ConfigError("model: LSTM layers and width must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  for (std::size_t w : bbb_hidden)
    if (w == 0) throw ConfigError("model.bbb_hidden entries must be >= 1");
  if (!(prior.sigma > 0.0) || !std::isfinite(prior.mu)) throw ConfigError("model: prior sigma must be > 0");
  if (!(init.mu_low <= init.mu_high) || !(init.rho_low <= init.rho_high))
    throw ConfigError("model: init ranges must satisfy low <= high");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("model.alpha must lie in [0, 1]");
  if (n_passes < 2) throw ConfigError("model.n_passes must be >= 2 to estimate a spread");
  schedule().validate();
  if (!(s_hat_variance_eps >= 0.0)) throw ConfigError("model: variance eps must be >= 0");
}

std::size_t ModelConfig::output_length(std::size_t samples) const {
  std::size_t len = samples;
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    if (len < conv_kernels[i]) return 0;
    len = ad::conv1d_output_length(len, conv_kernels[i], conv_strides[i]);
    len = len / pool[i];
  }
  return len;
}

std::size_t ModelConfig::required_input_length(std::size_t frames) const {
  std::size_t len = frames;
  for (std::size_t i = conv_filters.size(); i-- > 0;) {
    len *= pool[i];
    len = (len - 1) * conv_strides[i] + conv_kernels[i];
  }
  return len;
}

ModelConfig model_config_from(const Config& cfg, ModelConfig base) {
  ModelConfig m = base;
  m.conv_filters = cfg.get_sizes("model.conv_filters", m.conv_filters);
  m.conv_kernels = cfg.get_sizes("model.conv_kernels", m.conv_kernels);
  m.conv_strides = cfg.get_sizes("model.conv_strides", m.conv_strides);
  m.pool = cfg.get_sizes("model.pool", m.pool);
  m.lstm_layers = cfg.get_uint("model.lstm_layers", m.lstm_layers);
  m.lstm_hidden = cfg.get_uint("model.lstm_hidden", m.lstm_hidden);
  m.dropout_p = cfg.get_double("model.dropout", m.dropout_p);
  if (cfg.has("model.bbb_hidden")) {
    m.bbb_hidden = cfg.get_string("model.bbb_hidden", "").empty()
                       ? std::vector<std::size_t>{}
                       : cfg.get_sizes("model.bbb_hidden", {});
  }
  if (cfg.has("model.bbb_layers") && cfg.get_uint("model.bbb_layers", 0) != m.bbb_hidden.size() + 1)
    throw ConfigError("model.bbb_layers disagrees with model.bbb_hidden (" +
                      std::to_string(m.bbb_hidden.size()) + " hidden widths)");
  m.prior.mu = cfg.get_double("model.prior_mu", m.prior.mu);
  m.prior.sigma = cfg.get_double("model.prior_sigma", m.prior.sigma);
  m.init.mu_low = cfg.get_double("model.mu_init_low", m.init.mu_low);
  m.init.mu_high = cfg.get_double("model.mu_init_high", m.init.mu_high);
  m.init.rho_low = cfg.get_double("model.rho_init_low", m.init.rho_low);
  m.init.rho_high = cfg.get_double("model.rho_init_high", m.init.rho_high);
  m.window_b = cfg.get_uint("model.window_b", m.window_b);
  m.n_passes = cfg.get_uint("model.n_passes", m.n_passes);
  m.alpha = cfg.get_double("model.alpha", m.alpha);
  if (cfg.has("model.family")) m.truth_family = parse_family(cfg.get_string("model.family", "t"));
  return m;
}

void write_model_config(const ModelConfig& m, Config& cfg) {
  cfg.set("model.conv_filters", join(m.conv_filters));
  cfg.set("model.conv_kernels", join(m.conv_kernels));
  cfg.set("model.conv_strides", join(m.conv_strides));
  cfg.set("model.pool", join(m.pool));
  cfg.set("model.lstm_layers", std::to_string(m.lstm_layers));
  cfg.set("model.lstm_hidden", std::to_string(m.lstm_hidden));
  cfg.set("model.dropout", csv::format(m.dropout_p));
  cfg.set("model.bbb_hidden", join(m.bbb_hidden));
  cfg.set("model.bbb_layers", std::to_string(m.bbb_hidden.size() + 1));
  cfg.set("model.prior_mu", csv::format(m.prior.mu));
  cfg.set("model.prior_sigma", csv::format(m.prior.sigma));
  cfg.set("model.mu_init_low", csv::format(m.init.mu_low));
  cfg.set("model.mu_init_high", csv::format(m.init.mu_high));
  cfg.set("model.rho_init_low", csv::format(m.init.rho_low));
  cfg.set("model.rho_init_high", csv::format(m.init.rho_high));
  cfg.set("model.window_b", std::to_string(m.window_b));
  cfg.set("model.n_passes", std::to_string(m.n_passes));
  cfg.set("model.alpha", csv::format(m.alpha));
  cfg.set("model.family", std::string(family_name(m.truth_family)));
}

namespace {

ad::Tensor uniform(std::vector<std::size_t> shape, double limit, Rng& rng) {
  ad::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (double& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::size_t dim, std::uint64_t seed) : config(cfg), feature_dim(dim) {
  config.validate();
  if (dim == 0) throw ConfigError("model: feature dimension must be >= 1");
  Rng rng = make_rng(seed, "model-init");
  std::size_t channels = dim;
  for (std::size_t i = 0; i < config.conv_filters.size(); ++i) {
    const std::size_t k = config.conv_kernels[i], out = config.conv_filters[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(k * channels + k * out));
    conv_w.push_back(uniform({k, channels, out}, limit, rng));
    conv_b.emplace_back(std::vector<std::size_t>{out}, 0.0);
    channels = out;
  }
  const std::size_t H = config.lstm_hidden;
  for (std::size_t l = 0; l < config.lstm_layers; ++l) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(H));
    LstmWeights w{uniform({channels, 4 * H}, limit, rng), uniform({H, 4 * H}, limit, rng),
                  ad::Tensor({4 * H}, 0.0)};
    for (std::size_t j = H; j < 2 * H; ++j) w.bias[j] = 1.0;  // forget gate
    lstm.push_back(std::move(w));
    channels = H;
  }
  for (std::size_t width : config.bbb_hidden) {
    head.emplace_back(channels, width, bnn::Activation::kTanh, config.prior, config.init, rng);
    channels = width;
  }
  head.emplace_back(channels, 1, bnn::Activation::kIdentity, config.prior, config.init, rng);
}

std::vector<Model::NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  for (std::size_t i = 0; i < conv_w.size(); ++i) {
    out.push_back({"conv" + std::to_string(i) + ".w", &conv_w[i], false});
    out.push_back({"conv" + std::to_string(i) + ".b", &conv_b[i], false});
  }
  for (std::size_t i = 0; i < lstm.size(); ++i) {
    out.push_back({"lstm" + std::to_string(i) + ".w_input", &lstm[i].w_input, false});
    out.push_back({"lstm" + std::to_string(i) + ".w_hidden", &lstm[i].w_hidden, false});
    out.push_back({"lstm" + std::to_string(i) + ".bias", &lstm[i].bias, false});
  }
  for (std::size_t i = 0; i < head.size(); ++i) {
    const std::string p = "head" + std::to_string(i);
    out.push_back({p + ".w_mu", &head[i].w_mu, false});
    out.push_back({p + ".w_rho", &head[i].w_rho, true});
    out.push_back({p + ".b_mu", &head[i].b_mu, false});
    out.push_back({p + ".b_rho", &head[i].b_rho, true});
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < conv_w.size(); ++i) n += conv_w[i].size() + conv_b[i].size();
  for (const auto& l : lstm) n += l.w_input.size() + l.w_hidden.size() + l.bias.size();
  for (const auto& h : head) n += 2 * h.weight_count();
  return n;
}

BoundModel bind(ad::Tape& tape, const Model& model, bool trainable) {
  auto reg = [&](const ad::Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); };
  BoundModel b;
  for (std::size_t i = 0; i < model.conv_w.size(); ++i) {
    b.conv_w.push_back(reg(model.conv_w[i]));
    b.conv_b.push_back(reg(model.conv_b[i]));
  }
  for (const LstmWeights& w : model.lstm) {
    ad::Var wx = reg(w.w_input);
    ad::Var wh = reg(w.w_hidden);
    ad::Var bias = reg(w.bias);
    b.lstm.push_back({wx, wh, bias});
  }
  b.head = bnn::bind_stack(tape, model.head, trainable);
  return b;
}

std::vector<ad::Var> bound_parameters(const BoundModel& b) {
  std::vector<ad::Var> out;
  for (std::size_t i = 0; i < b.conv_w.size(); ++i) {
    out.push_back(b.conv_w[i]);
    out.push_back(b.conv_b[i]);
  }
  for (const auto& l : b.lstm) {
    out.push_back(l.w_input);
    out.push_back(l.w_hidden);
    out.push_back(l.bias);
  }
  for (const auto& h : b.head) {
    out.push_back(h.w_mu);
    out.push_back(h.w_rho);
    out.push_back(h.b_mu);
    out.push_back(h.b_rho);
  }
  return out;
}

ad::Var trunk(const BoundModel& bound, const ModelConfig& config, ad::Var features,
              std::size_t frames, bool training, Rng& dropout_rng) {
  ad::Var x = features;
  for (std::size_t i = 0; i < bound.conv_w.size(); ++i) {
    x = ad::conv1d(x, bound.conv_w[i], config.conv_strides[i]);
    x = ad::relu(ad::add_bias(x, bound.conv_b[i]));
    x = ad::maxpool1d(x, config.pool[i]);
  }
  const std::size_t available = x.shape()[1];
  if (available < frames)
    throw ShapeError("extractor produced " + std::to_string(available) + " steps for " +
                     std::to_string(frames) + " frames; features are too short");
  if (available > frames) x = ad::time_slice(x, 0, frames);
  for (const auto& params : bound.lstm) x = ad::lstm_sequence(x, params);
  return ad::dropout(x, config.dropout_p, training, dropout_rng);
}

void save_model(const std::filesystem::path& path, const Model& model_in) {
  Model model = model_in;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  Config header;
  write_model_config(model.config, header);
  header.set("feature_dim", std::to_string(model.feature_dim));
  out << "# labeldist model\n" << header.serialize() << "---\n";
  char buf[40];
  for (const auto& p : model.parameters()) {
    out << p.name << ' ' << p.tensor->rank();
    for (std::size_t d : p.tensor->shape()) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < p.tensor->size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", (*p.tensor)[i]);
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw InputError("cannot write " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model " + path.string());
  std::string line, header_text;
  while (std::getline(in, line) && line != "---") header_text += line + "\n";
  if (line != "---") throw InputError(path.string() + ": missing parameter section");
  const Config header = Config::parse(header_text, path.string());
  Model model(model_config_from(header), header.get_uint("feature_dim", 0), 0);
  for (auto& p : model.parameters()) {
    std::string name;
    std::size_t rank = 0;
    if (!(in >> name >> rank) || name != p.name)
      throw InputError(path.string() + ": expected parameter " + p.name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) in >> d;
    if (shape != p.tensor->shape()) throw InputError(path.string() + ": shape mismatch for " + p.name);
    for (std::size_t i = 0; i < p.tensor->size(); ++i) {
      std::string token;
      in >> token;
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      if (token.empty() || *end != '\0') throw InputError(path.string() + ": bad value in " + p.name);
      (*p.tensor)[i] = v;
    }
  }
  return model;
}

}  // namespace labeldist::pipeline
