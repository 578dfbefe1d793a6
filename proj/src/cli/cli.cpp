#include "labeldist/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <regex>

#include <CLI11.hpp>

#include "labeldist/config.hpp"
#include "labeldist/csv.hpp"
#include "labeldist/errors.hpp"
#include "labeldist/pipeline/experiments.hpp"
#include "labeldist/rng.hpp"
#include "labeldist/synth.hpp"

namespace labeldist::cli {
namespace {

namespace fs = std::filesystem;
using pipeline::Corpus;
using pipeline::EvalReport;

struct Settings {
  Config resolved;  // every key with its effective value
  synth::SynthConfig synth;
  pipeline::ModelConfig model;
  pipeline::TrainConfig train;
  pipeline::FusionConfig fusion;
  std::string data_dir;
  double dev_fraction = 0.2;
  pipeline::EvalOptions eval;
  std::string model_path;
  std::vector<double> alphas;
  std::vector<std::size_t> keeps;
  std::vector<LabelFamily> families;
  std::vector<std::string> scenarios;
  std::vector<double> custom_s_hat, custom_nu;
  double s_min = 0.01, s_max = 3.0, s_step = 0.01;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = std::min(text.find(',', start), text.size());
    std::string item = text.substr(start, comma - start);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

std::string join_strings(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

Settings resolve(const Config& raw) {
  Settings s;
  const bool paper = raw.get_bool("paper_scale", false);
  s.synth = synth::synth_config_from(raw);
  s.model = pipeline::model_config_from(raw, paper ? pipeline::ModelConfig::paper_scale()
                                                   : pipeline::ModelConfig{});
  s.train = pipeline::train_config_from(raw);

  s.fusion.family = s.model.truth_family;
  s.fusion.keep = raw.get_uint("fusion.keep", 0);
  s.fusion.preprocess.median_window = raw.get_uint("fusion.median_window", 0);
  s.fusion.preprocess.lowpass_hz = raw.get_double("fusion.lowpass_hz", 0.0);
  s.fusion.preprocess.lowpass_annotators = raw.get_sizes("fusion.lowpass_annotators", {});
  s.fusion.preprocess.normalize = raw.get_bool("fusion.normalize", false);

  s.data_dir = raw.get_string("data.dir", "");
  s.dev_fraction = raw.get_double("data.dev_fraction", 0.2);

  const std::string tune = raw.get_string("eval.tune_shift", "none");
  s.eval.family = s.model.truth_family;
  s.eval.time_shift = tune != "none";
  s.eval.tune_partition = tune;
  s.eval.report_partition = raw.get_string("eval.report", "dev");
  s.eval.grid.min_s = raw.get_double("eval.shift_min_s", s.eval.grid.min_s);
  s.eval.grid.max_s = raw.get_double("eval.shift_max_s", s.eval.grid.max_s);
  s.eval.grid.threshold = raw.get_double("eval.shift_threshold", s.eval.grid.threshold);
  s.eval.seed = s.train.seed;
  s.model_path = raw.get_string("eval.model", "");

  s.alphas = raw.get_doubles("sweep.alphas", pipeline::default_alpha_grid());
  s.keeps = raw.get_sizes("ablate.keeps", {3, 4, 5, 6});
  for (const auto& name : split_list(raw.get_string("ablate.families", "t,gaussian")))
    s.families.push_back(parse_family(name));

  s.scenarios = split_list(raw.get_string("analyze.scenarios", "fig2a,fig2b,fig2c,fig2d"));
  s.custom_s_hat = raw.get_doubles("analyze.s_hat", {});
  s.custom_nu = raw.get_doubles("analyze.nu", {});
  s.s_min = raw.get_double("analyze.s_min", s.s_min);
  s.s_max = raw.get_double("analyze.s_max", s.s_max);
  s.s_step = raw.get_double("analyze.s_step", s.s_step);

  Config& c = s.resolved;
  c.set("paper_scale", paper ? "true" : "false");
  synth::write_synth_config(s.synth, c);
  pipeline::write_model_config(s.model, c);
  pipeline::write_train_config(s.train, c);
  c.set("fusion.keep", std::to_string(s.fusion.keep));
  c.set("fusion.median_window", std::to_string(s.fusion.preprocess.median_window));
  c.set("fusion.lowpass_hz", csv::format(s.fusion.preprocess.lowpass_hz));
  c.set("fusion.lowpass_annotators", join(s.fusion.preprocess.lowpass_annotators));
  c.set("fusion.normalize", s.fusion.preprocess.normalize ? "true" : "false");
  c.set("data.dir", s.data_dir);
  c.set("data.dev_fraction", csv::format(s.dev_fraction));
  c.set("eval.tune_shift", tune);
  c.set("eval.report", s.eval.report_partition);
  c.set("eval.shift_min_s", csv::format(s.eval.grid.min_s));
  c.set("eval.shift_max_s", csv::format(s.eval.grid.max_s));
  c.set("eval.shift_threshold", csv::format(s.eval.grid.threshold));
  c.set("eval.model", s.model_path);
  c.set("sweep.alphas", join(s.alphas));
  c.set("ablate.keeps", join(s.keeps));
  std::vector<std::string> fams;
  for (LabelFamily f : s.families) fams.emplace_back(family_name(f));
  c.set("ablate.families", join_strings(fams));
  c.set("analyze.scenarios", join_strings(s.scenarios));
  c.set("analyze.s_hat", join(s.custom_s_hat));
  c.set("analyze.nu", join(s.custom_nu));
  c.set("analyze.s_min", csv::format(s.s_min));
  c.set("analyze.s_max", csv::format(s.s_max));
  c.set("analyze.s_step", csv::format(s.s_step));

  for (const auto& [key, value] : raw.values())
    if (!c.has(key)) throw ConfigError("unknown config key '" + key + "'");
  return s;
}

const std::vector<std::string> kPartitions{"train", "dev", "all"};

void check_partition(const std::string& name, const char* key) {
  if (std::find(kPartitions.begin(), kPartitions.end(), name) == kPartitions.end())
    throw ConfigError(std::string(key) + ": unknown partition '" + name + "' (train, dev or all)");
}

void validate_fusion(const pipeline::FusionConfig& f) {
  if (f.family == LabelFamily::kStudentT && f.keep != 0 && f.keep < 3)
    throw ConfigError("the t family needs nu = keep > 2 annotators, got keep=" + std::to_string(f.keep));
  if (f.preprocess.lowpass_hz < 0.0) throw ConfigError("fusion.lowpass_hz must be >= 0");
}

void validate_model(const Settings& s) {
  s.model.validate();
  s.train.validate(s.model);
  if (!(s.dev_fraction > 0.0 && s.dev_fraction < 1.0))
    throw ConfigError("data.dev_fraction must lie in (0, 1)");
}

void require_data(const Settings& s) {
  if (s.data_dir.empty()) throw ConfigError("no dataset given (--data or data.dir)");
}

std::vector<double> s_grid(const Settings& s) {
  if (!(s.s_min > 0.0 && s.s_step > 0.0 && s.s_max >= s.s_min))
    throw ConfigError("analyze grid needs 0 < s_min <= s_max and s_step > 0");
  const auto n = static_cast<std::size_t>(std::llround((s.s_max - s.s_min) / s.s_step));
  std::vector<double> g;
  for (std::size_t i = 0; i <= n; ++i) g.push_back(s.s_min + static_cast<double>(i) * s.s_step);
  return g;
}

std::vector<pipeline::KlScenario> kl_scenarios(const Settings& s) {
  std::vector<pipeline::KlScenario> out;
  for (const auto& name : s.scenarios) out.push_back(pipeline::fig2_scenario(name));
  std::size_t k = 0;
  for (double sh : s.custom_s_hat)
    for (double nu : s.custom_nu) out.push_back({"custom" + std::to_string(++k), sh, nu, 0.0, 0.0});
  if (s.custom_s_hat.empty() != s.custom_nu.empty())
    throw ConfigError("analyze.s_hat and analyze.nu must be given together");
  if (out.empty()) throw ConfigError("no KL scenarios selected");
  return out;
}

void validate(const Settings& s, const std::string& command) {
  if (command == "synth") {
    s.synth.validate();
    return;
  }
  if (command == "analyze-kl") {
    s_grid(s);
    kl_scenarios(s);
    return;
  }
  require_data(s);
  validate_fusion(s.fusion);
  if (command == "fuse") return;
  validate_model(s);
  if (command == "eval") {
    check_partition(s.eval.report_partition, "eval.report");
    if (s.eval.time_shift) {
      check_partition(s.eval.tune_partition, "eval.tune_shift");
      if (s.eval.tune_partition == s.eval.report_partition || s.eval.tune_partition == "all" ||
          s.eval.report_partition == "all")
        throw ConfigError("time-shift tuning and reporting partitions must be disjoint");
    }
    if (s.model_path.empty()) throw ConfigError("eval needs a trained model (--model or eval.model)");
  }
  if (command == "sweep-alpha")
    for (double a : s.alphas)
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep.alphas must lie in [0, 1]");
  if (command == "ablate") {
    for (std::size_t k : s.keeps)
      if (k < 3) throw ConfigError("ablate.keeps must be >= 3, got " + std::to_string(k));
    if (s.families.empty()) throw ConfigError("ablate.families is empty");
  }
}

std::string config_hash(const Config& resolved) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(resolved.serialize())));
  return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_path,
                    const Settings& s) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  Config m = s.resolved;
  m.set("manifest.command", command);
  m.set("manifest.config_path", config_path);
  m.set("manifest.output_dir", dir.string());
  m.set("manifest.tool_version", kToolVersion);
  m.set("manifest.config_hash", config_hash(s.resolved));
  m.save(dir / "manifest.txt", "labeldist run manifest; reload with --config");
}

// Commands -----------------------------------------------------------------------

struct Context {
  Settings settings;
  fs::path out_dir;
  std::string hash;
  std::ostream& out;
};

struct Data {
  synth::Dataset dataset;
  pipeline::Split split;

  std::vector<std::size_t> indices(const std::string& partition) const {
    if (partition == "train") return split.train;
    if (partition == "dev") return split.dev;
    std::vector<std::size_t> all(dataset.sequences.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
};

Data load_data(const Settings& s) {
  Data d{synth::read_dataset(s.data_dir), {}};
  d.split = pipeline::split_indices(d.dataset.sequences.size(), s.dev_fraction);
  return d;
}

void print_report(std::ostream& out, const std::string& label, const EvalReport& r) {
  out << label << ": ccc_m " << csv::format(r.ccc_m) << ", ccc_s " << csv::format(r.ccc_s) << ", kl ("
      << family_name(r.family) << ") " << csv::format(r.kl) << ", mean s_hat " << csv::format(r.mean_s_hat);
  if (r.shift_applied) out << ", time shift " << csv::format(r.best_time_shift_s) << " s";
  out << '\n';
}

int cmd_synth(Context& c) {
  const auto sequences = synth::generate(c.settings.synth);
  synth::write_dataset(c.out_dir, c.settings.synth, sequences);
  c.out << "wrote " << sequences.size() << " sequences to " << c.out_dir.string() << '\n';
  return kSuccess;
}

int cmd_fuse(Context& c) {
  const std::regex pattern(R"(seq_(\d+)_annotations\.csv)");
  std::map<std::string, fs::path> inputs;
  if (!fs::is_directory(c.settings.data_dir))
    throw InputError(c.settings.data_dir + ": not a directory");
  for (const auto& entry : fs::directory_iterator(c.settings.data_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) inputs[m[1].str()] = entry.path();
  }
  if (inputs.empty()) throw InputError(c.settings.data_dir + ": no seq_*_annotations.csv files");
  for (const auto& [id, path] : inputs) {
    const annotations::AnnotationMatrix ann = annotations::read_annotations(path);
    const annotations::LabelDistSeries labels = pipeline::fuse(ann, c.settings.fusion);
    annotations::write_fused(c.out_dir / ("seq_" + id + "_fused.csv"), labels, ann.frame_rate);
  }
  c.out << "fused " << inputs.size() << " sequences (" << family_name(c.settings.fusion.family)
        << " family) into " << c.out_dir.string() << '\n';
  return kSuccess;
}

int cmd_train(Context& c) {
  const Settings& s = c.settings;
  const Data data = load_data(s);
  const Corpus train_set = pipeline::make_corpus(data.dataset, data.split.train, s.fusion);
  const Corpus dev_set = pipeline::make_corpus(data.dataset, data.split.dev, s.fusion);
  const pipeline::TrainResult result =
      pipeline::train(s.model, train_set, s.train, [&](const pipeline::EpochRecord& r, const pipeline::Model&) {
        c.out << "epoch " << r.epoch << '/' << s.train.epochs << "  loss " << csv::format(r.total) << '\n';
      });
  pipeline::save_model(c.out_dir / "model.txt", result.model);
  pipeline::write_loss_history(c.out_dir / "loss_history.csv", result.history);

  pipeline::EvalOptions options = s.eval;
  options.time_shift = false;
  const EvalReport report = pipeline::evaluate(result.model, dev_set, options);
  const pipeline::Model untrained(s.model, train_set.sequences.front().feature_dim, s.train.seed);
  const EvalReport baseline = pipeline::evaluate(untrained, dev_set, options);
  pipeline::write_metrics(c.out_dir / "metrics.csv", c.hash, report, &baseline);
  pipeline::write_per_sequence(c.out_dir / "per_sequence.csv", report);
  print_report(c.out, "dev", report);
  return kSuccess;
}

int cmd_eval(Context& c) {
  const Settings& s = c.settings;
  const pipeline::Model model = pipeline::load_model(s.model_path);
  pipeline::FusionConfig fusion = s.fusion;
  fusion.family = model.config.truth_family;
  validate_fusion(fusion);
  pipeline::EvalOptions options = s.eval;
  options.family = model.config.truth_family;

  const Data data = load_data(s);
  const Corpus report_set = pipeline::make_corpus(data.dataset, data.indices(options.report_partition), fusion);
  std::optional<Corpus> tune_set;
  if (options.time_shift)
    tune_set = pipeline::make_corpus(data.dataset, data.indices(options.tune_partition), fusion);
  const Corpus* tune = tune_set ? &*tune_set : nullptr;

  const EvalReport report = pipeline::evaluate(model, report_set, options, tune);
  const pipeline::Model untrained(model.config, model.feature_dim, s.train.seed);
  const EvalReport baseline = pipeline::evaluate(untrained, report_set, options, tune);
  pipeline::write_metrics(c.out_dir / "metrics.csv", c.hash, report, &baseline);
  pipeline::write_per_sequence(c.out_dir / "per_sequence.csv", report);
  print_report(c.out, options.report_partition, report);
  return kSuccess;
}

int cmd_sweep(Context& c) {
  const Settings& s = c.settings;
  const Data data = load_data(s);
  const Corpus train_set = pipeline::make_corpus(data.dataset, data.split.train, s.fusion);
  const Corpus dev_set = pipeline::make_corpus(data.dataset, data.split.dev, s.fusion);
  pipeline::EvalOptions options = s.eval;
  options.time_shift = false;
  const pipeline::SweepResult sweep = pipeline::sweep_alpha(s.alphas, s.model, s.train, train_set, dev_set, options);
  pipeline::write_alpha_sweep(c.out_dir / "alpha_sweep.csv", sweep);
  csv::write(c.out_dir / "alpha_sweep_summary.csv",
             csv::Table{{"spearman_low_alpha", "recommended_alpha_min", "recommended_alpha_max"},
                        {{sweep.spearman_low_alpha, sweep.recommended_band.first, sweep.recommended_band.second}}});
  for (const auto& row : sweep.rows) print_report(c.out, "alpha " + csv::format(row.alpha), row.report);
  return kSuccess;
}

int cmd_ablate(Context& c) {
  const Settings& s = c.settings;
  const Data data = load_data(s);
  pipeline::EvalOptions options = s.eval;
  options.time_shift = false;
  const auto rows = pipeline::ablate_annotators(data.dataset, data.split, s.keeps, s.families, s.model, s.train,
                                                s.fusion, options);
  pipeline::write_ablation(c.out_dir / "ablation.csv", rows);
  for (const auto& r : rows)
    print_report(c.out, "keep " + std::to_string(r.keep) + " " + std::string(family_name(r.family)), r.report);
  return kSuccess;
}

int cmd_analyze_kl(Context& c) {
  const auto scenarios = kl_scenarios(c.settings);
  const auto grid = s_grid(c.settings);
  const pipeline::KlCurves curves = pipeline::analyze_kl_curves(scenarios, grid);
  pipeline::write_kl_curves(c.out_dir / "kl_curves.csv", c.out_dir / "kl_argmins.csv", curves);
  for (const auto& a : curves.argmins)
    c.out << a.scenario << ": argmin_t " << csv::format(a.argmin_t) << ", argmin_gaussian "
          << csv::format(a.argmin_gaussian) << '\n';
  return kSuccess;
}

using Command = std::function<int(Context&)>;

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table{
      {"synth", cmd_synth},     {"fuse", cmd_fuse},     {"train", cmd_train},          {"eval", cmd_eval},
      {"sweep-alpha", cmd_sweep}, {"ablate", cmd_ablate}, {"analyze-kl", cmd_analyze_kl}};
  return table;
}

// Argument parsing ---------------------------------------------------------------

class FlagBinder {
 public:
  FlagBinder(CLI::App* app, Config& overrides) : app_(app), overrides_(overrides) {}

  FlagBinder& value(const std::string& flag, const std::string& key, const std::string& help) {
    app_->add_option_function<std::string>(flag, [cfg = &overrides_, key](const std::string& v) { cfg->set(key, v); },
                                           help);
    return *this;
  }
  FlagBinder& list(const std::string& flag, const std::string& key, const std::string& help) {
    app_->add_option_function<std::vector<std::string>>(
            flag, [cfg = &overrides_, key](const std::vector<std::string>& v) { cfg->set(key, join_strings(v)); }, help)
        ->delimiter(',');
    return *this;
  }
  FlagBinder& toggle(const std::string& flag, const std::string& key, const std::string& help) {
    app_->add_flag_function(flag, [cfg = &overrides_, key](std::int64_t) { cfg->set(key, "true"); }, help);
    return *this;
  }

 private:
  CLI::App* app_;
  Config& overrides_;
};

void add_training_flags(FlagBinder& b) {
  b.value("--data", "data.dir", "Dataset directory written by `synth`")
      .value("--family", "model.family", "Label family: t or gaussian")
      .value("--alpha", "model.alpha", "Weight of the label-KL term")
      .value("--keep", "fusion.keep", "Annotators kept per sequence (0 keeps all)")
      .value("--epochs", "train.epochs", "Training epochs")
      .value("--lr", "train.lr", "Adam learning rate")
      .value("--batch-size", "train.batch_size", "Windows per batch")
      .value("--dev-fraction", "data.dev_fraction", "Fraction of sequences held out");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Label-distribution learning with Student's-t annotator uncertainty", "labeldist"};
  app.require_subcommand(1);
  app.fallthrough();

  Config overrides;
  std::string config_path, out_dir = ".";
  std::vector<std::string> sets;
  bool dry_run = false;
  app.add_option("--config", config_path, "Key=value configuration file (a manifest works too)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--set", sets, "Override any config key: --set key=value");
  app.add_flag("--dry-run", dry_run, "Validate the configuration and write only the manifest");
  FlagBinder global(&app, overrides);
  global.value("--seed", "seed", "Master seed").toggle("--paper-scale", "paper_scale", "Paper-size model");

  std::map<std::string, CLI::App*> subs;
  auto sub = [&](const std::string& name, const std::string& help) {
    subs[name] = app.add_subcommand(name, help);
    return FlagBinder(subs[name], overrides);
  };
  sub("synth", "Generate a synthetic dataset")
      .value("--num-sequences", "synth.num_sequences", "Number of sequences")
      .value("--frames", "synth.frames_per_sequence", "Frames per sequence")
      .value("--annotators", "synth.num_annotators", "Annotators per sequence")
      .value("--lag", "synth.injected_lag_s", "Annotator reaction lag in seconds")
      .value("--noise-scale", "synth.noise_scale", "Annotator noise scale")
      .list("--distortion-annotators", "synth.distortion_annotators", "Annotators given a sinusoidal distortion");
  sub("fuse", "Fuse annotation CSVs into label distributions")
      .value("--data", "data.dir", "Directory with seq_*_annotations.csv")
      .value("--family", "model.family", "Label family: t or gaussian")
      .value("--keep", "fusion.keep", "Annotators kept per sequence (0 keeps all)")
      .value("--median", "fusion.median_window", "Median filter window in frames")
      .value("--lowpass", "fusion.lowpass_hz", "Low-pass cutoff in Hz")
      .list("--lowpass-annotators", "fusion.lowpass_annotators", "Annotators the low-pass applies to")
      .toggle("--normalize", "fusion.normalize", "Per-annotator standardisation");
  {
    FlagBinder b = sub("train", "Train a model and score the dev partition");
    add_training_flags(b);
    b.toggle("--freeze-sigma", "train.freeze_sigma", "Pin weight sigmas near zero");
  }
  sub("eval", "Score a trained model")
      .value("--data", "data.dir", "Dataset directory")
      .value("--model", "eval.model", "Model file written by `train`")
      .value("--keep", "fusion.keep", "Annotators kept per sequence (0 keeps all)")
      .value("--dev-fraction", "data.dev_fraction", "Fraction of sequences held out")
      .value("--tune-shift", "eval.tune_shift", "Partition for the time-shift search, or none")
      .value("--report", "eval.report", "Partition to score: train, dev or all");
  {
    FlagBinder b = sub("sweep-alpha", "Train and score one model per alpha");
    add_training_flags(b);
    b.list("--alphas", "sweep.alphas", "Alpha values");
  }
  {
    FlagBinder b = sub("ablate", "Annotator-count ablation for each label family");
    add_training_flags(b);
    b.list("--keeps", "ablate.keeps", "Annotator counts").list("--families", "ablate.families", "Label families");
  }
  sub("analyze-kl", "Label-KL curves over the label spread")
      .list("--scenario", "analyze.scenarios", "fig2a, fig2b, fig2c or fig2d")
      .list("--s-hat", "analyze.s_hat", "Custom estimated spreads")
      .list("--nu", "analyze.nu", "Custom degrees of freedom")
      .value("--s-min", "analyze.s_min", "Grid start")
      .value("--s-max", "analyze.s_max", "Grid end")
      .value("--s-step", "analyze.s_step", "Grid step");

  std::vector<std::string> argv_storage{"labeldist"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInvalidInput;
  }

  std::string command;
  for (const auto& [name, s] : subs)
    if (s->parsed()) command = name;

  try {
    Config raw;
    if (!config_path.empty()) {
      const Config file = Config::load(config_path);
      for (const auto& [key, value] : file.values())
        if (key.rfind("manifest.", 0) != 0) raw.set(key, value);
    }
    for (const auto& line : sets) raw.merge(Config::parse(line, "--set"));
    raw.merge(overrides);

    Context ctx{resolve(raw), out_dir, {}, out};
    validate(ctx.settings, command);
    ctx.hash = config_hash(ctx.settings.resolved);
    write_manifest(ctx.out_dir, command, config_path, ctx.settings);
    if (dry_run) {
      out << "configuration valid; wrote " << (ctx.out_dir / "manifest.txt").string() << '\n';
      return kSuccess;
    }
    return commands().at(command)(ctx);
  } catch (const NumericError& e) {
    err << "numeric failure (" << e.component() << "): " << e.what() << '\n';
    return kNumericFailure;
  } catch (const UndefinedMomentError& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const DomainError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const ShapeError& e) {
    err << "input error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const fs::filesystem_error& e) {
    err << "input error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace labeldist::cli
