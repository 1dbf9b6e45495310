// pvred: command-line front end for data generation, training, evaluation,
// prediction, gradient checking and plot-data emission.
//
// Exit codes: 0 success, 1 runtime or check failure, 2 usage error.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pvred/pvred.hpp"

namespace fs = std::filesystem;
using namespace pvred;

namespace {

struct UsageError : Error {
  using Error::Error;
};

/// Sequence files of a dataset: <dir>/<split>/*.csv when that exists, else <dir>/*.csv.
std::vector<data::MotionSequence> load_split(const fs::path& dir, const std::string& split) {
  fs::path root = fs::is_directory(dir / split) ? dir / split : dir;
  if (!fs::is_directory(root)) throw Error("dataset directory " + root.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .csv sequence files in " + root.string());
  std::vector<data::MotionSequence> out;
  for (const auto& f : files) out.push_back(data::load_sequence(f));
  return out;
}

std::vector<double> parse_horizons(const std::string& text) {
  std::vector<double> out;
  for (auto part : textio::split(text, ',')) {
    const double v = textio::parse_double(part);
    if (!(v > 0.0)) throw UsageError("horizons must be positive");
    out.push_back(v);
  }
  return out;
}

std::string echo_config(const CLI::App& app) { return app.config_to_str(true, false); }

// Config files are expanded into ordinary `--key value` arguments before
// parsing, placed ahead of the real command line, and skipped for any key the
// command line sets itself: explicit flags always win.
void add_config_option(CLI::App* cmd) {
  static std::string path;  // consumed by expand_config before parsing
  cmd->add_option("--config", path, "Flat key = value file (a [<subcommand>] section is also accepted)");
}

std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.size() < 2) return args;
  const std::string sub = args[1];
  std::string file;
  std::set<std::string> explicit_keys;
  for (std::size_t i = 2; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (!a.starts_with("--")) continue;
    const std::string key = a.substr(2, a.find('=') - 2);
    explicit_keys.insert(key);
    if (key == "config") file = a.find('=') != std::string::npos ? a.substr(a.find('=') + 1) : (i + 1 < args.size() ? args[i + 1] : "");
  }
  if (file.empty()) return args;

  std::vector<std::string> extra;
  for (const auto& item : CLI::ConfigINI().from_file(file)) {
    if (!(item.parents.empty() || (item.parents.size() == 1 && item.parents.front() == sub))) continue;
    if (item.name == "++" || item.name == "--" || explicit_keys.contains(item.name)) continue;  // section markers
    if (item.inputs.size() == 1 && (item.inputs.front() == "true" || item.inputs.front() == "false")) {
      extra.push_back("--" + item.name + "=" + item.inputs.front());
      continue;
    }
    for (const auto& value : item.inputs) {
      extra.push_back("--" + item.name);
      extra.push_back(value);
    }
  }
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  fs::path out = "data";
  std::uint64_t seed = 7;
  int num_train = 20;
  int num_test = 4;
  data::SynthSpec spec;
};

void add_gen_data(CLI::App& app, GenDataArgs& a) {
  auto* cmd = app.add_subcommand("gen-data", "Write a synthetic motion dataset (train/ and test/ sequence files)");
  add_config_option(cmd);
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--seed", a.seed, "Generator seed");
  cmd->add_option("--num-train", a.num_train, "Training sequences");
  cmd->add_option("--num-test", a.num_test, "Test sequences");
  cmd->add_option("--frames", a.spec.frames, "Frames per sequence");
  cmd->add_option("--joints", a.spec.joints, "Joints per pose (3 channels each)");
  cmd->add_option("--fps", a.spec.fps, "Frame rate");
  cmd->add_option("--harmonics", a.spec.harmonics, "Sinusoids per channel");
  cmd->add_option("--amp-min", a.spec.amplitude_min, "Minimum amplitude (rad)");
  cmd->add_option("--amp-max", a.spec.amplitude_max, "Maximum amplitude (rad)");
  cmd->add_option("--freq-min", a.spec.frequency_min, "Minimum frequency (Hz)");
  cmd->add_option("--freq-max", a.spec.frequency_max, "Maximum frequency (Hz), below fps/2");
  cmd->add_option("--offset-max", a.spec.offset_max, "Rest-pose offset range (rad)");
  cmd->add_option("--drift-max", a.spec.drift_max, "Drift range of aperiodic sequences (rad/s)");
  cmd->add_option("--aperiodic-fraction", a.spec.aperiodic_fraction, "Fraction of sequences with drift");
  cmd->add_option("--noise", a.spec.noise_std, "Gaussian noise standard deviation (rad)");
}

int run_gen_data(const CLI::App& cmd, GenDataArgs a) {
  if (a.num_train < 1 || a.num_test < 0) throw UsageError("need --num-train >= 1 and --num-test >= 0");
  a.spec.seed = a.seed;
  a.spec.num_sequences = a.num_train + a.num_test;
  try {
    a.spec.validate();
  } catch (const InvalidSpec& e) {
    throw UsageError(e.what());
  }
  const auto sequences = data::generate_synthetic(a.spec);
  fs::create_directories(a.out / "train");
  fs::create_directories(a.out / "test");
  nlohmann::ordered_json manifest;
  manifest["tool"] = "pvred";
  manifest["version"] = kVersion;
  manifest["config"] = echo_config(cmd);
  manifest["train"] = nlohmann::ordered_json::array();
  manifest["test"] = nlohmann::ordered_json::array();
  for (int s = 0; s < a.spec.num_sequences; ++s) {
    const bool is_train = s < a.num_train;
    const int index = is_train ? s : s - a.num_train;
    std::ostringstream name;
    name << "seq_" << std::setw(3) << std::setfill('0') << index << ".csv";
    const fs::path rel = fs::path(is_train ? "train" : "test") / name.str();
    data::save_sequence(sequences[static_cast<std::size_t>(s)], a.out / rel);
    manifest[is_train ? "train" : "test"].push_back(rel.generic_string());
  }
  const std::string text = manifest.dump(1) + "\n";
  textio::atomic_write_file(a.out / "manifest.json", text);
  std::cout << text;
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  fs::path data = "data";
  fs::path out = "run";
  std::uint64_t seed = 7;
  long iters = 2000;
  long batch = 16;
  double lr = 3e-3;
  long hidden = 64;
  long embed_dim = 0;
  long n = 50;
  long m = 25;
  double dropout = 0.2;
  double clip_norm = 5.0;
  std::string variant = "pvred";
  bool no_vel = false;
  bool no_pos = false;
  bool no_qt = false;
  bool no_bias = false;
  long log_every = 0;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a model; writes model.json, loss.csv and run.cfg into --out");
  add_config_option(cmd);
  cmd->add_option("--data", a.data, "Dataset directory (uses <data>/train when present)");
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--seed", a.seed, "Initialization, sampling and dropout seed");
  cmd->add_option("--iters", a.iters, "Training iterations (mini-batches)");
  cmd->add_option("--batch", a.batch, "Clips per mini-batch");
  cmd->add_option("--lr", a.lr, "Adam learning rate (constant)");
  cmd->add_option("--hidden", a.hidden, "GRU hidden units");
  cmd->add_option("--embed-dim", a.embed_dim, "Position embedding dimension (0: pose dimension)");
  cmd->add_option("--n", a.n, "Observed frames");
  cmd->add_option("--m", a.m, "Predicted frames");
  cmd->add_option("--dropout", a.dropout, "Dropout rate on the decoder head input");
  cmd->add_option("--clip-norm", a.clip_norm, "Global gradient-norm clip (<= 0 disables)");
  cmd->add_option("--variant", a.variant, "Decoder variant")->check(CLI::IsMember({"pvred", "red"}));
  cmd->add_flag("--no-vel", a.no_vel, "Drop the velocity input");
  cmd->add_flag("--no-pos", a.no_pos, "Drop the position embedding input");
  cmd->add_flag("--no-qt", a.no_qt, "Train with the exponential-map L2 loss instead of the quaternion L1 loss");
  cmd->add_flag("--no-bias", a.no_bias, "Keep all biases at zero");
  cmd->add_option("--log-every", a.log_every, "Print the loss every N iterations (0: never)");
}

int run_train(const CLI::App& cmd, const TrainArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  const auto dataset = load_split(a.data, "train");

  train::TrainConfig cfg;
  cfg.model.pose_dim = dataset.front().channels();
  cfg.model.hidden = a.hidden;
  cfg.model.embed_dim = a.embed_dim;
  cfg.model.observed = a.n;
  cfg.model.predicted = a.m;
  cfg.model.variant = model::parse_variant(a.variant);
  cfg.model.use_velocity = !a.no_vel;
  cfg.model.use_position = !a.no_pos;
  cfg.model.loss = a.no_qt ? model::LossKind::kEulerMse : model::LossKind::kQuatL1;
  cfg.model.use_bias = !a.no_bias;
  cfg.model.dropout = a.dropout;
  cfg.model.fps = dataset.front().fps;
  cfg.iterations = a.iters;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.clip_norm = a.clip_norm;
  cfg.seed = a.seed;
  try {
    cfg.model.validate();
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }

  auto result = train::train(model::init_model(cfg.model, a.seed), dataset, cfg, [&](long it, double loss) {
    if (a.log_every > 0 && it % a.log_every == 0)
      std::cerr << "iteration " << it << " loss " << textio::format_double(loss) << "\n";
  });

  fs::create_directories(a.out);
  model_io::save_model({cfg.model, result.params, a.seed}, a.out / "model.json");
  textio::atomic_write_file(a.out / "loss.csv", train::format_loss_csv(result.loss_history));
  textio::atomic_write_file(a.out / "run.cfg", echo_config(cmd));

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  nlohmann::ordered_json report;
  report["tool"] = "pvred";
  report["version"] = kVersion;
  report["command"] = "train";
  report["config"] = echo_config(cmd);
  report["iterations"] = result.loss_history.size();
  if (!result.loss_history.empty()) {
    report["initial_loss"] = result.loss_history.front();
    report["final_loss"] = result.loss_history.back();
  }
  report["wall_clock_s"] = seconds;
  std::cout << report.dump(1) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  fs::path model;
  fs::path data = "data";
  fs::path out = "horizons.csv";
  std::string predictor = "model";
  bool baselines = false;
  std::string horizons = "80,160,320,400,560,1000";
  long clips = 64;
  std::uint64_t seed = 7;
  long n = 50;
  long m = 25;
  long window = 2;
  std::vector<long> exclude;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Mean Euler-angle error per horizon over seed clips of the test split");
  add_config_option(cmd);
  cmd->add_option("--model", a.model, "Model file (required for --predictor model)");
  cmd->add_option("--data", a.data, "Dataset directory (uses <data>/test when present)");
  cmd->add_option("--out", a.out, "Horizon-table CSV; baselines go to <stem>.<name>.csv");
  cmd->add_option("--predictor", a.predictor, "What to evaluate")
      ->check(CLI::IsMember({"model", "zero-velocity", "moving-average"}));
  cmd->add_flag("--baselines", a.baselines, "Also evaluate zero-velocity and moving-average");
  cmd->add_option("--horizons", a.horizons, "Comma-separated horizons in milliseconds");
  cmd->add_option("--clips", a.clips, "Seed clips to average over");
  cmd->add_option("--seed", a.seed, "Seed-clip sampling seed");
  cmd->add_option("--n", a.n, "Observed frames when no model is given");
  cmd->add_option("--m", a.m, "Predicted frames when no model is given");
  cmd->add_option("--window", a.window, "Moving-average window");
  cmd->add_option("--exclude-channels", a.exclude, "Channel indices left out of the error")->delimiter(',');
}

int run_evaluate(const EvaluateArgs& a) {
  const auto test = load_split(a.data, "test");
  eval::EvalOptions opt;
  opt.horizons_ms = parse_horizons(a.horizons);
  opt.num_clips = a.clips;
  opt.seed = a.seed;
  opt.observed = a.n;
  opt.predicted = a.m;
  std::optional<model_io::ModelFile> mf;
  if (a.predictor == "model" || !a.model.empty()) {
    if (a.model.empty()) throw UsageError("--predictor model needs --model");
    mf = model_io::load_model(a.model);
    opt.observed = mf->config.observed;
    opt.predicted = mf->config.predicted;
  }
  if (!a.exclude.empty()) {
    opt.mask.assign(static_cast<std::size_t>(test.front().channels()), true);
    for (long c : a.exclude) {
      if (c < 0 || c >= test.front().channels()) throw UsageError("--exclude-channels index out of range");
      opt.mask[static_cast<std::size_t>(c)] = false;
    }
  }

  std::vector<std::pair<std::string, eval::Predictor>> predictors;
  auto add = [&](const std::string& name) {
    if (name == "model")
      predictors.emplace_back(name, [&](const Eigen::MatrixXd& x, long frames) {
        return model::predict(mf->params, x, mf->config, frames);
      });
    else if (name == "zero-velocity")
      predictors.emplace_back(name, eval::zero_velocity_predict);
    else
      predictors.emplace_back(name, [&](const Eigen::MatrixXd& x, long frames) {
        return eval::moving_average_predict(x, frames, a.window);
      });
  };
  add(a.predictor);
  if (a.baselines)
    for (const char* b : {"zero-velocity", "moving-average"})
      if (a.predictor != b) add(b);

  std::vector<eval::HorizonTable> tables;
  for (std::size_t i = 0; i < predictors.size(); ++i) {
    tables.push_back(eval::evaluate(predictors[i].second, test, opt));
    fs::path path = a.out;
    if (i > 0) path = a.out.parent_path() / (a.out.stem().string() + "." + predictors[i].first + a.out.extension().string());
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    textio::atomic_write_file(path, eval::format_horizon_csv(tables.back()));
  }

  std::cout << std::left << std::setw(12) << "horizon_ms";
  for (const auto& p : predictors) std::cout << std::setw(16) << p.first;
  std::cout << "\n";
  for (std::size_t h = 0; h < opt.horizons_ms.size(); ++h) {
    std::cout << std::setw(12) << textio::format_double(opt.horizons_ms[h]);
    for (const auto& t : tables) std::cout << std::setw(16) << std::fixed << std::setprecision(4) << t.errors[h];
    std::cout << std::defaultfloat << "\n";
  }
  std::cout << "clips: " << opt.num_clips << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  fs::path model;
  fs::path input;
  fs::path out = "prediction.csv";
  long frames = 0;
  std::uint64_t seed = 0;
};

void add_predict(CLI::App& app, PredictArgs& a) {
  auto* cmd = app.add_subcommand("predict", "Predict future frames from the last n frames of a sequence file");
  add_config_option(cmd);
  cmd->add_option("--model", a.model, "Model file")->required();
  cmd->add_option("--input", a.input, "Seed sequence file")->required();
  cmd->add_option("--out", a.out, "Predicted sequence file");
  cmd->add_option("--frames", a.frames, "Frames to predict (0: the model's m)");
  // accepted for a uniform command surface; prediction is deterministic
  cmd->add_option("--seed", a.seed, "Unused");
}

int run_predict(const PredictArgs& a) {
  if (a.frames < 0) throw UsageError("--frames must be >= 0");
  const auto mf = model_io::load_model(a.model);
  const auto seq = data::load_sequence(a.input);
  if (seq.channels() != mf.config.pose_dim)
    throw Error("input has " + std::to_string(seq.channels()) + " channels, model expects " +
                std::to_string(mf.config.pose_dim));
  if (seq.length() < mf.config.observed)
    throw Error("input has " + std::to_string(seq.length()) + " frames, model needs " +
                std::to_string(mf.config.observed));
  const Eigen::MatrixXd observed = seq.frames.bottomRows(mf.config.observed);
  data::MotionSequence out;
  out.frames = model::predict(mf.params, observed, mf.config, a.frames > 0 ? a.frames : mf.config.predicted);
  out.fps = seq.fps;
  out.channel_names = seq.channel_names;
  if (!out.frames.allFinite()) throw Error("prediction is not finite");
  data::save_sequence(out, a.out);
  std::cout << "wrote " << out.length() << " frames to " << a.out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  gradcheck::Options opt;
  fs::path out;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  add_config_option(cmd);
  cmd->add_option("--seed", a.opt.seed, "Sampling seed");
  cmd->add_option("--tol", a.opt.end_to_end_tol, "End-to-end relative-error tolerance");
  cmd->add_option("--unit-tol", a.opt.unit_tol, "Jacobian/cell/linear relative-error tolerance");
  cmd->add_flag("--corrupt-jacobian", a.opt.corrupt_jacobian, "Debug: check a deliberately wrong QT Jacobian");
  cmd->add_option("--out", a.out, "Also write the report to this file");
}

int run_gradcheck(const GradcheckArgs& a) {
  const auto report = gradcheck::run_all(a.opt);
  const std::string text = report.format();
  std::cout << text;
  if (!a.out.empty()) textio::atomic_write_file(a.out, text);
  return report.passed() ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct EmitPlotArgs {
  std::vector<fs::path> inputs;
  std::vector<std::string> labels;
  fs::path out = "plot.csv";
  std::uint64_t seed = 0;
};

void add_emit_plot(CLI::App& app, EmitPlotArgs& a) {
  auto* cmd = app.add_subcommand("emit-plot", "Merge horizon tables and loss histories into series,horizon_ms,value");
  add_config_option(cmd);
  cmd->add_option("--input", a.inputs, "Horizon-table or loss CSV (repeatable)")->required();
  cmd->add_option("--label", a.labels, "Series label per input (default: file stem)");
  cmd->add_option("--out", a.out, "Output CSV");
  cmd->add_option("--seed", a.seed, "Unused");
}

int run_emit_plot(const EmitPlotArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.inputs.size())
    throw UsageError("give one --label per --input or none");
  std::vector<plot::Series> series;
  for (std::size_t i = 0; i < a.inputs.size(); ++i)
    series.push_back({a.labels.empty() ? a.inputs[i].stem().string() : a.labels[i], textio::read_file(a.inputs[i])});
  textio::atomic_write_file(a.out, plot::emit_plot(series));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pvred: position-velocity recurrent encoder-decoder for pose-sequence prediction"};
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenDataArgs gen;
  TrainArgs tr;
  EvaluateArgs ev;
  PredictArgs pr;
  GradcheckArgs gc;
  EmitPlotArgs ep;
  add_gen_data(app, gen);
  add_train(app, tr);
  add_evaluate(app, ev);
  add_predict(app, pr);
  add_gradcheck(app, gc);
  add_emit_plot(app, ep);

  try {
    std::vector<std::string> args;
    try {
      args = expand_config(argc, argv);
    } catch (const CLI::FileError& e) {
      std::cerr << "pvred: " << e.what() << "\n";
      return 2;
    }
    std::vector<char*> raw;
    for (auto& a : args) raw.push_back(a.data());
    app.parse(static_cast<int>(raw.size()), raw.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (name == "gen-data") return run_gen_data(*cmd, gen);
    if (name == "train") return run_train(*cmd, tr);
    if (name == "evaluate") return run_evaluate(ev);
    if (name == "predict") return run_predict(pr);
    if (name == "gradcheck") return run_gradcheck(gc);
    if (name == "emit-plot") return run_emit_plot(ep);
  } catch (const UsageError& e) {
    std::cerr << "pvred " << name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pvred " << name << ": " << e.what() << "\n";
    return 1;
  }
  return 2;
}
