#include "commands.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "config_file.hpp"
#include "json.hpp"
#include "wiski/error.hpp"
#include "wiski/log.hpp"
#include "wiski/loops/acquisition.hpp"
#include "wiski/loops/data.hpp"
#include "wiski/loops/objectives.hpp"
#include "wiski/loops/streaming.hpp"
#include "wiski/loops/timing.hpp"
#include "wiski/snapshot.hpp"

namespace wiski::cli {
namespace {

using namespace wiski::loops;

std::string num(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw MissingFileError("no such file: " + path);
}

/// Writes to --out when given, otherwise to the caller's stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

struct ModelFlags {
  std::string model = "wiski";
  std::string kernel = "rbf";
  Eigen::Index m = 256;
  Eigen::Index grid_size = 0;
  Eigen::Index rank = 0;
  double lengthscale = 0.0;
  double outputscale = 0.0;
  double noise = 0.0;
  bool priors = false;
};

void add_model_flags(CLI::App* app, ModelFlags& f) {
  app->add_option("--model", f.model, "Surrogate")->check(CLI::IsMember({"wiski", "exact"}))->capture_default_str();
  app->add_option("--kernel", f.kernel, "Kernel family")
      ->check(CLI::IsMember({"rbf", "matern12"}))
      ->capture_default_str();
  app->add_option("--m", f.m, "Total inducing points (nodes per dim = floor(m^(1/d)))")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--grid-size", f.grid_size, "Nodes per dimension; overrides --m")->check(CLI::NonNegativeNumber);
  app->add_option("--rank", f.rank, "Root rank r; 0 picks the default")->check(CLI::NonNegativeNumber);
  app->add_option("--lengthscale", f.lengthscale, "Initial lengthscale; 0 keeps the default")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--outputscale", f.outputscale, "Initial outputscale; 0 keeps the default")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--noise", f.noise, "Initial noise variance; 0 keeps the default")->check(CLI::NonNegativeNumber);
  app->add_option("--priors", f.priors, "Gamma priors on lengthscale and outputscale")->capture_default_str();
}

SurrogateConfig make_config(const ModelFlags& f, int dims, NoiseMode mode) {
  SurrogateConfig c;
  c.kind = parse_surrogate_kind(f.model);
  c.spec = {parse_kernel_family(f.kernel), dims};
  c.params = KernelParams::defaults(dims);
  if (f.lengthscale > 0.0) c.params.log_lengthscales.setConstant(std::log(f.lengthscale));
  if (f.outputscale > 0.0) c.params.log_outputscale = std::log(f.outputscale);
  if (f.noise > 0.0) c.params.log_noise = std::log(f.noise);
  Eigen::Index per_dim = f.grid_size;
  if (per_dim == 0) {
    per_dim = static_cast<Eigen::Index>(std::floor(std::pow(static_cast<double>(f.m), 1.0 / dims) + 1e-9));
  }
  if (per_dim < 2) throw InvalidArgument("grid needs at least 2 nodes per dimension");
  c.grid = Grid::uniform(dims, per_dim);
  c.options.rank = f.rank;
  c.options.priors.enabled = f.priors;
  c.noise_mode = mode;
  return c;
}

void write_param_header(std::ostream& os, int dims) {
  for (int k = 0; k < dims; ++k) os << ",lengthscale_" << k;
  os << ",outputscale,noise\n";
}

void write_params(std::ostream& os, const KernelParams& p) {
  for (Eigen::Index k = 0; k < p.log_lengthscales.size(); ++k) os << ',' << num(std::exp(p.log_lengthscales[k]));
  os << ',' << num(std::exp(p.log_outputscale)) << ',' << num(std::exp(p.log_noise)) << '\n';
}

/// Runs `trial(seed)` for seeds seed0..seed0+count-1 on up to WISKI_THREADS workers and
/// concatenates the outputs in seed order.
std::string run_trials(std::uint64_t seed0, int count, const std::function<std::string(std::uint64_t)>& trial) {
  std::vector<std::string> results(static_cast<std::size_t>(count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  const unsigned workers = std::min<unsigned>(worker_threads(), static_cast<unsigned>(count));
  std::mutex mu;
  int next = 0;
  auto work = [&] {
    for (;;) {
      int i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= count) return;
        i = next++;
      }
      try {
        results[static_cast<std::size_t>(i)] = trial(seed0 + static_cast<std::uint64_t>(i));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::string out;
  for (const auto& r : results) out += r;
  return out;
}

struct DataFlags {
  std::string data;
  std::string target;
  std::string synthetic;
  Eigen::Index n = 1000;
  int dims = 2;
  double noise_sd = 0.2;
  double test_fraction = 0.1;
  double pretrain_fraction = 0.05;
};

void add_data_flags(CLI::App* app, DataFlags& f, const std::vector<std::string>& synthetic) {
  app->add_option("--data", f.data, "Input CSV with a header row");
  app->add_option("--target", f.target, "Target column name or zero-based index (default: last)");
  app->add_option("--synthetic", f.synthetic, "Generated dataset instead of --data")->check(CLI::IsMember(synthetic));
  app->add_option("--n", f.n, "Rows for synthetic data")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--test-fraction", f.test_fraction)->check(CLI::Range(0.0, 0.99))->capture_default_str();
  app->add_option("--pretrain-fraction", f.pretrain_fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
}

Dataset load_data(const DataFlags& f, std::uint64_t seed, const CLI::App& app) {
  if (f.data.empty() == f.synthetic.empty()) {
    throw UsageError("give exactly one of --data or --synthetic\n" + app.help());
  }
  if (!f.data.empty()) {
    require_file(f.data);
    return read_csv(f.data, f.target);
  }
  if (f.synthetic == "sine") return make_sine(f.n, f.noise_sd, seed);
  if (f.synthetic == "linear") return make_linear(f.n, f.dims, seed);
  if (f.synthetic == "banana") return make_banana(f.n, seed);
  return make_blobs(f.n, seed);
}

struct StreamFlags {
  int pretrain_epochs = 200;
  double lr_batch = 5e-2;
  double lr_online = 5e-3;
  int steps_per_obs = 1;
  int hyper_every = 1;
  int eval_every = 1;
};

void add_stream_flags(CLI::App* app, StreamFlags& f) {
  app->add_option("--pretrain-epochs", f.pretrain_epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  app->add_option("--lr-batch", f.lr_batch, "Adam rate for pretraining")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--lr-online", f.lr_online, "Adam rate while streaming")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--steps-per-obs", f.steps_per_obs, "Hyper steps per observation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--hyper-every", f.hyper_every, "Run hyper steps on every k-th observation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--eval-every", f.eval_every, "Test metrics every k observations; 0 only at the end")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

StreamConfig to_stream_config(const StreamFlags& f, std::uint64_t seed) {
  StreamConfig c;
  c.pretrain_epochs = f.pretrain_epochs;
  c.batch_lr = f.lr_batch;
  c.online_lr = f.lr_online;
  c.steps_per_observation = f.steps_per_obs;
  c.hyper_every = f.hyper_every;
  c.eval_every = f.eval_every;
  c.seed = seed;
  return c;
}

struct RefitFlags {
  double lr = 0.05;
  int max_steps = 50;
  double rel_tol = 1e-4;
};

void add_refit_flags(CLI::App* app, RefitFlags& f) {
  app->add_option("--refit-lr", f.lr)->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--refit-steps", f.max_steps, "Hyper-step budget per refit")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--refit-tol", f.rel_tol, "Relative objective improvement that stops a refit")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

RefitOptions to_refit(const RefitFlags& f) { return {f.lr, f.max_steps, f.rel_tol}; }

nlohmann::json snapshot_info(const WiskiModel& model) {
  nlohmann::json j;
  j["format_version"] = kSnapshotVersion;
  j["kernel"] = to_string(model.spec().family);
  j["noise_mode"] = model.noise_mode() == NoiseMode::kFixed ? "fixed" : "homoscedastic";
  j["n"] = model.n();
  j["m"] = model.grid().size();
  j["rank"] = model.rank();
  nlohmann::json grid = nlohmann::json::array();
  for (int k = 0; k < model.grid().dims(); ++k) {
    grid.push_back({{"lower", model.grid().bounds()[static_cast<std::size_t>(k)].lower},
                    {"upper", model.grid().bounds()[static_cast<std::size_t>(k)].upper},
                    {"size", model.grid().size(k)}});
  }
  j["grid"] = grid;
  const KernelParams& p = model.params();
  std::vector<double> ls;
  for (Eigen::Index k = 0; k < p.log_lengthscales.size(); ++k) ls.push_back(std::exp(p.log_lengthscales[k]));
  j["lengthscales"] = ls;
  j["outputscale"] = std::exp(p.log_outputscale);
  j["noise"] = std::exp(p.log_noise);
  j["target_offset"] = model.target_offset();
  j["target_scale"] = model.target_scale();
  j["input_dims"] = model.input_dims();
  j["projection"] = model.projection().has_value();
  return j;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming Gaussian process regression, classification and decision loops", "wiski"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "wiski 0.1.0 (metrics schema 1, snapshot format " +
                                        std::to_string(kSnapshotVersion) + ")");
  std::string log_level = "warning";
  app.add_option("--log-level", log_level)
      ->check(CLI::IsMember({"debug", "info", "warning", "error", "off"}))
      ->capture_default_str();
  std::uint64_t seed = 0;
  std::string out_path;

  // stream-regress
  auto* reg = app.add_subcommand("stream-regress", "Pretrain, then stream regression data one row at a time");
  DataFlags reg_data;
  ModelFlags reg_model;
  StreamFlags reg_stream;
  std::string reg_snapshot;
  reg->add_option("--seed", seed, "RNG seed")->required();
  add_data_flags(reg, reg_data, {"sine", "linear"});
  reg->add_option("--noise-sd", reg_data.noise_sd, "Noise for --synthetic sine")->capture_default_str();
  reg->add_option("--dims", reg_data.dims, "Inputs for --synthetic linear")->check(CLI::PositiveNumber);
  add_model_flags(reg, reg_model);
  add_stream_flags(reg, reg_stream);
  reg->add_option("--save-snapshot", reg_snapshot, "Write the final WISKI model here");
  reg->add_option("--out", out_path, "Metrics CSV (default: stdout)");

  // stream-classify
  auto* cls = app.add_subcommand("stream-classify", "Dirichlet classification over a label stream");
  DataFlags cls_data;
  cls_data.n = 400;
  ModelFlags cls_model;
  StreamFlags cls_stream;
  int classes = 0;
  cls->add_option("--seed", seed, "RNG seed")->required();
  add_data_flags(cls, cls_data, {"banana", "blobs"});
  cls->add_option("--classes", classes, "Number of classes; 0 infers max label + 1")->check(CLI::NonNegativeNumber);
  add_model_flags(cls, cls_model);
  add_stream_flags(cls, cls_stream);
  cls->add_option("--out", out_path, "Metrics CSV (default: stdout)");

  // bayes-opt
  auto* bo = app.add_subcommand("bayes-opt", "Batch UCB Bayesian optimization on a test objective");
  std::string objective = "levy3";
  double bo_noise = -1.0;
  BayesOptConfig bo_cfg;
  ModelFlags bo_model;
  RefitFlags bo_refit;
  int bo_trials = 1;
  bo->add_option("--seed", seed, "RNG seed (first trial)")->required();
  bo->add_option("--objective", objective)->check(CLI::IsMember({"levy3", "ackley3", "sine1d"}))->capture_default_str();
  bo->add_option("--noise-sd", bo_noise, "Observation noise; negative uses the objective's default");
  bo->add_option("--iterations", bo_cfg.iterations)->check(CLI::NonNegativeNumber)->capture_default_str();
  bo->add_option("--q", bo_cfg.q, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  bo->add_option("--initial", bo_cfg.initial_points)->check(CLI::Range(2, 1000000))->capture_default_str();
  bo->add_option("--pool", bo_cfg.pool_size, "Random candidates per iteration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bo->add_option("--beta", bo_cfg.beta, "UCB exploration weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  bo->add_option("--trials", bo_trials, "Independent seeds seed..seed+trials-1")->check(CLI::PositiveNumber);
  bo_model.m = 512;
  add_model_flags(bo, bo_model);
  add_refit_flags(bo, bo_refit);
  bo->add_option("--out", out_path, "Trace CSV (default: stdout)");

  // active-learn
  auto* al = app.add_subcommand("active-learn", "NIPV or random acquisition on a synthetic 2-D field");
  std::string strategy = "nipv";
  ActiveLearningConfig al_cfg;
  ModelFlags al_model;
  al_model.kernel = "matern12";
  al_model.m = 900;
  RefitFlags al_refit;
  int field_res = 64;
  double field_lengthscale = 0.3;
  double field_noise = 0.1;
  int al_trials = 1;
  al->add_option("--seed", seed, "RNG seed (first trial)")->required();
  al->add_option("--strategy", strategy)->check(CLI::IsMember({"nipv", "random"}))->capture_default_str();
  al->add_option("--rounds", al_cfg.rounds)->check(CLI::NonNegativeNumber)->capture_default_str();
  al->add_option("--q", al_cfg.q, "Acquisitions per round")->check(CLI::PositiveNumber)->capture_default_str();
  al->add_option("--initial", al_cfg.initial_points)->check(CLI::Range(2, 1000000))->capture_default_str();
  al->add_option("--pool", al_cfg.pool_size)->check(CLI::PositiveNumber)->capture_default_str();
  al->add_option("--test", al_cfg.test_size, "Test points for RMSE and the NIPV average")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  al->add_option("--field-res", field_res, "Lattice resolution of the random field")
      ->check(CLI::Range(2, 512))
      ->capture_default_str();
  al->add_option("--field-lengthscale", field_lengthscale)->check(CLI::PositiveNumber)->capture_default_str();
  al->add_option("--noise-sd", field_noise, "Typical observation noise")->check(CLI::NonNegativeNumber)->capture_default_str();
  al->add_option("--trials", al_trials)->check(CLI::PositiveNumber);
  add_model_flags(al, al_model);
  add_refit_flags(al, al_refit);
  al->add_option("--out", out_path, "Trace CSV (default: stdout)");

  // bench-timing
  auto* bt = app.add_subcommand("bench-timing", "Per-update wall time on a synthetic stream");
  TimingConfig bt_cfg;
  ModelFlags bt_model;
  bt->add_option("--seed", seed, "RNG seed")->required();
  bt->add_option("--n", bt_cfg.n_max, "Stream length")->check(CLI::PositiveNumber)->capture_default_str();
  bt->add_option("--dims", bt_cfg.dims)->check(CLI::PositiveNumber)->capture_default_str();
  bt->add_option("--checkpoints", bt_cfg.checkpoints, "Window centers; empty times every step")->delimiter(',');
  bt->add_option("--window", bt_cfg.window, "Timed steps per checkpoint")->check(CLI::PositiveNumber)->capture_default_str();
  bt->add_option("--lr", bt_cfg.lr)->check(CLI::PositiveNumber)->capture_default_str();
  add_model_flags(bt, bt_model);
  bt->add_option("--out", out_path, "Timing CSV (default: stdout)");

  // snapshot
  auto* snap = app.add_subcommand("snapshot", "Inspect or query a saved model");
  snap->require_subcommand(1);
  std::string snap_path;
  auto* info = snap->add_subcommand("info", "Print model metadata as JSON");
  info->add_option("file", snap_path, "Snapshot file")->required();
  auto* pred = snap->add_subcommand("predict", "Predict at the rows of a feature CSV");
  std::string points_path;
  pred->add_option("file", snap_path, "Snapshot file")->required();
  pred->add_option("--points", points_path, "CSV with a header; every column is a feature")->required();
  pred->add_option("--out", out_path, "Predictions CSV (default: stdout)");

  std::vector<std::string> args;
  try {
    args = merge_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    CLI::App* active = &app;
    for (auto* sub : app.get_subcommands()) active = sub;
    err << active->help("", CLI::AppFormatMode::Normal);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingFileError& e) {
    err << "error: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  }

  try {
    if (log_level == "debug") set_log_level(LogLevel::kDebug);
    if (log_level == "info") set_log_level(LogLevel::kInfo);
    if (log_level == "warning") set_log_level(LogLevel::kWarning);
    if (log_level == "error") set_log_level(LogLevel::kError);
    if (log_level == "off") set_log_level(LogLevel::kOff);

    if (reg->parsed()) {
      if (!reg_snapshot.empty() && reg_model.model != "wiski") throw UsageError("--save-snapshot needs --model wiski");
      const Dataset raw = load_data(reg_data, seed, *reg);
      PrepareOptions prep;
      prep.test_fraction = reg_data.test_fraction;
      prep.pretrain_fraction = reg_data.pretrain_fraction;
      const PreparedData data = prepare_dataset(raw, seed, prep);
      const SurrogateConfig cfg = make_config(reg_model, static_cast<int>(raw.X.cols()), NoiseMode::kHomoscedastic);
      const StreamResult r = stream_regression(cfg, data, to_stream_config(reg_stream, seed));
      Output o(out_path, out);
      *o << "step,elapsed_ms,rmse,nll";
      write_param_header(*o, cfg.spec.dims);
      for (const auto& row : r.rows) {
        *o << row.step << ',' << num(row.elapsed_ms) << ',' << num(row.rmse) << ',' << num(row.nll);
        write_params(*o, row.params);
      }
      err << "final_rmse=" << num(r.final_rmse) << " final_nll=" << num(r.final_nll) << '\n';
      if (!reg_snapshot.empty()) save_snapshot(*r.final_model->wiski_model(), reg_snapshot);
    } else if (cls->parsed()) {
      const Dataset raw = load_data(cls_data, seed, *cls);
      int num_classes = classes;
      if (num_classes == 0) num_classes = static_cast<int>(std::lround(raw.y.maxCoeff())) + 1;
      if (num_classes < 1) throw InvalidArgument("labels must be non-negative integers");
      PrepareOptions prep;
      prep.test_fraction = cls_data.test_fraction;
      prep.pretrain_fraction = cls_data.pretrain_fraction;
      prep.standardize_targets = false;
      const PreparedData data = prepare_dataset(raw, seed, prep);
      const SurrogateConfig cfg = make_config(cls_model, static_cast<int>(raw.X.cols()), NoiseMode::kFixed);
      const StreamResult r = stream_classification(cfg, num_classes, data, to_stream_config(cls_stream, seed));
      Output o(out_path, out);
      *o << "step,elapsed_ms,accuracy";
      write_param_header(*o, cfg.spec.dims);
      for (const auto& row : r.rows) {
        *o << row.step << ',' << num(row.elapsed_ms) << ',' << num(row.accuracy);
        write_params(*o, row.params);
      }
      err << "final_accuracy=" << num(r.final_accuracy) << '\n';
    } else if (bo->parsed()) {
      if (bo_cfg.q > bo_cfg.pool_size) throw InvalidArgument("--q must not exceed --pool");
      const TestObjective obj = make_objective(objective, bo_noise);
      const SurrogateConfig cfg = make_config(bo_model, obj.dims, NoiseMode::kHomoscedastic);
      bo_cfg.refit = to_refit(bo_refit);
      const std::string body = run_trials(seed, bo_trials, [&](std::uint64_t s) {
        BayesOptConfig c = bo_cfg;
        c.seed = s;
        const BayesOptTrace t = bayes_opt_loop(obj, cfg, c);
        std::ostringstream os;
        for (std::size_t i = 0; i < t.best_value.size(); ++i) {
          if (bo_trials > 1) os << s << ',';
          os << i + 1 << ',' << num(t.elapsed_ms[i]) << ',' << num(t.best_value[i]) << '\n';
        }
        return os.str();
      });
      Output o(out_path, out);
      *o << (bo_trials > 1 ? "seed," : "") << "iteration,elapsed_ms,best_value\n" << body;
    } else if (al->parsed()) {
      al_cfg.strategy = strategy == "nipv" ? ActiveStrategy::kNipv : ActiveStrategy::kRandom;
      al_cfg.refit = to_refit(al_refit);
      const SurrogateConfig cfg = make_config(al_model, 2, NoiseMode::kFixed);
      const std::string body = run_trials(seed, al_trials, [&](std::uint64_t s) {
        ActiveLearningConfig c = al_cfg;
        c.seed = s;
        const FieldTask field = make_field(field_res, field_lengthscale, field_noise, s);
        const ActiveLearningTrace t = active_learning_loop(field, cfg, c);
        std::ostringstream os;
        for (std::size_t i = 0; i < t.rmse.size(); ++i) {
          if (al_trials > 1) os << s << ',';
          os << t.acquired[i] << ',' << num(t.elapsed_ms[i]) << ',' << num(t.rmse[i]) << '\n';
        }
        return os.str();
      });
      Output o(out_path, out);
      *o << (al_trials > 1 ? "seed," : "") << "acquired,elapsed_ms,rmse\n" << body;
    } else if (bt->parsed()) {
      bt_cfg.m = bt_model.m;
      bt_cfg.seed = seed;
      SurrogateConfig cfg = make_config(bt_model, bt_cfg.dims, NoiseMode::kHomoscedastic);
      if (bt_model.grid_size == 0) cfg.grid = grid_for_total(bt_cfg.dims, bt_model.m);
      const TimingSummary s = bench_timing(cfg, bt_cfg);
      Output o(out_path, out);
      *o << "step,elapsed_ms,rmse,nll\n";
      for (const auto& row : s.rows) {
        *o << row.step << ',' << num(row.elapsed_ms) << ',' << num(row.rmse) << ',' << num(row.nll) << '\n';
      }
      for (std::size_t i = 0; i < s.checkpoint_n.size(); ++i) {
        err << "median_ms[n=" << s.checkpoint_n[i] << "]=" << num(s.checkpoint_median_ms[i]) << '\n';
      }
      err << "log_log_slope=" << num(s.log_log_slope) << '\n';
    } else if (info->parsed()) {
      require_file(snap_path);
      out << snapshot_info(load_snapshot(std::filesystem::path(snap_path))).dump(2) << '\n';
    } else if (pred->parsed()) {
      require_file(snap_path);
      require_file(points_path);
      const WiskiModel model = load_snapshot(std::filesystem::path(snap_path));
      const Eigen::MatrixXd X = read_csv_matrix(points_path);
      require_dims(X.cols() == model.input_dims(), "points have " + std::to_string(X.cols()) +
                                                       " columns, the model expects " +
                                                       std::to_string(model.input_dims()));
      model.prepare();
      Output o(out_path, out);
      *o << "mean,variance,noise\n";
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const PosteriorGaussian p = model.predict(X.row(i).transpose());
        *o << num(p.mean) << ',' << num(p.variance) << ',' << num(p.noise) << '\n';
      }
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingFileError& e) {
    err << "error: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace wiski::cli
