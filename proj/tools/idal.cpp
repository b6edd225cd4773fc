// idal: data generation, training, evaluation, gradient checking and
// ablation sweeps for the IDAL domain-adaptation pipeline.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "idal/data.hpp"
#include "idal/errors.hpp"
#include "idal/losses.hpp"
#include "idal/tensor.hpp"
#include "idal/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

// ---------------------------------------------------------------------------
// Shared training flag plumbing. Precedence: flags > config file > preset >
// defaults; the fully resolved config is echoed before any work happens.
// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string source_path;
  std::string target_path;
  std::string out_dir;
  std::string preset;
  std::string config_file;
  std::uint64_t seed = 0;
  long long epochs = -1;  // -1 means "not set on the command line"
  std::size_t batch_size = 0;
  double lr = -1.0;
  double wd = -1.0;
  double lambda = -1.0;
  double beta = -1.0;
  double gamma = -1.0;
  double delta = -1.0;
  double eta = -1.0;
  double tau = -1.0;
  long long warmup_epochs = -1;
  std::string conditioning;
  bool dry_run = false;

  CLI::Option* seed_opt = nullptr;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool require_data) {
  auto* src = cmd->add_option("--source", f.source_path, "source domain CSV");
  auto* tgt = cmd->add_option("--target", f.target_path, "target domain CSV");
  auto* out = cmd->add_option("--out", f.out_dir, "output directory");
  if (require_data) {
    src->required();
    tgt->required();
    out->required();
  }
  cmd->add_option("--preset", f.preset, "hyperparameter preset")
      ->check(CLI::IsMember({"desk-default", "office31", "officehome", "visda",
                             "domainnet"}));
  cmd->add_option("--config", f.config_file, "JSON config file");
  f.seed_opt = cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--epochs", f.epochs, "training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", f.batch_size, "batch size");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--wd", f.wd, "weight decay");
  cmd->add_option("--lambda", f.lambda, "adversarial weight lambda");
  cmd->add_option("--beta", f.beta, "IM loss weight");
  cmd->add_option("--gamma", f.gamma, "MCC loss weight");
  cmd->add_option("--delta", f.delta, "MMD loss weight");
  cmd->add_option("--eta", f.eta, "PLMMD loss weight");
  cmd->add_option("--tau", f.tau, "pseudo-label confidence threshold");
  cmd->add_option("--warmup-epochs", f.warmup_epochs, "pseudo-label warmup epochs");
  cmd->add_option("--conditioning", f.conditioning, "discriminator conditioning")
      ->check(CLI::IsMember({"concat", "multilinear", "randomized"}));
  cmd->add_flag("--dry-run", f.dry_run, "echo resolved config and exit");
}

void apply_config_file(idal::TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw idal::IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw idal::ConfigError("config file " + path + ": " + e.what());
  }
  static const std::set<std::string> known = {
      "seed",  "epochs", "batch_size", "lr",  "wd",  "lambda",        "beta",
      "gamma", "delta",  "eta",        "tau", "warmup_epochs", "conditioning"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key))
      throw idal::ConfigError("config file " + path + ": unknown key \"" + key + "\"");
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("lr")) cfg.learning_rate = j["lr"].get<double>();
  if (j.contains("wd")) cfg.weight_decay = j["wd"].get<double>();
  if (j.contains("lambda")) cfg.weights.lambda_adv = j["lambda"].get<double>();
  if (j.contains("beta")) cfg.weights.beta = j["beta"].get<double>();
  if (j.contains("gamma")) cfg.weights.gamma = j["gamma"].get<double>();
  if (j.contains("delta")) cfg.weights.delta = j["delta"].get<double>();
  if (j.contains("eta")) cfg.weights.eta = j["eta"].get<double>();
  if (j.contains("tau")) cfg.pseudo_confidence = j["tau"].get<double>();
  if (j.contains("warmup_epochs"))
    cfg.pseudo_warmup_epochs = j["warmup_epochs"].get<std::size_t>();
  if (j.contains("conditioning"))
    cfg.conditioning = idal::conditioning_from_string(j["conditioning"].get<std::string>());
}

// Returns the resolved config plus the epoch count requested on the command
// line (which may be 0, below the TrainConfig invariant).
std::pair<idal::TrainConfig, std::size_t> resolve_config(const TrainFlags& f) {
  idal::TrainConfig cfg =
      f.preset.empty() ? idal::preset_config("desk-default") : idal::preset_config(f.preset);
  if (!f.config_file.empty()) apply_config_file(cfg, f.config_file);
  if (f.seed_opt && f.seed_opt->count() > 0) cfg.seed = f.seed;
  std::size_t epochs = cfg.epochs;
  if (f.epochs >= 0) epochs = static_cast<std::size_t>(f.epochs);
  cfg.epochs = std::max<std::size_t>(epochs, 1);
  if (f.batch_size > 0) cfg.batch_size = f.batch_size;
  if (f.lr >= 0.0) cfg.learning_rate = f.lr;
  if (f.wd >= 0.0) cfg.weight_decay = f.wd;
  if (f.lambda >= 0.0) cfg.weights.lambda_adv = f.lambda;
  if (f.beta >= 0.0) cfg.weights.beta = f.beta;
  if (f.gamma >= 0.0) cfg.weights.gamma = f.gamma;
  if (f.delta >= 0.0) cfg.weights.delta = f.delta;
  if (f.eta >= 0.0) cfg.weights.eta = f.eta;
  if (f.tau >= 0.0) cfg.pseudo_confidence = f.tau;
  if (f.warmup_epochs >= 0)
    cfg.pseudo_warmup_epochs = static_cast<std::size_t>(f.warmup_epochs);
  if (!f.conditioning.empty())
    cfg.conditioning = idal::conditioning_from_string(f.conditioning);
  cfg.validate();
  return {cfg, epochs};
}

ordered_json config_json(const idal::TrainConfig& cfg, std::size_t epochs,
                         const TrainFlags& f) {
  ordered_json j;
  j["preset"] = f.preset.empty() ? "desk-default" : f.preset;
  j["seed"] = cfg.seed;
  j["epochs"] = epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.learning_rate;
  j["wd"] = cfg.weight_decay;
  j["lambda"] = cfg.weights.lambda_adv;
  j["beta"] = cfg.weights.beta;
  j["gamma"] = cfg.weights.gamma;
  j["delta"] = cfg.weights.delta;
  j["eta"] = cfg.weights.eta;
  j["tau"] = cfg.pseudo_confidence;
  j["warmup_epochs"] = cfg.pseudo_warmup_epochs;
  j["conditioning"] =
      cfg.conditioning ? idal::to_string(*cfg.conditioning) : std::string("auto");
  j["mcc_temperature"] = cfg.mcc_temperature;
  j["stage_widths"] = cfg.stage_widths;
  j["feature_dim"] = cfg.feature_dim;
  j["disc_hidden"] = cfg.disc_hidden;
  j["randomized_dim"] = cfg.randomized_dim;
  j["source"] = f.source_path;
  j["target"] = f.target_path;
  j["out"] = f.out_dir;
  return j;
}

// Echo to stdout, and into the output dir when one is given.
void echo_config(const ordered_json& j, const std::string& out_dir) {
  std::cout << j.dump(2) << "\n";
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "resolved_config.json");
  if (!out) throw idal::IoError("cannot write resolved config in " + out_dir);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const idal::ShiftSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);

  ordered_json echo;
  echo["command"] = "gen-data";
  echo["k"] = spec.num_classes;
  echo["d"] = spec.dim;
  echo["n_source"] = spec.n_source;
  echo["n_target"] = spec.n_target;
  echo["separation"] = spec.class_separation;
  echo["rotation"] = spec.rotation_angle;
  echo["scale"] = spec.scale_factor;
  echo["offset"] = spec.style_offset_magnitude;
  echo["noise_source"] = spec.noise_sigma_source;
  echo["noise_target"] = spec.noise_sigma_target;
  echo["seed"] = spec.seed;
  echo["out"] = out_dir;
  echo_config(echo, out_dir);

  idal::ShiftPair pair = idal::generate_shift_pair(spec);
  idal::save_csv(pair.source, (fs::path(out_dir) / "source.csv").string());
  idal::save_csv(pair.target, (fs::path(out_dir) / "target.csv").string());

  ordered_json spec_echo = echo;
  spec_echo.erase("command");
  spec_echo.erase("out");
  spec_echo["fingerprint"] = spec.fingerprint();
  spec_echo["style_offset"] = pair.style_offset;
  std::ofstream sf(fs::path(out_dir) / "spec.json");
  if (!sf) throw idal::IoError("cannot write spec.json in " + out_dir);
  sf << spec_echo.dump(2) << "\n";

  std::cout << "wrote " << out_dir << "/source.csv (" << pair.source.n << " rows), "
            << out_dir << "/target.csv (" << pair.target.n << " rows)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const TrainFlags& flags) {
  auto [cfg, epochs] = resolve_config(flags);
  ordered_json echo = config_json(cfg, epochs, flags);
  echo["command"] = "train";
  if (flags.dry_run) {
    std::cout << echo.dump(2) << "\n";
    return kExitOk;
  }
  if (flags.source_path.empty() || flags.target_path.empty() || flags.out_dir.empty()) {
    throw idal::ConfigError("train requires --source, --target and --out");
  }
  echo_config(echo, flags.out_dir);

  idal::Dataset source = idal::load_csv(flags.source_path);
  idal::Dataset target = idal::load_csv(flags.target_path);
  idal::Trainer trainer(std::move(source), std::move(target), cfg);

  const fs::path out(flags.out_dir);
  std::ofstream metrics(out / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw idal::IoError("cannot write metrics in " + flags.out_dir);

  idal::MetricsRecord last;
  try {
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      last = trainer.run_epoch();
      metrics << last.to_json().dump() << "\n";
      metrics.flush();
      std::cout << "epoch " << last.epoch << " clc " << last.loss_clc << " target_acc "
                << last.target_accuracy << " source_acc " << last.source_accuracy
                << " lambda " << last.lambda_eff << "\n";
    }
  } catch (const idal::NumericError& e) {
    ordered_json dump;
    dump["error"] = e.what();
    dump["epochs_completed"] = trainer.epochs_completed();
    dump["last_record"] = last.to_json();
    const fs::path dump_path = out / "failure_dump.json";
    std::ofstream df(dump_path);
    df << dump.dump(2) << "\n";
    std::cerr << "numeric failure; per-term dump written to " << dump_path << "\n";
    throw;
  }

  idal::save_checkpoint(trainer, (out / "checkpoint").string());
  idal::dump_embeddings(trainer.models(), {&trainer.source(), &trainer.target()},
                        (out / "embeddings.csv").string());

  const idal::EvalResult final_eval =
      epochs > 0 ? idal::EvalResult{last.target_accuracy, last.per_class_target_accuracy}
                 : idal::evaluate(trainer.models(), trainer.target());
  std::cout << "final_target_accuracy " << final_eval.accuracy << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint_dir, const std::string& source_path,
             const std::string& target_path, const std::string& out_dir) {
  idal::CheckpointInfo info = idal::read_checkpoint_info(checkpoint_dir);

  idal::TrainConfig cfg;
  cfg.seed = info.seed;
  cfg.feature_dim = info.feature_dim;
  cfg.stage_widths = info.stage_widths;
  cfg.disc_hidden = info.disc_hidden;
  cfg.randomized_dim = info.randomized_dim;
  cfg.conditioning = idal::conditioning_from_string(info.conditioning);

  idal::Dataset source = idal::load_csv(source_path);
  idal::Dataset target = idal::load_csv(target_path);
  if (source.dim != info.input_dim || source.num_classes != info.num_classes) {
    throw idal::IoError("eval: checkpoint expects d=" + std::to_string(info.input_dim) +
                        ", k=" + std::to_string(info.num_classes) + "; data has d=" +
                        std::to_string(source.dim) + ", k=" +
                        std::to_string(source.num_classes));
  }

  idal::Trainer trainer(std::move(source), std::move(target), cfg);
  idal::restore_checkpoint(trainer, checkpoint_dir);

  idal::EvalResult src = idal::evaluate(trainer.models(), trainer.source());
  idal::EvalResult tgt = idal::evaluate(trainer.models(), trainer.target());
  const double pad = idal::proxy_a_distance(trainer.discriminator_accuracy());

  ordered_json report;
  report["checkpoint"] = checkpoint_dir;
  report["epochs_completed"] = trainer.epochs_completed();
  report["source_accuracy"] = src.accuracy;
  report["target_accuracy"] = tgt.accuracy;
  report["per_class_target_accuracy"] = tgt.per_class_accuracy;
  report["proxy_a_distance"] = pad;
  std::cout << report.dump(2) << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream rf(fs::path(out_dir) / "report.json");
    if (!rf) throw idal::IoError("cannot write report in " + out_dir);
    rf << report.dump(2) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, const std::string& only) {
  constexpr std::size_t b = 8, d = 6, k = 4;
  constexpr double tol = 1e-5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  auto rand_tensor = [&](idal::Shape shape) {
    std::vector<double> v(idal::shape_numel(shape));
    for (double& x : v) x = dist(rng);
    return idal::Tensor(std::move(shape), std::move(v));
  };

  // Median bandwidths move under finite differences, so the kernel checks pin
  // them; the gradient treats bandwidths as constants either way.
  idal::KernelSpec kernel;
  kernel.mode = idal::BandwidthMode::kFixed;
  kernel.fixed_bandwidth = 1.0;
  kernel.multipliers = {0.5, 1.0, 2.0};

  std::vector<int> labels(b);
  for (std::size_t i = 0; i < b; ++i) labels[i] = static_cast<int>(i % k);
  const idal::Tensor onehot = idal::detail::one_hot(labels, k);

  idal::Tensor logits = rand_tensor({b, k});
  idal::Tensor scores_s = rand_tensor({b, 1});
  idal::Tensor scores_t = rand_tensor({b, 1});
  idal::Tensor f_s = rand_tensor({b, d});
  idal::Tensor f_t = rand_tensor({b, d});
  const idal::PlmmdWeights plw = idal::plmmd_weights(onehot, onehot);

  std::vector<std::pair<std::string, std::function<double()>>> checks;
  checks.emplace_back("clc", [&]() {
    return idal::grad_check(
        [&](const idal::Tensor& t) { return idal::cross_entropy(t, labels); }, logits);
  });
  checks.emplace_back("dis", [&]() {
    const double a = idal::grad_check(
        [&](const idal::Tensor& t) {
          return idal::discriminator_bce(idal::sigmoid(t), idal::sigmoid(scores_t));
        },
        scores_s);
    const double bb = idal::grad_check(
        [&](const idal::Tensor& t) {
          return idal::discriminator_bce(idal::sigmoid(scores_s), idal::sigmoid(t));
        },
        scores_t);
    return std::max(a, bb);
  });
  checks.emplace_back("im", [&]() {
    return idal::grad_check(
        [](const idal::Tensor& t) { return idal::info_max_loss(idal::softmax_rows(t)); },
        logits);
  });
  checks.emplace_back("mcc", [&]() {
    return idal::grad_check(
        [](const idal::Tensor& t) { return idal::mcc_loss(t, 2.5); }, logits);
  });
  checks.emplace_back("mmd", [&]() {
    return idal::grad_check(
        [&](const idal::Tensor& t) { return idal::mmd_loss(t, f_t, kernel); }, f_s);
  });
  checks.emplace_back("plmmd", [&]() {
    return idal::grad_check(
        [&](const idal::Tensor& t) { return idal::plmmd_loss(t, f_t, plw, kernel); },
        f_s);
  });

  bool all_pass = true;
  bool matched = false;
  std::printf("%-8s %14s  %s\n", "loss", "max_rel_error", "status");
  for (const auto& [name, run] : checks) {
    if (!only.empty() && name != only) continue;
    matched = true;
    const double err = run();
    const bool pass = err < tol;
    all_pass = all_pass && pass;
    std::printf("%-8s %14.3e  %s\n", name.c_str(), err, pass ? "pass" : "FAIL");
  }
  if (!matched) throw idal::ConfigError("gradcheck: unknown loss '" + only + "'");
  return all_pass ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  idal::LossWeights weights;
};

std::size_t thread_budget() {
  std::size_t budget = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("IDAL_NUM_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed < 1) throw idal::ConfigError("IDAL_NUM_THREADS must be >= 1");
    budget = static_cast<std::size_t>(parsed);
  }
  return budget;
}

int cmd_ablate(const TrainFlags& flags, std::size_t num_seeds) {
  auto [cfg, epochs] = resolve_config(flags);
  ordered_json echo = config_json(cfg, epochs, flags);
  echo["command"] = "ablate";
  echo["seeds"] = num_seeds;
  if (flags.dry_run) {
    std::cout << echo.dump(2) << "\n";
    return kExitOk;
  }
  echo_config(echo, flags.out_dir);

  const idal::Dataset source = idal::load_csv(flags.source_path);
  const idal::Dataset target = idal::load_csv(flags.target_path);

  // Ladder from {clc, dis} upward; beta rides along at its configured value.
  const idal::LossWeights full = cfg.weights;
  std::vector<AblationRow> rows = {
      {"clc+dis", {full.lambda_adv, full.beta, 0.0, 0.0, 0.0}},
      {"+mmd", {full.lambda_adv, full.beta, 0.0, full.delta, 0.0}},
      {"+mcc", {full.lambda_adv, full.beta, full.gamma, full.delta, 0.0}},
      {"full", full},
  };

  std::vector<std::vector<double>> accuracy(rows.size(),
                                            std::vector<double>(num_seeds, 0.0));
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t s = 0; s < num_seeds; ++s) tasks.emplace_back(r, s);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const auto [r, s] = tasks[t];
      try {
        idal::TrainConfig run_cfg = cfg;
        run_cfg.epochs = std::max<std::size_t>(epochs, 1);
        run_cfg.weights = rows[r].weights;
        run_cfg.seed = cfg.seed + s;
        idal::Trainer trainer(source, target, run_cfg);
        const auto records = trainer.run();
        accuracy[r][s] = records.back().target_accuracy;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  const std::size_t n_threads = std::min(thread_budget(), tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);

  ordered_json table = ordered_json::array();
  std::printf("%-10s %8s %8s\n", "row", "mean", "sd");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double mean = 0.0;
    for (double a : accuracy[r]) mean += a;
    mean /= static_cast<double>(num_seeds);
    double var = 0.0;
    for (double a : accuracy[r]) var += (a - mean) * (a - mean);
    const double sd =
        num_seeds > 1 ? std::sqrt(var / static_cast<double>(num_seeds - 1)) : 0.0;

    ordered_json row;
    row["row"] = rows[r].name;
    row["lambda"] = rows[r].weights.lambda_adv;
    row["beta"] = rows[r].weights.beta;
    row["gamma"] = rows[r].weights.gamma;
    row["delta"] = rows[r].weights.delta;
    row["eta"] = rows[r].weights.eta;
    row["target_accuracy"] = accuracy[r];
    row["mean"] = mean;
    row["sd"] = sd;
    table.push_back(std::move(row));
    std::printf("%-10s %8.4f %8.4f\n", rows[r].name.c_str(), mean, sd);
  }

  if (!flags.out_dir.empty()) {
    std::ofstream jf(fs::path(flags.out_dir) / "ablation.json");
    if (!jf) throw idal::IoError("cannot write ablation.json in " + flags.out_dir);
    jf << table.dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IDAL domain adaptation toolkit"};
  app.require_subcommand(1);

  // gen-data
  idal::ShiftSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic shift pair");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--k", spec.num_classes, "number of classes");
  gen->add_option("--d", spec.dim, "feature dimension");
  gen->add_option("--n-source", spec.n_source, "source sample count");
  gen->add_option("--n-target", spec.n_target, "target sample count");
  gen->add_option("--separation", spec.class_separation, "class center separation");
  gen->add_option("--rotation", spec.rotation_angle, "target rotation (radians)");
  gen->add_option("--scale", spec.scale_factor, "target scale factor");
  gen->add_option("--offset", spec.style_offset_magnitude, "target style offset");
  gen->add_option("--noise-source", spec.noise_sigma_source, "source noise sigma");
  gen->add_option("--noise-target", spec.noise_sigma_target, "target noise sigma");
  gen->add_option("--seed", spec.seed, "RNG seed");

  // train
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train on a source/target pair");
  add_train_flags(train, train_flags, /*require_data=*/false);

  // eval
  std::string eval_ckpt, eval_source, eval_target, eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--source", eval_source, "source domain CSV")->required();
  eval->add_option("--target", eval_target, "target domain CSV")->required();
  eval->add_option("--out", eval_out, "report output directory");

  // gradcheck
  std::uint64_t gc_seed = 0;
  std::string gc_loss;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference loss checks");
  gradcheck->add_option("--seed", gc_seed, "RNG seed for the random batches");
  gradcheck->add_option("--loss", gc_loss, "check a single loss")
      ->check(CLI::IsMember({"clc", "dis", "im", "mcc", "mmd", "plmmd"}));

  // ablate
  TrainFlags ablate_flags;
  std::size_t ablate_seeds = 5;
  auto* ablate = app.add_subcommand("ablate", "loss-combination ladder over seeds");
  add_train_flags(ablate, ablate_flags, /*require_data=*/true);
  ablate->add_option("--seeds", ablate_seeds, "number of seeds per row")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(spec, gen_out);
    if (train->parsed()) return cmd_train(train_flags);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_source, eval_target, eval_out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_loss);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, ablate_seeds);
  } catch (const idal::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const idal::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const idal::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
