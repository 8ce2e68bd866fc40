#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rotla/bench.hpp"
#include "rotla/checkpoint.hpp"
#include "rotla/config.hpp"
#include "rotla/posenc.hpp"
#include "rotla/spectral.hpp"
#include "rotla/tasks.hpp"
#include "rotla/training.hpp"
#include "rotla/verify.hpp"

namespace fs = std::filesystem;
using namespace rotla;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

int cmd_verify(const std::string& suite, const std::string& out_dir, double corrupt_angles) {
  debug::angle_corruption = corrupt_angles;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  std::vector<verify::SuiteReport> reports;
  try {
    reports = verify::run_suites(suite, out_dir);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::cout << verify::summary_lines(reports);
  const std::string json = verify::to_json(reports);
  if (!out_dir.empty()) {
    std::ofstream f(out_dir + "/verify-" + suite + ".json");
    f << json << "\n";
    std::cout << "report written to " << out_dir << "/verify-" << suite << ".json\n";
  }
  bool pass = true;
  for (const auto& r : reports) pass = pass && r.pass();
  return pass ? kExitOk : kExitCheckFailed;
}

int cmd_train(const std::string& config_path, const std::string& out_dir_override,
              std::uint64_t seed_override, const std::string& precision_override, bool dry_run) {
  config::ExperimentConfig cfg;
  try {
    cfg = config::load_config_file(config_path);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  if (seed_override != 0) cfg.root_seed = seed_override;
  if (!precision_override.empty()) {
    cfg.precision = precision_override == "f32" ? ad::Precision::f32 : ad::Precision::f64;
    cfg.train.precision = cfg.precision;
  }

  if (dry_run) {
    std::cout << config::resolved_text(cfg);
    return kExitOk;
  }

  const fs::path run_dir = fs::path(cfg.out_dir) / cfg.run_id;
  fs::create_directories(run_dir);
  {
    std::ofstream f(run_dir / "config.resolved.cfg");
    f << config::resolved_text(cfg);
  }

  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["run_id"] = cfg.run_id;
  manifest["config_hash"] = config::config_hash(cfg);
  manifest["started"] = timestamp_now();
  manifest["artifacts"] = nlohmann::json::array();
  manifest["checks"] = nlohmann::json::object();

  std::ofstream metrics(run_dir / "metrics.csv");
  metrics << training::metrics_csv_header() << "\n";
  nlohmann::json summary;
  summary["schema_version"] = 1;
  summary["runs"] = nlohmann::json::array();

  bool any_diverged = false;
  const model::ModelConfig mcfg = cfg.resolved_model();
  for (std::uint64_t seed_entry : cfg.train.seeds) {
    const std::uint64_t seed = Rng(cfg.root_seed).substream(seed_entry).seed();
    const std::string run_tag = cfg.run_id + "-s" + std::to_string(seed_entry);
    std::cout << "training " << run_tag << " (" << cfg.train.steps << " steps)\n";
    training::TrainResult res;
    try {
      res = training::train(mcfg, cfg.task, cfg.train, seed, run_tag, &metrics);
    } catch (const ContractError& e) {
      std::cerr << "training aborted: " << e.what() << "\n";
      return kExitCheckFailed;
    }
    any_diverged = any_diverged || res.diverged;
    const std::string ckpt = (run_dir / ("checkpoint-s" + std::to_string(seed_entry) + ".bin")).string();
    checkpoint::save(ckpt, res.best_params, cfg.precision);
    manifest["artifacts"].push_back(ckpt);

    nlohmann::json jr;
    jr["seed"] = seed_entry;
    jr["best_val_accuracy"] = res.best_val_accuracy;
    jr["diverged"] = res.diverged;
    jr["stopped_at_step"] = res.stopped_at_step;
    for (const auto& rec : res.metrics)
      if (rec.step == res.metrics.back().step && rec.split != "train")
        jr["final"][std::to_string(rec.length)] = rec.accuracy;
    summary["runs"].push_back(std::move(jr));
  }
  metrics.close();

  {
    std::ofstream f(run_dir / "summary.json");
    f << summary.dump(2) << "\n";
  }
  manifest["artifacts"].push_back((run_dir / "metrics.csv").string());
  manifest["artifacts"].push_back((run_dir / "summary.json").string());
  manifest["checks"]["no_divergence"] = !any_diverged;
  manifest["finished"] = timestamp_now();
  {
    std::ofstream f(run_dir / "manifest.json");
    f << manifest.dump(2) << "\n";
  }
  std::cout << "run directory: " << run_dir.string() << "\n";
  return any_diverged ? kExitCheckFailed : kExitOk;
}

int cmd_bench(const std::string& mode_name, std::int64_t dim, std::int64_t reps, std::int64_t chunk,
              const std::vector<std::int64_t>& lens, const std::string& out_path) {
  std::vector<bench::Row> rows;
  std::ostringstream csv;
  csv << bench::csv_header() << "\n";
  bench::Mode mode;
  try {
    mode = bench::parse_mode(mode_name);
    for (std::int64_t T : lens) {
      bench::Row row = bench::run(mode, T, dim, reps, chunk);
      rows.push_back(row);
      csv << bench::to_csv_row(mode, dim, row) << "\n";
      std::cout << bench::to_csv_row(mode, dim, row) << "\n";
    }
  } catch (const ContractError& e) {
    std::cerr << "bench error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (rows.size() >= 2) std::cout << "# log-log slope: " << bench::loglog_slope(rows) << "\n";
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    f << csv.str();
  }
  return kExitOk;
}

int cmd_spectral(double tone, std::int64_t n_bins, double alpha, const std::string& out_path) {
  const std::int64_t N = n_bins;
  Tensor v({N});
  for (std::int64_t t = 0; t < N; ++t)
    v.at(t) = std::cos(2.0 * std::numbers::pi * tone * static_cast<double>(t) / static_cast<double>(N));
  std::ostringstream csv;
  csv << "window,bin,magnitude\n";
  const std::pair<spectral::Window, std::string> windows[] = {
      {{spectral::WindowKind::rectangular, N, 0.0}, "rectangular"},
      {{spectral::WindowKind::hann, N, 0.0}, "hann"},
      {{spectral::WindowKind::poisson, N, alpha}, "poisson"},
  };
  for (const auto& [w, name] : windows) {
    spectral::Spectrum s = spectral::windowed_dft(v, w);
    for (std::int64_t b = 0; b < N; ++b) csv << name << "," << b << "," << s.magnitudes.at(b) << "\n";
    auto [peak_err, side] = spectral::leakage_metrics(s, tone);
    csv << name << ":metrics," << peak_err << "," << side << "\n";
  }
  std::cout << csv.str();
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    f << csv.str();
  }
  return kExitOk;
}

int cmd_tasks_dump(const std::string& kind_name, std::int64_t n, std::int64_t len, std::uint64_t seed) {
  tasks::TaskSpec spec;
  try {
    if (kind_name == "parity")
      spec.kind = tasks::TaskKind::parity;
    else if (kind_name == "a3")
      spec.kind = tasks::TaskKind::a3;
    else if (kind_name == "mqar")
      spec.kind = tasks::TaskKind::mqar;
    else if (kind_name == "copy")
      spec.kind = tasks::TaskKind::copy;
    else
      contract_fail("unknown task kind \"" + kind_name + "\" (parity|a3|mqar|copy)");
    spec.train_min_len = spec.train_max_len = len;
    spec.eval_max_len = 4 * len;
    Rng rng(seed);
    for (std::int64_t i = 0; i < n; ++i) {
      tasks::LabeledBatch b = tasks::generate(spec, rng, 1, len);
      nlohmann::json j;
      j["inputs"] = b.inputs;
      j["targets"] = b.targets;
      j["mask"] = b.mask;
      std::cout << j.dump() << "\n";
    }
  } catch (const ContractError& e) {
    std::cerr << "tasks error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gated linear attention lab: selective rotary transitions, verification suites, synthetic tasks"};
  app.require_subcommand(1);

  std::string out_dir;
  std::uint64_t seed = 0;
  std::string precision;
  bool dry_run = false;
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--seed", seed, "root seed override");
  app.add_option("--precision", precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_flag("--dry-run", dry_run, "resolve and print, do not run");

  auto* verify_cmd = app.add_subcommand("verify", "run a verification suite");
  std::string suite = "all";
  double corrupt = 0.0;
  verify_cmd->add_option("suite", suite, "equivalence|rff|theorem|spectral|gradients|householder|all");
  verify_cmd->add_option("--debug-corrupt-angles", corrupt,
                         "add a constant to every cumulative rotation angle (fault injection)");

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  std::string config_path;
  train_cmd->add_option("config", config_path, "experiment config file")->required();

  auto* bench_cmd = app.add_subcommand("bench", "time the execution modes");
  std::string bench_mode = "scan-sequential";
  std::int64_t bench_dim = 16, bench_reps = 3, bench_chunk = 32;
  std::vector<std::int64_t> bench_lens = {256, 512, 1024, 2048, 4096, 8192};
  std::string bench_out;
  bench_cmd->add_option("--mode", bench_mode, "scan-sequential|scan-chunked|attention-matrix");
  bench_cmd->add_option("--dim", bench_dim, "key/value width");
  bench_cmd->add_option("--reps", bench_reps, "repetitions (median reported)");
  bench_cmd->add_option("--chunk", bench_chunk, "chunk length for scan-chunked");
  bench_cmd->add_option("--seq-len", bench_lens, "sequence lengths");
  bench_cmd->add_option("--out", bench_out, "CSV output path");

  auto* spectral_cmd = app.add_subcommand("spectral", "windowed-DFT leakage demo");
  auto* spectral_demo = spectral_cmd->add_subcommand("demo", "emit window spectra as CSV");
  double tone = 7.3, alpha = 4.0;
  std::int64_t n_bins = 64;
  std::string spectral_out;
  spectral_demo->add_option("--tone", tone, "tone frequency in bins");
  spectral_demo->add_option("--n", n_bins, "DFT size");
  spectral_demo->add_option("--alpha", alpha, "poisson decay rate");
  spectral_demo->add_option("--out", spectral_out, "CSV output path");

  auto* tasks_cmd = app.add_subcommand("tasks", "task generators");
  auto* tasks_dump = tasks_cmd->add_subcommand("dump", "write batches as JSON lines");
  std::string task_kind = "parity";
  std::int64_t dump_n = 4, dump_len = 8;
  std::uint64_t dump_seed = 1;
  tasks_dump->add_option("--kind", task_kind, "parity|a3|mqar|copy");
  tasks_dump->add_option("--n", dump_n, "number of sequences");
  tasks_dump->add_option("--len", dump_len, "task length");
  tasks_dump->add_option("--seed", dump_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (verify_cmd->parsed()) return cmd_verify(suite, out_dir, corrupt);
    if (train_cmd->parsed()) return cmd_train(config_path, out_dir, seed, precision, dry_run);
    if (bench_cmd->parsed()) return cmd_bench(bench_mode, bench_dim, bench_reps, bench_chunk, bench_lens, bench_out);
    if (spectral_cmd->parsed()) {
      if (!spectral_demo->parsed()) {
        std::cerr << "usage: spectral demo [--tone ...]\n";
        return kExitUsage;
      }
      return cmd_spectral(tone, n_bins, alpha, spectral_out);
    }
    if (tasks_cmd->parsed()) {
      if (!tasks_dump->parsed()) {
        std::cerr << "usage: tasks dump [--kind ...]\n";
        return kExitUsage;
      }
      return cmd_tasks_dump(task_kind, dump_n, dump_len, dump_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
