// fairexp command line: validate configs, solve one allocation program, run a
// single trial, or run a Monte Carlo study. Exit codes: 0 success, 1 usage or
// config error, 2 runtime failure, 3 solver non-convergence.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairexp/fairexp.hpp"
#include "fairexp/io.hpp"

namespace {

namespace fs = std::filesystem;
using fairexp::io::json;

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_runtime = 2;
constexpr int exit_no_convergence = 3;

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
  if (g_log_level >= 1) std::fprintf(stderr, "[fairexp] %s\n", msg.c_str());
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fairexp::io::ConfigError("config", "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw fairexp::io::ConfigError("config", std::string("parse error: ") + e.what());
  }
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << bytes;
}

fs::path resolve_out_dir(const std::string& flag_value) {
  std::string dir = flag_value;
  if (dir.empty()) {
    if (const char* env = std::getenv("FAIREXP_OUT_DIR")) dir = env;
  }
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  return dir;
}

int report_config_error(const fairexp::io::ConfigError& e) {
  std::fprintf(stderr, "config error: %s\n", e.what());
  return exit_config;
}

int report_validation(const fairexp::ValidationResult& check) {
  for (const auto& issue : check.issues)
    std::fprintf(stderr, "config error: %s: %s\n", issue.field.c_str(), issue.message.c_str());
  return check.ok() ? exit_ok : exit_config;
}

int cmd_validate(const std::string& config_path) {
  const json doc = load_config(config_path);
  int rc = exit_ok;
  if (doc.contains("experiment")) {
    const auto cfg = fairexp::io::experiment_from_json(doc.at("experiment"));
    if (const auto check = fairexp::validate_config(cfg); !check.ok()) rc = report_validation(check);
  }
  if (doc.contains("dgp")) fairexp::io::dgp_from_json(doc.at("dgp"));
  if (doc.contains("schedule")) fairexp::io::schedule_from_json(doc.at("schedule"));
  if (doc.contains("problem")) fairexp::io::problem_from_json(doc.at("problem"));
  if (rc == exit_ok) std::printf("ok\n");
  return rc;
}

int cmd_solve(const std::string& config_path, const std::string& out_dir_flag) {
  const json doc = load_config(config_path);
  if (!doc.contains("problem"))
    throw fairexp::io::ConfigError("problem", "solve needs a 'problem' section");
  const auto problem = fairexp::io::problem_from_json(doc.at("problem"));
  fairexp::SolverOptions opts;
  if (doc.contains("experiment") && doc.at("experiment").contains("solver")) {
    opts = fairexp::io::experiment_from_json(doc.at("experiment")).solver;
  }

  const auto result = fairexp::solve(problem, opts);
  const fs::path out = resolve_out_dir(out_dir_flag) / "solution.json";
  write_file(out, fairexp::io::solution_to_json(problem, result).dump(2) + "\n");
  log_info("wrote " + out.string());
  if (!result.converged) {
    std::fprintf(stderr, "solver did not reach tolerance; best iterate written\n");
    return exit_no_convergence;
  }
  return exit_ok;
}

int cmd_trial(const std::string& config_path, std::uint64_t seed, const std::string& out_dir_flag) {
  const json doc = load_config(config_path);
  const auto cfg = fairexp::io::experiment_from_json(
      fairexp::io::detail::require(doc, "experiment", "config"));
  if (const auto check = fairexp::validate_config(cfg); !check.ok()) return report_validation(check);
  const auto dgp = fairexp::io::dgp_from_json(fairexp::io::detail::require(doc, "dgp", "config"));
  if (dgp.groups() != cfg.groups)
    throw fairexp::io::ConfigError("dgp.proportions", "group count differs from experiment.groups");
  const auto schedule = fairexp::io::schedule_from_json(
      fairexp::io::detail::require(doc, "schedule", "config"));
  const auto design = fairexp::io::design_from_json(
      fairexp::io::detail::require(doc, "design", "config"), &dgp, cfg.effect_scale);

  const auto trial =
      fairexp::run_trial(cfg, schedule, design, fairexp::make_outcome_source(dgp), seed);

  const fs::path dir = resolve_out_dir(out_dir_flag);
  std::string stage_log;
  for (const auto& rec : trial.stages) stage_log += fairexp::io::record_to_json(rec).dump() + "\n";
  write_file(dir / "stages.jsonl", stage_log);
  write_file(dir / "report.json", fairexp::io::report_to_json(trial.report).dump(2) + "\n");
  log_info("wrote " + (dir / "report.json").string() + " and stages.jsonl (" +
           std::to_string(trial.stages.size()) + " stages)");
  return exit_ok;
}

int cmd_montecarlo(const std::string& config_path, const std::string& out_dir_flag,
                   int parallelism) {
  const json doc = load_config(config_path);
  const auto started = now_iso8601();
  const auto cfg = fairexp::io::experiment_from_json(
      fairexp::io::detail::require(doc, "experiment", "config"));
  if (const auto check = fairexp::validate_config(cfg); !check.ok()) return report_validation(check);
  const auto dgp = fairexp::io::dgp_from_json(fairexp::io::detail::require(doc, "dgp", "config"));
  const auto& mc = fairexp::io::detail::require(doc, "montecarlo", "config");

  fairexp::MonteCarloOptions opts;
  opts.replications = fairexp::io::detail::get<int>(mc, "replications", "montecarlo");
  opts.base_seed = fairexp::io::detail::get<std::uint64_t>(mc, "base_seed", "montecarlo");
  opts.parallelism = parallelism;

  const int first = fairexp::io::detail::get_or(mc, "first_stage_size", "montecarlo", 40);
  const int later = fairexp::io::detail::get_or(mc, "later_stage_size", "montecarlo", 1);
  std::vector<fairexp::StageSchedule> schedules;
  for (const int stages :
       fairexp::io::detail::get<std::vector<int>>(mc, "stage_grid", "montecarlo")) {
    schedules.push_back(fairexp::make_schedule(first, later, stages));
  }
  std::vector<fairexp::DesignPolicy> designs;
  for (const auto& dj : fairexp::io::detail::require(mc, "designs", "montecarlo")) {
    designs.push_back(fairexp::io::design_from_json(dj, &dgp, cfg.effect_scale));
  }

  log_info("running " + std::to_string(designs.size() * schedules.size()) + " cells x " +
           std::to_string(opts.replications) + " replications");
  const auto summary = fairexp::run_monte_carlo(dgp, cfg, schedules, designs, opts);

  const fs::path dir = resolve_out_dir(out_dir_flag);
  write_file(dir / "summary.csv", fairexp::io::summary_to_csv(summary));
  const auto manifest = fairexp::io::make_manifest(
      doc, opts.base_seed, {"summary.csv"}, started, now_iso8601());
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  log_info("wrote " + (dir / "summary.csv").string());
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fair adaptive experiment engine"};
  app.set_version_flag("--version", std::string("fairexp ") + fairexp::version);
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 1;
  int parallelism = 0;
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "quiet, info, or debug")->capture_default_str();

  auto add_common = [&](CLI::App* sub, bool with_out) {
    sub->fallthrough();  // accept global flags after the subcommand
    sub->add_option("--config", config_path, "path to the JSON config")->required();
    if (with_out)
      sub->add_option("--out-dir", out_dir, "output directory (default: $FAIREXP_OUT_DIR or .)");
  };

  auto* validate = app.add_subcommand("validate", "check a config document");
  add_common(validate, false);
  auto* solve = app.add_subcommand("solve", "solve one allocation program");
  add_common(solve, true);
  auto* trial = app.add_subcommand("trial", "run a single trial");
  add_common(trial, true);
  trial->add_option("--seed", seed, "trial seed")->capture_default_str();
  auto* montecarlo = app.add_subcommand("montecarlo", "run a Monte Carlo study");
  add_common(montecarlo, true);
  montecarlo->add_option("--parallelism", parallelism,
                         "worker threads (0 = hardware); never changes results");

  CLI11_PARSE(app, argc, argv);
  g_log_level = log_level == "quiet" ? 0 : (log_level == "debug" ? 2 : 1);

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (solve->parsed()) return cmd_solve(config_path, out_dir);
    if (trial->parsed()) return cmd_trial(config_path, seed, out_dir);
    if (montecarlo->parsed()) return cmd_montecarlo(config_path, out_dir, parallelism);
  } catch (const fairexp::io::ConfigError& e) {
    return report_config_error(e);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_config;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_runtime;
  }
  return exit_config;
}
