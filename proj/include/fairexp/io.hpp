#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairexp/config.hpp"
#include "fairexp/designs.hpp"
#include "fairexp/dgp.hpp"
#include "fairexp/engine.hpp"
#include "fairexp/montecarlo.hpp"
#include "fairexp/version.hpp"

namespace fairexp::io {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string f, const std::string& message)
      : std::runtime_error(f + ": " + message), field(std::move(f)) {}
};

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + "." + key, "missing field");
  return *it;
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return require(j, key, where).get<T>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + "." + key, e.what());
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  return get<T>(j, key, where);
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

inline json opt_to_json(const std::optional<double>& v) {
  return v.has_value() ? json(*v) : json(nullptr);
}

}  // namespace detail

// ---- experiment configuration ----------------------------------------------

inline DeltaMode parse_delta_mode(const std::string& s) {
  if (s == "recommended") return DeltaMode::recommended;
  if (s == "t_statistic") return DeltaMode::t_statistic;
  if (s == "custom") return DeltaMode::custom;
  throw ConfigError("experiment.delta_mode", "unknown mode '" + s + "'");
}

inline std::string to_string(DeltaMode m) {
  switch (m) {
    case DeltaMode::recommended: return "recommended";
    case DeltaMode::t_statistic: return "t_statistic";
    case DeltaMode::custom: return "custom";
  }
  return "?";
}

inline EffectScale parse_effect_scale(const std::string& s) {
  if (s == "mean_difference") return EffectScale::mean_difference;
  if (s == "log_relative_risk") return EffectScale::log_relative_risk;
  throw ConfigError("experiment.effect_scale", "unknown scale '" + s + "'");
}

inline std::string to_string(EffectScale s) {
  return s == EffectScale::mean_difference ? "mean_difference" : "log_relative_risk";
}

inline ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.groups = detail::get<int>(j, "groups", "experiment");
  cfg.c1 = detail::get_or(j, "c1", "experiment", cfg.c1);
  cfg.c2 = detail::get_or(j, "c2", "experiment", cfg.c2);
  cfg.alpha = detail::get_or(j, "alpha", "experiment", cfg.alpha);
  cfg.delta_mode = parse_delta_mode(
      detail::get_or<std::string>(j, "delta_mode", "experiment", "recommended"));
  cfg.delta_custom = detail::get_or(j, "delta_custom", "experiment", cfg.delta_custom);
  cfg.effect_scale = parse_effect_scale(
      detail::get_or<std::string>(j, "effect_scale", "experiment", "mean_difference"));
  cfg.min_cell_count = detail::get_or(j, "min_cell_count", "experiment", cfg.min_cell_count);
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    cfg.solver.tol = detail::get_or(s, "tol", "experiment.solver", cfg.solver.tol);
    cfg.solver.max_iterations =
        detail::get_or(s, "max_iterations", "experiment.solver", cfg.solver.max_iterations);
  }
  return cfg;
}

inline json experiment_to_json(const ExperimentConfig& cfg) {
  return json{{"groups", cfg.groups},
              {"c1", cfg.c1},
              {"c2", cfg.c2},
              {"alpha", cfg.alpha},
              {"delta_mode", to_string(cfg.delta_mode)},
              {"delta_custom", cfg.delta_custom},
              {"effect_scale", to_string(cfg.effect_scale)},
              {"min_cell_count", cfg.min_cell_count},
              {"solver", {{"tol", cfg.solver.tol}, {"max_iterations", cfg.solver.max_iterations}}}};
}

// ---- data-generating process ------------------------------------------------

inline DgpSpec dgp_from_json(const json& j) {
  DgpSpec dgp;
  const std::string kind = detail::get<std::string>(j, "kind", "dgp");
  if (kind == "gaussian") {
    dgp.kind = OutcomeModel::gaussian;
  } else if (kind == "bernoulli") {
    dgp.kind = OutcomeModel::bernoulli;
  } else if (kind == "table") {
    dgp.kind = OutcomeModel::table;
  } else {
    throw ConfigError("dgp.kind", "unknown kind '" + kind + "'");
  }
  dgp.proportions = detail::get<std::vector<double>>(j, "proportions", "dgp");
  if (dgp.kind == OutcomeModel::table) {
    auto parse_side = [&](const char* key) {
      std::vector<ArmDistribution> side;
      for (const auto& cell : detail::require(j, key, "dgp")) {
        ArmDistribution arm;
        arm.values = detail::get<std::vector<double>>(cell, "values", std::string("dgp.") + key);
        arm.probs = detail::get<std::vector<double>>(cell, "probs", std::string("dgp.") + key);
        side.push_back(std::move(arm));
      }
      return side;
    };
    dgp.table_treated = parse_side("table_treated");
    dgp.table_control = parse_side("table_control");
  } else {
    dgp.mean_treated = detail::get<std::vector<double>>(j, "mean_treated", "dgp");
    dgp.mean_control = detail::get<std::vector<double>>(j, "mean_control", "dgp");
    if (dgp.kind == OutcomeModel::gaussian) {
      dgp.sd_treated = detail::get<std::vector<double>>(j, "sd_treated", "dgp");
      dgp.sd_control = detail::get<std::vector<double>>(j, "sd_control", "dgp");
    }
  }
  try {
    dgp.validate();
  } catch (const std::exception& e) {
    throw ConfigError("dgp", e.what());
  }
  return dgp;
}

// ---- schedule ----------------------------------------------------------------

inline StageSchedule schedule_from_json(const json& j) {
  StageSchedule s;
  if (j.contains("sizes")) {
    s.sizes = detail::get<std::vector<int>>(j, "sizes", "schedule");
  } else {
    const int stages = detail::get<int>(j, "stages", "schedule");
    const int first = detail::get_or(j, "first_stage_size", "schedule", 1);
    const int later = detail::get_or(j, "later_stage_size", "schedule", 1);
    s = make_schedule(first, later, stages);
  }
  if (!s.valid()) throw ConfigError("schedule", "stage sizes must be positive and nonempty");
  return s;
}

// ---- designs -------------------------------------------------------------------

inline DesignKind parse_design_kind(const std::string& s) {
  if (s == "fair_adaptive") return DesignKind::fair_adaptive;
  if (s == "complete_randomization") return DesignKind::complete_randomization;
  if (s == "dbcd") return DesignKind::dbcd;
  if (s == "oracle_neyman") return DesignKind::oracle_neyman;
  if (s == "oracle_fair") return DesignKind::oracle_fair;
  throw ConfigError("design.kind", "unknown design '" + s + "'");
}

inline std::string to_string(DesignKind k) {
  switch (k) {
    case DesignKind::fair_adaptive: return "fair_adaptive";
    case DesignKind::complete_randomization: return "complete_randomization";
    case DesignKind::dbcd: return "dbcd";
    case DesignKind::oracle_neyman: return "oracle_neyman";
    case DesignKind::oracle_fair: return "oracle_fair";
  }
  return "?";
}

// Oracle designs get their true parameters filled from the DGP when one is
// available in the same document.
inline DesignPolicy design_from_json(const json& j, const DgpSpec* dgp, EffectScale scale) {
  DesignPolicy d;
  d.kind = parse_design_kind(detail::get<std::string>(j, "kind", "design"));
  d.dbcd_gamma = detail::get_or(j, "gamma", "design", 2.0);
  if (d.kind == DesignKind::oracle_neyman || d.kind == DesignKind::oracle_fair) {
    if (dgp == nullptr)
      throw ConfigError("design", "oracle design requires a dgp section");
    d.oracle = true_params(*dgp, scale);
  }
  return d;
}

// ---- allocation problems -------------------------------------------------------

inline AllocationProblem problem_from_json(const json& j) {
  AllocationProblem p;
  p.weights = detail::get<std::vector<double>>(j, "weights", "problem");
  p.var_treated = detail::get<std::vector<double>>(j, "var_treated", "problem");
  p.var_control = detail::get<std::vector<double>>(j, "var_control", "problem");
  if (j.contains("effect")) {
    for (const auto& v : j.at("effect")) {
      p.effect.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
  }
  if (j.contains("fixed_half")) {
    for (const auto& v : j.at("fixed_half")) p.fixed_half.push_back(v.get<bool>() ? 1 : 0);
  }
  p.delta = detail::get_or(j, "delta", "problem", 0.0);
  p.c1 = detail::get_or(j, "c1", "problem", p.c1);
  p.c2 = detail::get_or(j, "c2", "problem", p.c2);
  try {
    p.validate();
  } catch (const std::exception& e) {
    throw ConfigError("problem", e.what());
  }
  return p;
}

// Solution plus the constraints that hold with equality at it.
inline json solution_to_json(const AllocationProblem& p, const SolveResult& res) {
  constexpr double edge_tol = 1e-9;
  json groups = json::array();
  for (int j = 0; j < p.groups(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    const double e = res.e[k];
    json binding = json::array();
    if (p.pinned(j)) {
      binding.push_back("fixed_half");
    } else {
      const Interval box = derive_welfare_box(p.effect_at(j), p.delta, p.c2);
      if (e - p.c2 <= edge_tol) binding.push_back("feasibility_lower");
      if ((1.0 - p.c2) - e <= edge_tol) binding.push_back("feasibility_upper");
      if (box.lo > p.c2 && e - box.lo <= edge_tol) binding.push_back("welfare_lower");
      if (box.hi < 1.0 - p.c2 && box.hi - e <= edge_tol) binding.push_back("welfare_upper");
    }
    groups.push_back({{"group", j + 1}, {"e", e}, {"binding", binding}});
  }
  json envy = json::array();
  for (int i = 0; i < p.groups(); ++i) {
    for (int l = i + 1; l < p.groups(); ++l) {
      if (std::abs(res.e[static_cast<std::size_t>(i)] - res.e[static_cast<std::size_t>(l)]) >=
          p.c1 - edge_tol) {
        envy.push_back({i + 1, l + 1});
      }
    }
  }
  return json{{"e", res.e},
              {"objective", res.objective},
              {"converged", res.converged},
              {"iterations", res.iterations},
              {"constraint_violation", constraint_violation(p, res.e)},
              {"active_constraints", {{"groups", groups}, {"envy_pairs", envy}}}};
}

// ---- trial output ---------------------------------------------------------------

inline json report_to_json(const InferenceReport& r) {
  json groups = json::array();
  for (const auto& g : r.groups) {
    json gj{{"group", g.group + 1},
            {"count", g.count},
            {"proportion", g.proportion},
            {"treated_fraction", detail::opt_to_json(g.treated_fraction)},
            {"reported", g.reported}};
    if (g.reported) {
      gj["effect"] = *g.effect;
      gj["variance"] = *g.variance;
      gj["ci"] = {*g.ci_lo, *g.ci_hi};
    } else {
      gj["flag"] = g.flag;
    }
    groups.push_back(std::move(gj));
  }
  json out{{"sample_size", r.sample_size}, {"z", r.z}, {"groups", groups}};
  if (r.overall.has_value()) {
    out["overall"] = {{"effect", r.overall->effect},
                      {"variance", r.overall->variance},
                      {"ci", {r.overall->ci_lo, r.overall->ci_hi}}};
  }
  if (!r.flag.empty()) out["flag"] = r.flag;
  return out;
}

inline json record_to_json(const StageRecord& rec) {
  json participants = json::array();
  for (const auto& p : rec.participants) {
    participants.push_back({{"group", p.group + 1}, {"treated", p.treated}, {"outcome", p.outcome}});
  }
  json snapshot = json::array();
  for (std::size_t k = 0; k < rec.snapshot.size(); ++k) {
    const auto& g = rec.snapshot[k];
    snapshot.push_back({{"group", static_cast<int>(k) + 1},
                        {"proportion", g.proportion},
                        {"effect", detail::opt_to_json(g.effect)},
                        {"var_treated", detail::opt_to_json(g.var_treated)},
                        {"var_control", detail::opt_to_json(g.var_control)}});
  }
  return json{{"stage", rec.stage},
              {"allocation", rec.allocation},
              {"participants", participants},
              {"snapshot", snapshot}};
}

// ---- Monte Carlo output -----------------------------------------------------------

inline const char* summary_csv_header() {
  return "design,gamma,stages,sample_size,replications,failures,audit_violations,group,"
         "true_effect,mean_effect,sd_effect,se_sd_effect,coverage,defined_reps,"
         "mean_treated_fraction,mean_abs_alloc_gap,median_max_alloc_gap,oracle_allocation";
}

// One row per cell for the overall effect (group = "all") plus one row per
// group. Inapplicable fields are left empty. Formatting is fixed so reruns
// are byte-identical.
inline std::string summary_to_csv(const MonteCarloSummary& s) {
  std::string out = summary_csv_header();
  out += '\n';
  auto cell_num = [](double x) { return std::isnan(x) ? std::string() : detail::fmt(x); };
  for (const auto& cell : s.cells) {
    const std::string prefix = to_string(cell.design) + "," +
                               (cell.design == DesignKind::dbcd ? detail::fmt(cell.dbcd_gamma) : "") +
                               "," + std::to_string(cell.stages) + "," +
                               std::to_string(cell.sample_size) + "," +
                               std::to_string(cell.replications) + "," +
                               std::to_string(cell.failures) + "," +
                               std::to_string(cell.audit_violations) + ",";
    out += prefix + "all," +
           (s.true_overall.has_value() ? detail::fmt(*s.true_overall) : "") + "," +
           cell_num(cell.mean_effect) + "," + cell_num(cell.sd_effect) + "," +
           cell_num(cell.se_sd_effect) + "," + cell_num(cell.coverage) + "," +
           std::to_string(cell.overall_defined) + ",,," +
           cell_num(cell.median_max_alloc_gap) + ",\n";
    for (std::size_t k = 0; k < cell.groups.size(); ++k) {
      const auto& g = cell.groups[k];
      out += prefix + std::to_string(k + 1) + "," + cell_num(g.true_effect) + "," +
             cell_num(g.mean_effect) + "," + cell_num(g.sd_effect) + "," +
             cell_num(g.se_sd_effect) + "," + cell_num(g.coverage) + "," +
             std::to_string(g.defined_reps) + "," + cell_num(g.mean_treated_fraction) + "," +
             cell_num(g.mean_abs_alloc_gap) + ",," + detail::fmt(s.oracle_allocation[k]) + "\n";
    }
  }
  return out;
}

// ---- manifest -----------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_digest(const json& config) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return std::string("fnv1a:") + buf;
}

inline json make_manifest(const json& config, std::uint64_t seed,
                          const std::vector<std::string>& outputs,
                          const std::string& started, const std::string& finished) {
  return json{{"tool", std::string("fairexp ") + version},
              {"config_digest", config_digest(config)},
              {"config", config},
              {"seed", seed},
              {"outputs", outputs},
              {"started", started},
              {"finished", finished}};
}

}  // namespace fairexp::io
