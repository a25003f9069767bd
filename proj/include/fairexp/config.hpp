#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace fairexp {

// How the welfare slack delta is chosen when building each stage's
// allocation program.
enum class DeltaMode {
  recommended,  // delta = sqrt(log N / N), applied to the raw group effect
  t_statistic,  // same threshold, applied to effect / estimated sd
  custom,       // fixed constant
};

enum class EffectScale { mean_difference, log_relative_risk };

struct SolverOptions {
  double tol = 1e-10;
  int max_iterations = 10000;
};

// Experiment-wide parameters. c1 bounds the allocation spread between any
// two groups; c2 keeps every allocation probability away from 0 and 1.
struct ExperimentConfig {
  int groups = 1;
  double c1 = 0.2;
  double c2 = 0.1;
  double alpha = 0.05;
  DeltaMode delta_mode = DeltaMode::recommended;
  double delta_custom = 0.0;
  EffectScale effect_scale = EffectScale::mean_difference;
  // A group joins adaptive allocation once both of its arms hold at least
  // this many observations; until then it is assigned at 1/2.
  int min_cell_count = 2;
  SolverOptions solver;
};

struct ValidationIssue {
  std::string field;
  std::string message;
};

struct ValidationResult {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

inline ValidationResult validate_config(const ExperimentConfig& cfg) {
  ValidationResult r;
  auto fail = [&r](std::string field, std::string message) {
    r.issues.push_back({std::move(field), std::move(message)});
  };
  if (cfg.groups < 1) fail("groups", "groups must be >= 1");
  if (!(cfg.c1 > 0.0 && cfg.c1 < 1.0)) fail("c1", "c1 must lie in (0, 1)");
  if (!(cfg.c2 > 0.0 && cfg.c2 < 0.5)) fail("c2", "c2 must lie in (0, 1/2)");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) fail("alpha", "alpha must lie in (0, 1)");
  if (cfg.min_cell_count < 2) fail("min_cell_count", "min_cell_count must be >= 2");
  if (cfg.delta_mode == DeltaMode::custom && !(cfg.delta_custom >= 0.0 && std::isfinite(cfg.delta_custom)))
    fail("delta_custom", "delta_custom must be a finite value >= 0");
  if (!(cfg.solver.tol > 0.0)) fail("solver.tol", "solver tolerance must be > 0");
  if (cfg.solver.max_iterations < 1) fail("solver.max_iterations", "max_iterations must be >= 1");
  return r;
}

struct StageSchedule {
  std::vector<int> sizes;  // enrollment per stage, all >= 1

  int stages() const { return static_cast<int>(sizes.size()); }
  long long total() const {
    return std::accumulate(sizes.begin(), sizes.end(), 0LL);
  }
  bool valid() const {
    if (sizes.empty()) return false;
    for (int n : sizes)
      if (n < 1) return false;
    return true;
  }
};

// First stage of `first` participants, then single enrollments: the fully
// adaptive pattern where every later participant gets a fresh allocation.
inline StageSchedule make_schedule(int first, int later, int stages) {
  StageSchedule s;
  s.sizes.assign(static_cast<std::size_t>(stages > 0 ? stages : 0), later);
  if (!s.sizes.empty()) s.sizes.front() = first;
  return s;
}

struct Participant {
  int group = 0;  // 0-based group index
  bool treated = false;
  double outcome = 0.0;
};

}  // namespace fairexp
