#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fairexp/allocation.hpp"
#include "fairexp/config.hpp"
#include "fairexp/stats.hpp"
#include "fairexp/welfare.hpp"

namespace fairexp {

enum class DesignKind {
  fair_adaptive,
  complete_randomization,
  dbcd,
  oracle_neyman,
  oracle_fair,
};

// True data-generating parameters, for the oracle designs.
struct OracleParams {
  std::vector<double> weights;
  std::vector<double> var_treated;
  std::vector<double> var_control;
  std::vector<std::optional<double>> effect;
};

struct DesignPolicy {
  DesignKind kind = DesignKind::fair_adaptive;
  double dbcd_gamma = 2.0;  // >= 0
  std::optional<OracleParams> oracle;
};

// Hu-Zhang allocation function: steers the realized treated fraction x
// toward the target rho. gamma = 0 returns rho unchanged; x = rho is a
// fixed point for every gamma. Requires x in (0, 1).
inline double dbcd_allocation(double x, double rho, double gamma) {
  if (rho <= 0.0) return 0.0;
  if (rho >= 1.0) return 1.0;
  const double a = rho * std::pow(rho / x, gamma);
  const double b = (1.0 - rho) * std::pow((1.0 - rho) / (1.0 - x), gamma);
  return a / (a + b);
}

// A group takes part in adaptive allocation only once both of its arms have
// enough observations for stable variance estimates.
inline bool group_active(const TrialState& s, int j, int min_cell_count) {
  return s.arm_count(j, true) >= min_cell_count &&
         s.arm_count(j, false) >= min_cell_count;
}

// Sample-analog allocation program for the next stage: weights and variances
// from the accumulated state, welfare terms per the configured slack mode.
// Inactive groups are pinned at 1/2 and shield the envy constraints.
inline AllocationProblem fair_problem_from_state(const TrialState& s, const ExperimentConfig& cfg) {
  const int m = s.groups();
  AllocationProblem p;
  p.c1 = cfg.c1;
  p.c2 = cfg.c2;
  p.weights.assign(static_cast<std::size_t>(m), 0.0);
  p.var_treated.assign(static_cast<std::size_t>(m), 0.0);
  p.var_control.assign(static_cast<std::size_t>(m), 0.0);
  p.effect.assign(static_cast<std::size_t>(m), std::nullopt);
  p.fixed_half.assign(static_cast<std::size_t>(m), 1);

  const auto welfare = welfare_slack(s, cfg);
  p.delta = welfare.empty() ? 0.0 : welfare.front().delta;
  for (int j = 0; j < m; ++j) {
    const auto k = static_cast<std::size_t>(j);
    p.weights[k] = s.group_proportion(j).value_or(0.0);
    if (!group_active(s, j, cfg.min_cell_count)) continue;
    p.fixed_half[k] = 0;
    p.var_treated[k] = *s.arm_variance(j, true);
    p.var_control[k] = *s.arm_variance(j, false);
    p.effect[k] = welfare[k].effect;
  }
  return p;
}

// Next-stage assignment probabilities for each group under the given design.
// All probabilities lie in [c2, 1-c2]; groups without usable estimates fall
// back to 1/2 under every design.
inline AllocationVector assignment_probabilities(const DesignPolicy& policy,
                                                 const TrialState& state,
                                                 const ExperimentConfig& cfg) {
  const int m = state.groups();
  AllocationVector e(static_cast<std::size_t>(m), 0.5);
  const auto require_oracle = [&]() -> const OracleParams& {
    if (!policy.oracle.has_value())
      throw std::invalid_argument("assignment_probabilities: oracle design needs true parameters");
    if (static_cast<int>(policy.oracle->weights.size()) != m)
      throw std::invalid_argument("assignment_probabilities: oracle parameter size mismatch");
    return *policy.oracle;
  };

  switch (policy.kind) {
    case DesignKind::complete_randomization:
      return e;

    case DesignKind::fair_adaptive:
      return solve(fair_problem_from_state(state, cfg), cfg.solver).e;

    case DesignKind::dbcd: {
      if (!(policy.dbcd_gamma >= 0.0))
        throw std::invalid_argument("assignment_probabilities: dbcd gamma must be >= 0");
      for (int j = 0; j < m; ++j) {
        if (!group_active(state, j, cfg.min_cell_count)) continue;
        const double s1 = std::sqrt(*state.arm_variance(j, true));
        const double s0 = std::sqrt(*state.arm_variance(j, false));
        const double x = *state.treated_fraction(j);
        if (s1 + s0 <= 0.0 || x <= 0.0 || x >= 1.0) continue;
        const double rho = s1 / (s1 + s0);
        e[static_cast<std::size_t>(j)] =
            std::clamp(dbcd_allocation(x, rho, policy.dbcd_gamma), cfg.c2, 1.0 - cfg.c2);
      }
      return e;
    }

    case DesignKind::oracle_neyman: {
      const auto& o = require_oracle();
      for (int j = 0; j < m; ++j) {
        const auto k = static_cast<std::size_t>(j);
        const double s1 = std::sqrt(o.var_treated[k]);
        const double s0 = std::sqrt(o.var_control[k]);
        if (s1 + s0 <= 0.0) continue;
        e[k] = std::clamp(s1 / (s1 + s0), cfg.c2, 1.0 - cfg.c2);
      }
      return e;
    }

    case DesignKind::oracle_fair: {
      const auto& o = require_oracle();
      AllocationProblem p;
      p.weights = o.weights;
      p.var_treated = o.var_treated;
      p.var_control = o.var_control;
      p.effect = o.effect;
      p.delta = 0.0;
      p.c1 = cfg.c1;
      p.c2 = cfg.c2;
      return solve(p, cfg.solver).e;
    }
  }
  throw std::logic_error("assignment_probabilities: unknown design kind");
}

}  // namespace fairexp
