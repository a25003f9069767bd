#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fairexp/allocation.hpp"
#include "fairexp/config.hpp"
#include "fairexp/designs.hpp"
#include "fairexp/dgp.hpp"
#include "fairexp/engine.hpp"

namespace fairexp {

struct MonteCarloOptions {
  int replications = 1000;  // >= 2
  std::uint64_t base_seed = 1;
  int parallelism = 0;  // 0 = hardware concurrency
};

struct GroupCellSummary {
  std::int64_t defined_reps = 0;   // replications where the group effect existed
  std::int64_t observed_reps = 0;  // replications where the group was enrolled
  double true_effect = std::numeric_limits<double>::quiet_NaN();
  double mean_effect = std::numeric_limits<double>::quiet_NaN();
  double sd_effect = std::numeric_limits<double>::quiet_NaN();
  double se_sd_effect = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double mean_treated_fraction = std::numeric_limits<double>::quiet_NaN();
  double mean_abs_alloc_gap = std::numeric_limits<double>::quiet_NaN();
};

struct CellSummary {
  DesignKind design = DesignKind::fair_adaptive;
  double dbcd_gamma = 0.0;
  int stages = 0;
  std::int64_t sample_size = 0;
  int replications = 0;
  int failures = 0;
  int audit_violations = 0;
  std::int64_t overall_defined = 0;
  double mean_effect = std::numeric_limits<double>::quiet_NaN();
  double sd_effect = std::numeric_limits<double>::quiet_NaN();
  double se_sd_effect = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double median_max_alloc_gap = std::numeric_limits<double>::quiet_NaN();
  std::vector<GroupCellSummary> groups;
};

struct MonteCarloSummary {
  AllocationVector oracle_allocation;
  std::vector<std::optional<double>> true_effects;
  std::optional<double> true_overall;
  std::vector<CellSummary> cells;
};

namespace detail {

struct RepOutcome {
  bool failed = false;
  int audit_violations = 0;
  std::optional<double> tau;
  bool tau_covered = false;
  std::optional<double> max_gap;
  std::vector<std::optional<double>> effect;
  std::vector<int> covered;  // 1/0, -1 when the group CI is undefined
  std::vector<std::optional<double>> treated_fraction;
};

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sd_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

// Runs replications of every (design, schedule) cell and aggregates
// efficiency, allocation, and coverage summaries. Replication r always draws
// its seed from (base_seed, r) alone, so every cell sees the same
// participant streams. Per-replication results land in a preallocated slot
// and aggregation runs in index order, making the output independent of the
// parallelism degree. Failed replications are counted and excluded, never
// silently dropped. fair_adaptive replications are additionally audited
// post hoc against the recorded stage allocations.
inline MonteCarloSummary run_monte_carlo(const DgpSpec& dgp, const ExperimentConfig& cfg,
                                         const std::vector<StageSchedule>& schedules,
                                         const std::vector<DesignPolicy>& designs,
                                         const MonteCarloOptions& opts) {
  dgp.validate();
  if (const auto check = validate_config(cfg); !check.ok())
    throw std::invalid_argument("run_monte_carlo: invalid config: " + check.issues.front().message);
  if (dgp.groups() != cfg.groups)
    throw std::invalid_argument("run_monte_carlo: dgp and config group counts differ");
  if (opts.replications < 2)
    throw std::invalid_argument("run_monte_carlo: needs at least 2 replications");
  if (schedules.empty() || designs.empty())
    throw std::invalid_argument("run_monte_carlo: needs schedules and designs");

  const int m = dgp.groups();
  MonteCarloSummary summary;
  summary.true_effects = true_group_effects(dgp, cfg.effect_scale);
  summary.true_overall = true_overall_effect(dgp, cfg.effect_scale);
  {
    const OracleParams truth = true_params(dgp, cfg.effect_scale);
    AllocationProblem oracle_problem;
    oracle_problem.weights = truth.weights;
    oracle_problem.var_treated = truth.var_treated;
    oracle_problem.var_control = truth.var_control;
    oracle_problem.effect = truth.effect;
    oracle_problem.delta = 0.0;
    oracle_problem.c1 = cfg.c1;
    oracle_problem.c2 = cfg.c2;
    summary.oracle_allocation = solve(oracle_problem, cfg.solver).e;
  }

  const OutcomeSource source = make_outcome_source(dgp);
  const int threads = opts.parallelism > 0
                          ? opts.parallelism
                          : std::max(1u, std::thread::hardware_concurrency());

  for (const auto& design : designs) {
    for (const auto& schedule : schedules) {
      const int R = opts.replications;
      std::vector<detail::RepOutcome> reps(static_cast<std::size_t>(R));

      auto run_rep = [&](int r) {
        auto& out = reps[static_cast<std::size_t>(r)];
        out.effect.resize(static_cast<std::size_t>(m));
        out.covered.assign(static_cast<std::size_t>(m), -1);
        out.treated_fraction.resize(static_cast<std::size_t>(m));
        try {
          const std::uint64_t seed = derive_seed(opts.base_seed, static_cast<std::uint64_t>(r));
          const TrialResult trial = run_trial(cfg, schedule, design, source, seed);
          if (design.kind == DesignKind::fair_adaptive)
            out.audit_violations = audit_trial(trial, cfg, design);
          if (trial.report.overall.has_value()) {
            out.tau = trial.report.overall->effect;
            if (summary.true_overall.has_value())
              out.tau_covered = trial.report.overall->ci_lo <= *summary.true_overall &&
                                *summary.true_overall <= trial.report.overall->ci_hi;
          }
          double max_gap = -1.0;
          for (int j = 0; j < m; ++j) {
            const auto k = static_cast<std::size_t>(j);
            const auto& g = trial.report.groups[k];
            out.treated_fraction[k] = g.treated_fraction;
            if (g.treated_fraction.has_value()) {
              max_gap = std::max(max_gap,
                                 std::abs(*g.treated_fraction - summary.oracle_allocation[k]));
            }
            if (g.reported) {
              out.effect[k] = g.effect;
              const auto& truth = summary.true_effects[k];
              if (truth.has_value())
                out.covered[k] = (*g.ci_lo <= *truth && *truth <= *g.ci_hi) ? 1 : 0;
            }
          }
          if (max_gap >= 0.0) out.max_gap = max_gap;
        } catch (...) {
          out.failed = true;
        }
      };

      if (threads <= 1 || R < 4) {
        for (int r = 0; r < R; ++r) run_rep(r);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int w = 0; w < threads; ++w) {
          pool.emplace_back([&, w]() {
            for (int r = w; r < R; r += threads) run_rep(r);
          });
        }
        for (auto& th : pool) th.join();
      }

      CellSummary cell;
      cell.design = design.kind;
      cell.dbcd_gamma = design.kind == DesignKind::dbcd ? design.dbcd_gamma : 0.0;
      cell.stages = schedule.stages();
      cell.sample_size = schedule.total();
      cell.replications = R;
      cell.groups.resize(static_cast<std::size_t>(m));

      std::vector<double> taus, gaps;
      std::int64_t tau_covered = 0;
      for (const auto& rep : reps) {
        if (rep.failed) {
          ++cell.failures;
          continue;
        }
        cell.audit_violations += rep.audit_violations;
        if (rep.tau.has_value()) {
          taus.push_back(*rep.tau);
          if (rep.tau_covered) ++tau_covered;
        }
        if (rep.max_gap.has_value()) gaps.push_back(*rep.max_gap);
      }
      cell.overall_defined = static_cast<std::int64_t>(taus.size());
      if (!taus.empty()) {
        cell.mean_effect = detail::mean_of(taus);
        cell.sd_effect = detail::sd_of(taus);
        cell.se_sd_effect = cell.sd_effect / std::sqrt(2.0 * (static_cast<double>(taus.size()) - 1.0));
        cell.coverage = static_cast<double>(tau_covered) / static_cast<double>(taus.size());
      }
      cell.median_max_alloc_gap = detail::median_of(std::move(gaps));

      for (int j = 0; j < m; ++j) {
        const auto k = static_cast<std::size_t>(j);
        auto& g = cell.groups[k];
        if (summary.true_effects[k].has_value()) g.true_effect = *summary.true_effects[k];
        std::vector<double> effects, fractions, alloc_gaps;
        std::int64_t covered = 0, cover_total = 0;
        for (const auto& rep : reps) {
          if (rep.failed) continue;
          if (rep.effect[k].has_value()) effects.push_back(*rep.effect[k]);
          if (rep.covered[k] >= 0) {
            ++cover_total;
            covered += rep.covered[k];
          }
          if (rep.treated_fraction[k].has_value()) {
            fractions.push_back(*rep.treated_fraction[k]);
            alloc_gaps.push_back(std::abs(*rep.treated_fraction[k] - summary.oracle_allocation[k]));
          }
        }
        g.defined_reps = static_cast<std::int64_t>(effects.size());
        g.observed_reps = static_cast<std::int64_t>(fractions.size());
        if (!effects.empty()) {
          g.mean_effect = detail::mean_of(effects);
          g.sd_effect = detail::sd_of(effects);
          if (effects.size() > 1)
            g.se_sd_effect = g.sd_effect / std::sqrt(2.0 * (static_cast<double>(effects.size()) - 1.0));
        }
        if (cover_total > 0) g.coverage = static_cast<double>(covered) / static_cast<double>(cover_total);
        if (!fractions.empty()) {
          g.mean_treated_fraction = detail::mean_of(fractions);
          g.mean_abs_alloc_gap = detail::mean_of(alloc_gaps);
        }
      }
      summary.cells.push_back(std::move(cell));
    }
  }
  return summary;
}

}  // namespace fairexp
