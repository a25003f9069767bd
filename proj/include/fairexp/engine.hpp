#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairexp/allocation.hpp"
#include "fairexp/config.hpp"
#include "fairexp/designs.hpp"
#include "fairexp/inference.hpp"
#include "fairexp/rng.hpp"
#include "fairexp/stats.hpp"
#include "fairexp/welfare.hpp"

namespace fairexp {

struct GroupSnapshot {
  double proportion = 0.0;
  std::optional<double> effect;
  std::optional<double> var_treated;
  std::optional<double> var_control;
};

// One stage of a trial: the allocation that was used, the participants it
// produced, and the estimates after folding them in. The allocation is a
// deterministic function of history through the previous stage.
struct StageRecord {
  int stage = 0;  // 1-based
  AllocationVector allocation;
  std::vector<Participant> participants;
  std::vector<GroupSnapshot> snapshot;
};

struct PotentialOutcome {
  int group = 0;
  double y_control = 0.0;
  double y_treated = 0.0;
};

using OutcomeSource = std::function<PotentialOutcome(Rng&)>;

struct TrialResult {
  std::vector<StageRecord> stages;
  InferenceReport report;
};

namespace detail {
inline std::vector<GroupSnapshot> snapshot_state(const TrialState& s, const ExperimentConfig& cfg) {
  std::vector<GroupSnapshot> snap(static_cast<std::size_t>(s.groups()));
  for (int j = 0; j < s.groups(); ++j) {
    auto& g = snap[static_cast<std::size_t>(j)];
    g.proportion = s.group_proportion(j).value_or(0.0);
    g.effect = s.group_effect(j, cfg.effect_scale);
    g.var_treated = s.arm_variance(j, true);
    g.var_control = s.arm_variance(j, false);
  }
  return snap;
}
}  // namespace detail

// Runs one trial: stage 1 assigns every group at 1/2, later stages evaluate
// the policy on the accumulated state, assign by independent coin flips, and
// fold in the observed outcomes. Outcome draws and assignment flips use two
// separate streams derived from the seed, so designs sharing a seed see the
// same participant sequence. Fully deterministic given (inputs, seed).
inline TrialResult run_trial(const ExperimentConfig& cfg, const StageSchedule& schedule,
                             const DesignPolicy& policy, const OutcomeSource& source,
                             std::uint64_t seed) {
  if (const auto check = validate_config(cfg); !check.ok())
    throw std::invalid_argument("run_trial: invalid config: " + check.issues.front().field +
                                ": " + check.issues.front().message);
  if (!schedule.valid())
    throw std::invalid_argument("run_trial: schedule must be nonempty with positive sizes");

  Rng outcome_rng(derive_seed(seed, 0x6f75u));
  Rng assign_rng(derive_seed(seed, 0x6173u));

  TrialState state(cfg.groups);
  TrialResult result;
  result.stages.reserve(schedule.sizes.size());

  for (int t = 1; t <= schedule.stages(); ++t) {
    AllocationVector alloc;
    if (t == 1) {
      alloc.assign(static_cast<std::size_t>(cfg.groups), 0.5);
    } else {
      alloc = assignment_probabilities(policy, state, cfg);
    }

    std::vector<Participant> batch;
    const int n_t = schedule.sizes[static_cast<std::size_t>(t - 1)];
    batch.reserve(static_cast<std::size_t>(n_t));
    for (int i = 0; i < n_t; ++i) {
      const PotentialOutcome po = source(outcome_rng);
      if (po.group < 0 || po.group >= cfg.groups)
        throw std::out_of_range("run_trial: outcome source produced a bad group index");
      const bool treated = bernoulli_draw(assign_rng, alloc[static_cast<std::size_t>(po.group)]);
      batch.push_back({po.group, treated, treated ? po.y_treated : po.y_control});
    }

    state.update(batch);
    state.advance_stage();
    result.stages.push_back({t, std::move(alloc), std::move(batch),
                             detail::snapshot_state(state, cfg)});
  }

  result.report = finalize_inference(state, cfg);
  return result;
}

// Replays a recorded trial and verifies that each stage's allocation is
// reproduced by the policy from prior history alone and satisfies every
// constraint of the stage's allocation program. Returns the number of
// violations found (0 for a sound record).
inline int audit_trial(const TrialResult& trial, const ExperimentConfig& cfg,
                       const DesignPolicy& policy) {
  constexpr double tol = 1e-8;
  int violations = 0;
  TrialState state(cfg.groups);
  for (const auto& record : trial.stages) {
    if (record.stage == 1) {
      for (double e : record.allocation)
        if (e != 0.5) ++violations;
    } else {
      const AllocationVector expected = assignment_probabilities(policy, state, cfg);
      if (expected != record.allocation) ++violations;
      if (policy.kind == DesignKind::fair_adaptive) {
        const AllocationProblem problem = fair_problem_from_state(state, cfg);
        if (constraint_violation(problem, record.allocation) > tol) ++violations;
      }
    }
    state.update(record.participants);
    state.advance_stage();
    if (state.stage() != record.stage) ++violations;
  }
  return violations;
}

}  // namespace fairexp
