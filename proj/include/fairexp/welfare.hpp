#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "fairexp/config.hpp"
#include "fairexp/inference.hpp"
#include "fairexp/stats.hpp"

namespace fairexp {

// Welfare slack schedule: shrinks to zero, so the constraint tightens to the
// strict sign condition as evidence accumulates.
inline double delta_schedule(std::int64_t n) {
  if (n < 1) return 0.0;
  const double x = static_cast<double>(n);
  return std::sqrt(std::log(x) / x);
}

// Effect and slack entering one group's welfare box.
struct WelfareTerm {
  std::optional<double> effect;
  double delta = 0.0;
};

// Per-group welfare inputs for the next allocation solve. In recommended
// mode the raw group effect is compared against delta = sqrt(log N / N); in
// t_statistic mode the effect is studentized by the estimated sd of the
// group effect and compared against the same threshold; custom mode uses a
// fixed constant. A group whose sd is zero or undefined in t_statistic mode
// gets an unknown effect (welfare box left open).
inline std::vector<WelfareTerm> welfare_slack(const TrialState& s, const ExperimentConfig& cfg) {
  const double delta = cfg.delta_mode == DeltaMode::custom
                           ? cfg.delta_custom
                           : delta_schedule(s.total_enrolled());
  std::vector<WelfareTerm> terms(static_cast<std::size_t>(s.groups()));
  for (int j = 0; j < s.groups(); ++j) {
    auto& term = terms[static_cast<std::size_t>(j)];
    term.delta = delta;
    term.effect = s.group_effect(j, cfg.effect_scale);
    if (cfg.delta_mode == DeltaMode::t_statistic && term.effect.has_value()) {
      const auto v2 = group_variance_estimate(s, j, cfg.effect_scale);
      if (v2.has_value() && *v2 > 0.0) {
        term.effect = *term.effect / std::sqrt(*v2);
      } else {
        term.effect.reset();
      }
    }
  }
  return terms;
}

}  // namespace fairexp
