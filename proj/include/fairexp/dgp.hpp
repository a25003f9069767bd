#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fairexp/config.hpp"
#include "fairexp/designs.hpp"
#include "fairexp/engine.hpp"
#include "fairexp/rng.hpp"

namespace fairexp {

enum class OutcomeModel { gaussian, bernoulli, table };

// Discrete outcome distribution for one (group, arm) cell of a table DGP.
struct ArmDistribution {
  std::vector<double> values;
  std::vector<double> probs;

  double mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[i] * probs[i];
    return s;
  }
  double variance() const {
    const double m = mean();
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += probs[i] * (values[i] - m) * (values[i] - m);
    return s;
  }
};

// Data-generating process: group proportions plus per-(group, arm) outcome
// distributions. Gaussian cells are parameterized by mean and standard
// deviation, bernoulli cells by the mean alone.
struct DgpSpec {
  OutcomeModel kind = OutcomeModel::gaussian;
  std::vector<double> proportions;  // all > 0, sums to 1
  std::vector<double> mean_treated, mean_control;
  std::vector<double> sd_treated, sd_control;                // gaussian
  std::vector<ArmDistribution> table_treated, table_control;  // table

  int groups() const { return static_cast<int>(proportions.size()); }

  void validate() const {
    const std::size_t m = proportions.size();
    if (m == 0) throw std::invalid_argument("DgpSpec: no groups");
    double total = 0.0;
    for (double p : proportions) {
      if (!(p > 0.0)) throw std::invalid_argument("DgpSpec: proportions must be > 0");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("DgpSpec: proportions must sum to 1");
    if (kind == OutcomeModel::table) {
      if (table_treated.size() != m || table_control.size() != m)
        throw std::invalid_argument("DgpSpec: table size mismatch");
      for (const auto* side : {&table_treated, &table_control}) {
        for (const auto& arm : *side) {
          if (arm.values.empty() || arm.values.size() != arm.probs.size())
            throw std::invalid_argument("DgpSpec: malformed outcome table");
          double q = 0.0;
          for (std::size_t i = 0; i < arm.probs.size(); ++i) {
            if (!(arm.probs[i] >= 0.0) || !std::isfinite(arm.values[i]))
              throw std::invalid_argument("DgpSpec: malformed outcome table");
            q += arm.probs[i];
          }
          if (std::abs(q - 1.0) > 1e-9)
            throw std::invalid_argument("DgpSpec: table probabilities must sum to 1");
        }
      }
      return;
    }
    if (mean_treated.size() != m || mean_control.size() != m)
      throw std::invalid_argument("DgpSpec: mean vectors must match proportions");
    if (kind == OutcomeModel::bernoulli) {
      for (const auto* side : {&mean_treated, &mean_control})
        for (double mu : *side)
          if (!(mu >= 0.0 && mu <= 1.0))
            throw std::invalid_argument("DgpSpec: bernoulli means must lie in [0, 1]");
    } else {
      if (sd_treated.size() != m || sd_control.size() != m)
        throw std::invalid_argument("DgpSpec: sd vectors must match proportions");
      for (const auto* side : {&sd_treated, &sd_control})
        for (double sd : *side)
          if (!(sd > 0.0)) throw std::invalid_argument("DgpSpec: gaussian scales must be > 0");
    }
  }

  double arm_mean(int j, bool treated) const {
    const auto k = static_cast<std::size_t>(j);
    if (kind == OutcomeModel::table)
      return (treated ? table_treated : table_control)[k].mean();
    return (treated ? mean_treated : mean_control)[k];
  }
  double arm_variance(int j, bool treated) const {
    const auto k = static_cast<std::size_t>(j);
    switch (kind) {
      case OutcomeModel::gaussian: {
        const double sd = (treated ? sd_treated : sd_control)[k];
        return sd * sd;
      }
      case OutcomeModel::bernoulli: {
        const double mu = (treated ? mean_treated : mean_control)[k];
        return mu * (1.0 - mu);
      }
      case OutcomeModel::table:
        return (treated ? table_treated : table_control)[k].variance();
    }
    return 0.0;
  }
};

namespace detail {
inline double draw_table(const ArmDistribution& arm, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < arm.values.size(); ++i) {
    acc += arm.probs[i];
    if (u < acc) return arm.values[i];
  }
  return arm.values.back();
}
}  // namespace detail

// Samples a group from the proportions and both potential outcomes (control
// first, then treated; the engine reveals only one).
inline PotentialOutcome draw(const DgpSpec& dgp, Rng& rng) {
  const double u = uniform01(rng);
  int group = dgp.groups() - 1;
  double acc = 0.0;
  for (int j = 0; j + 1 < dgp.groups(); ++j) {
    acc += dgp.proportions[static_cast<std::size_t>(j)];
    if (u < acc) {
      group = j;
      break;
    }
  }
  PotentialOutcome po;
  po.group = group;
  const auto k = static_cast<std::size_t>(group);
  switch (dgp.kind) {
    case OutcomeModel::gaussian:
      po.y_control = dgp.mean_control[k] + dgp.sd_control[k] * normal_draw(rng);
      po.y_treated = dgp.mean_treated[k] + dgp.sd_treated[k] * normal_draw(rng);
      break;
    case OutcomeModel::bernoulli:
      po.y_control = bernoulli_draw(rng, dgp.mean_control[k]) ? 1.0 : 0.0;
      po.y_treated = bernoulli_draw(rng, dgp.mean_treated[k]) ? 1.0 : 0.0;
      break;
    case OutcomeModel::table:
      po.y_control = detail::draw_table(dgp.table_control[k], rng);
      po.y_treated = detail::draw_table(dgp.table_treated[k], rng);
      break;
  }
  return po;
}

inline OutcomeSource make_outcome_source(DgpSpec dgp) {
  dgp.validate();
  return [dgp = std::move(dgp)](Rng& rng) { return draw(dgp, rng); };
}

// Analytic group effects on the requested scale; entries are unknown on the
// log scale when an arm mean is <= 0.
inline std::vector<std::optional<double>> true_group_effects(const DgpSpec& dgp,
                                                             EffectScale scale) {
  std::vector<std::optional<double>> out(static_cast<std::size_t>(dgp.groups()));
  for (int j = 0; j < dgp.groups(); ++j) {
    const double m1 = dgp.arm_mean(j, true);
    const double m0 = dgp.arm_mean(j, false);
    if (scale == EffectScale::mean_difference) {
      out[static_cast<std::size_t>(j)] = m1 - m0;
    } else if (m1 > 0.0 && m0 > 0.0) {
      out[static_cast<std::size_t>(j)] = std::log(m1) - std::log(m0);
    }
  }
  return out;
}

inline std::optional<double> true_overall_effect(const DgpSpec& dgp, EffectScale scale) {
  double m1 = 0.0, m0 = 0.0, diff = 0.0;
  for (int j = 0; j < dgp.groups(); ++j) {
    const double p = dgp.proportions[static_cast<std::size_t>(j)];
    m1 += p * dgp.arm_mean(j, true);
    m0 += p * dgp.arm_mean(j, false);
    diff += p * (dgp.arm_mean(j, true) - dgp.arm_mean(j, false));
  }
  if (scale == EffectScale::mean_difference) return diff;
  if (m1 > 0.0 && m0 > 0.0) return std::log(m1) - std::log(m0);
  return std::nullopt;
}

// True parameters packaged for the oracle designs and the oracle allocation.
inline OracleParams true_params(const DgpSpec& dgp, EffectScale scale) {
  OracleParams o;
  o.weights = dgp.proportions;
  o.effect = true_group_effects(dgp, scale);
  o.var_treated.resize(static_cast<std::size_t>(dgp.groups()));
  o.var_control.resize(static_cast<std::size_t>(dgp.groups()));
  for (int j = 0; j < dgp.groups(); ++j) {
    o.var_treated[static_cast<std::size_t>(j)] = dgp.arm_variance(j, true);
    o.var_control[static_cast<std::size_t>(j)] = dgp.arm_variance(j, false);
  }
  return o;
}

}  // namespace fairexp
