#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairexp/config.hpp"
#include "fairexp/normal.hpp"
#include "fairexp/stats.hpp"

namespace fairexp {

// Variance of the group effect estimate, scaled so that the standard error
// is sqrt(v)/sqrt(N). Mean-difference scale:
//   (1/p)(var1/e + var0/(1-e))
// Log-relative-risk scale divides each arm term by the squared arm mean
// (delta method). Undefined while either arm is empty, or (log scale) when
// an arm mean is <= 0.
inline std::optional<double> group_variance_estimate(const TrialState& s, int j,
                                                     EffectScale scale) {
  const std::int64_t n1 = s.arm_count(j, true);
  const std::int64_t n0 = s.arm_count(j, false);
  if (n1 == 0 || n0 == 0) return std::nullopt;
  const double p_hat = *s.group_proportion(j);
  const double e_hat = *s.treated_fraction(j);
  double top1 = *s.arm_variance(j, true);
  double top0 = *s.arm_variance(j, false);
  if (scale == EffectScale::log_relative_risk) {
    const double m1 = *s.arm_mean(j, true);
    const double m0 = *s.arm_mean(j, false);
    if (!(m1 > 0.0) || !(m0 > 0.0)) return std::nullopt;
    top1 /= m1 * m1;
    top0 /= m0 * m0;
  }
  return (top1 / e_hat + top0 / (1.0 - e_hat)) / p_hat;
}

struct GroupInference {
  int group = 0;  // 0-based
  std::int64_t count = 0;
  double proportion = 0.0;
  std::optional<double> treated_fraction;
  std::optional<double> effect;
  std::optional<double> variance;  // v^2_j
  std::optional<double> ci_lo, ci_hi;
  bool reported = false;
  std::string flag;  // reason when not reported
};

struct OverallInference {
  double effect = 0.0;
  double variance = 0.0;  // v^2
  double ci_lo = 0.0, ci_hi = 0.0;
};

struct InferenceReport {
  std::vector<GroupInference> groups;
  std::optional<OverallInference> overall;
  std::string flag;  // set when groups had to be excluded from the overall
  std::int64_t sample_size = 0;
  double z = 0.0;  // normal quantile used for the intervals
};

// Final-stage inference: group effects with variances and confidence
// intervals, then the weighted overall effect. Groups with an empty arm (or
// a nonpositive arm mean on the log scale) are flagged and excluded; the
// remaining weights are renormalized for the overall estimate.
inline InferenceReport finalize_inference(const TrialState& s, const ExperimentConfig& cfg) {
  const int m = s.groups();
  InferenceReport report;
  report.sample_size = s.total_enrolled();
  report.z = normal_quantile(1.0 - cfg.alpha / 2.0);
  const double root_n = std::sqrt(static_cast<double>(report.sample_size));

  report.groups.resize(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    auto& g = report.groups[static_cast<std::size_t>(j)];
    g.group = j;
    g.count = s.group_count(j);
    g.proportion = report.sample_size > 0
                       ? static_cast<double>(g.count) / static_cast<double>(report.sample_size)
                       : 0.0;
    g.treated_fraction = s.treated_fraction(j);
    if (g.count == 0) {
      g.flag = "unobserved";
      continue;
    }
    if (s.arm_count(j, true) == 0 || s.arm_count(j, false) == 0) {
      g.flag = "empty_arm";
      continue;
    }
    g.effect = s.group_effect(j, cfg.effect_scale);
    g.variance = group_variance_estimate(s, j, cfg.effect_scale);
    if (!g.effect || !g.variance) {
      g.effect.reset();
      g.variance.reset();
      g.flag = "nonpositive_mean";
      continue;
    }
    const double half = report.z * std::sqrt(*g.variance) / root_n;
    g.ci_lo = *g.effect - half;
    g.ci_hi = *g.effect + half;
    g.reported = true;
  }

  // Overall effect over the reported groups.
  double weight_sum = 0.0;
  for (const auto& g : report.groups)
    if (g.reported) weight_sum += g.proportion;
  if (weight_sum <= 0.0) {
    report.flag = "no reported groups";
    return report;
  }
  for (const auto& g : report.groups) {
    if (!g.reported && g.count > 0) {
      report.flag = "overall excludes flagged groups";
      break;
    }
  }

  OverallInference overall;
  if (cfg.effect_scale == EffectScale::mean_difference) {
    double tau = 0.0;
    for (const auto& g : report.groups)
      if (g.reported) tau += (g.proportion / weight_sum) * *g.effect;
    double within = 0.0, between = 0.0;
    for (const auto& g : report.groups) {
      if (!g.reported) continue;
      const double w = g.proportion / weight_sum;
      // w^2 * v^2_j with the 1/p inside v^2_j rebased onto w.
      within += w * *g.variance * g.proportion;
      between += w * (*g.effect - tau) * (*g.effect - tau);
    }
    overall.effect = tau;
    overall.variance = within + between;
  } else {
    // Plug-in overall log relative risk with a delta-method variance; the
    // arm aggregates share the group-proportion randomness, hence the
    // covariance term.
    double mean1 = 0.0, mean0 = 0.0;
    for (const auto& g : report.groups) {
      if (!g.reported) continue;
      const double w = g.proportion / weight_sum;
      mean1 += w * *s.arm_mean(g.group, true);
      mean0 += w * *s.arm_mean(g.group, false);
    }
    double var1 = 0.0, var0 = 0.0, cov = 0.0;
    for (const auto& g : report.groups) {
      if (!g.reported) continue;
      const double w = g.proportion / weight_sum;
      const double d1 = *s.arm_mean(g.group, true) - mean1;
      const double d0 = *s.arm_mean(g.group, false) - mean0;
      var1 += w * (*s.arm_variance(g.group, true) / *g.treated_fraction + d1 * d1);
      var0 += w * (*s.arm_variance(g.group, false) / (1.0 - *g.treated_fraction) + d0 * d0);
      cov += w * d1 * d0;
    }
    overall.effect = std::log(mean1) - std::log(mean0);
    overall.variance = var1 / (mean1 * mean1) + var0 / (mean0 * mean0) -
                       2.0 * cov / (mean1 * mean0);
  }
  const double half = report.z * std::sqrt(overall.variance) / root_n;
  overall.ci_lo = overall.effect - half;
  overall.ci_hi = overall.effect + half;
  report.overall = overall;
  return report;
}

}  // namespace fairexp
