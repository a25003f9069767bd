#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fairexp/config.hpp"

namespace fairexp {

// Welford accumulator. variance() uses the population divisor m2/n, matching
// the batch definitions the trial estimators are built on.
class RunningStats {
 public:
  void push(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  std::int64_t count() const { return n_; }
  double mean() const { return mean_; }  // meaningful only when count() >= 1
  double variance() const {
    return n_ > 0 ? std::max(0.0, m2_) / static_cast<double>(n_) : 0.0;
  }

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// All accumulated evidence of one trial: an m x 2 grid of per-(group, arm)
// accumulators plus a completed-stage counter. Single writer; reads are safe
// between updates.
class TrialState {
 public:
  explicit TrialState(int groups) : m_(groups) {
    if (groups < 1) throw std::invalid_argument("TrialState: groups must be >= 1");
    cells_.resize(static_cast<std::size_t>(groups) * 2);
  }

  int groups() const { return m_; }
  int stage() const { return stage_; }
  void advance_stage() { ++stage_; }

  const RunningStats& cell(int group, bool treated) const {
    return cells_[index(group, treated)];
  }
  std::int64_t arm_count(int group, bool treated) const {
    return cell(group, treated).count();
  }
  std::int64_t group_count(int group) const {
    return arm_count(group, true) + arm_count(group, false);
  }
  std::int64_t total_enrolled() const {
    std::int64_t n = 0;
    for (const auto& c : cells_) n += c.count();
    return n;
  }

  std::optional<double> arm_mean(int group, bool treated) const {
    const auto& c = cell(group, treated);
    if (c.count() == 0) return std::nullopt;
    return c.mean();
  }
  std::optional<double> arm_variance(int group, bool treated) const {
    const auto& c = cell(group, treated);
    if (c.count() == 0) return std::nullopt;
    return c.variance();
  }

  std::optional<double> group_proportion(int group) const {
    const std::int64_t n = total_enrolled();
    if (n == 0) return std::nullopt;
    return static_cast<double>(group_count(group)) / static_cast<double>(n);
  }

  // Realized treated fraction within the group.
  std::optional<double> treated_fraction(int group) const {
    const std::int64_t n = group_count(group);
    if (n == 0) return std::nullopt;
    return static_cast<double>(arm_count(group, true)) / static_cast<double>(n);
  }

  // Group treatment effect on the requested scale. Undefined while either
  // arm is empty, or on the log scale when either arm mean is <= 0.
  std::optional<double> group_effect(int group, EffectScale scale) const {
    const auto& t = cell(group, true);
    const auto& c = cell(group, false);
    if (t.count() == 0 || c.count() == 0) return std::nullopt;
    if (scale == EffectScale::mean_difference) return t.mean() - c.mean();
    if (!(t.mean() > 0.0) || !(c.mean() > 0.0)) return std::nullopt;
    return std::log(t.mean()) - std::log(c.mean());
  }

  // Folds a batch into the state. The whole batch is validated first, so a
  // bad participant leaves the state untouched.
  void update(std::span<const Participant> batch) {
    for (const auto& p : batch) {
      if (p.group < 0 || p.group >= m_)
        throw std::out_of_range("TrialState::update: group index out of range");
      if (!std::isfinite(p.outcome))
        throw std::invalid_argument("TrialState::update: outcome must be finite");
    }
    for (const auto& p : batch) cells_[index(p.group, p.treated)].push(p.outcome);
  }

 private:
  std::size_t index(int group, bool treated) const {
    if (group < 0 || group >= m_) throw std::out_of_range("TrialState: group index");
    return static_cast<std::size_t>(group) * 2 + (treated ? 1 : 0);
  }

  int m_;
  int stage_ = 0;
  std::vector<RunningStats> cells_;
};

}  // namespace fairexp
