#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fairexp/config.hpp"

namespace fairexp {

using AllocationVector = std::vector<double>;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Per-group bound on the allocation probability implied by the welfare
// constraint log(e/(1-e)) * effect >= -delta, already intersected with the
// feasibility box [c2, 1-c2]. An unknown or zero effect leaves the box
// unconstrained. The result always contains 1/2.
inline Interval derive_welfare_box(std::optional<double> effect, double delta, double c2) {
  Interval box{c2, 1.0 - c2};
  if (!effect.has_value() || *effect == 0.0) return box;
  const double edge = logistic(-delta / *effect);
  if (*effect > 0.0) {
    box.lo = std::max(box.lo, edge);
  } else {
    box.hi = std::min(box.hi, edge);
  }
  return box;
}

// One instance of the allocation program: minimize
//   sum_j weights[j] * (var_treated[j]/e_j + var_control[j]/(1-e_j))
// over the envy window (|e_j - e_l| <= c1 for all pairs), the per-group
// welfare boxes, and the feasibility box [c2, 1-c2]. Groups flagged
// fixed_half are pinned at exactly 1/2 but still count in the envy
// constraints.
struct AllocationProblem {
  std::vector<double> weights;
  std::vector<double> var_treated;
  std::vector<double> var_control;
  std::vector<std::optional<double>> effect;  // empty = all unknown
  std::vector<char> fixed_half;               // empty = none fixed
  double delta = 0.0;
  double c1 = 0.2;
  double c2 = 0.1;

  int groups() const { return static_cast<int>(weights.size()); }
  std::optional<double> effect_at(int j) const {
    return effect.empty() ? std::nullopt : effect[static_cast<std::size_t>(j)];
  }
  bool fixed_at(int j) const {
    return !fixed_half.empty() && fixed_half[static_cast<std::size_t>(j)] != 0;
  }

  void validate() const {
    const std::size_t m = weights.size();
    if (m == 0) throw std::invalid_argument("AllocationProblem: no groups");
    if (var_treated.size() != m || var_control.size() != m)
      throw std::invalid_argument("AllocationProblem: variance vectors must match weights");
    if (!effect.empty() && effect.size() != m)
      throw std::invalid_argument("AllocationProblem: effect vector size mismatch");
    if (!fixed_half.empty() && fixed_half.size() != m)
      throw std::invalid_argument("AllocationProblem: fixed_half vector size mismatch");
    for (std::size_t j = 0; j < m; ++j) {
      if (!(weights[j] >= 0.0) || !std::isfinite(weights[j]))
        throw std::invalid_argument("AllocationProblem: weights must be finite and >= 0");
      if (!(var_treated[j] >= 0.0) || !std::isfinite(var_treated[j]) ||
          !(var_control[j] >= 0.0) || !std::isfinite(var_control[j]))
        throw std::invalid_argument("AllocationProblem: variances must be finite and >= 0");
      if (!effect.empty() && effect[j].has_value() && !std::isfinite(*effect[j]))
        throw std::invalid_argument("AllocationProblem: effects must be finite or unknown");
    }
    if (!(delta >= 0.0) || !std::isfinite(delta))
      throw std::invalid_argument("AllocationProblem: delta must be finite and >= 0");
    if (!(c1 > 0.0 && c1 < 1.0)) throw std::invalid_argument("AllocationProblem: c1 must lie in (0, 1)");
    if (!(c2 > 0.0 && c2 < 0.5)) throw std::invalid_argument("AllocationProblem: c2 must lie in (0, 1/2)");
  }

  // Degenerate coordinates are flat in the objective, so they are pinned at
  // the neutral 1/2 to keep the minimizer unique.
  bool pinned(int j) const {
    const auto k = static_cast<std::size_t>(j);
    return fixed_at(j) || weights[k] == 0.0 || var_treated[k] + var_control[k] == 0.0;
  }
};

namespace detail {
// v/x with the conventions the objective needs: a zero-variance term
// contributes nothing even at the boundary, a positive one diverges there.
inline double var_over(double v, double x) {
  if (v == 0.0) return 0.0;
  if (x <= 0.0) return std::numeric_limits<double>::infinity();
  return v / x;
}
}  // namespace detail

inline double objective(const AllocationProblem& p, std::span<const double> e) {
  double total = 0.0;
  for (int j = 0; j < p.groups(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    total += p.weights[k] * (detail::var_over(p.var_treated[k], e[k]) +
                             detail::var_over(p.var_control[k], 1.0 - e[k]));
  }
  return total;
}

// Largest constraint violation of e, measured in allocation units. Covers
// the feasibility box, every envy pair, the welfare boxes, and pinned
// coordinates. Zero (up to rounding) means feasible.
inline double constraint_violation(const AllocationProblem& p, std::span<const double> e) {
  const int m = p.groups();
  double worst = 0.0;
  for (int j = 0; j < m; ++j) {
    const double ej = e[static_cast<std::size_t>(j)];
    if (p.pinned(j)) {
      worst = std::max(worst, std::abs(ej - 0.5));
    } else {
      const Interval box = derive_welfare_box(p.effect_at(j), p.delta, p.c2);
      worst = std::max({worst, box.lo - ej, ej - box.hi});
    }
    worst = std::max({worst, p.c2 - ej, ej - (1.0 - p.c2)});
    for (int l = j + 1; l < m; ++l) {
      worst = std::max(worst, std::abs(ej - e[static_cast<std::size_t>(l)]) - p.c1);
    }
  }
  return worst;
}

struct SolveResult {
  AllocationVector e;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Exact solver. All pairwise envy constraints are equivalent to confining
// the coordinates to a window [z, z+c1]; for fixed z the program separates
// into per-group clamps of the Neyman point into (welfare box ∩ window),
// and the partially minimized value is convex in z. Bisection on its
// monotone subgradient finds the global optimum; the clamps make every
// constraint hold by construction. Deterministic bit-for-bit.
inline SolveResult solve(const AllocationProblem& p, const SolverOptions& opts = {}) {
  p.validate();
  if (!(opts.tol > 0.0)) throw std::invalid_argument("solve: tol must be > 0");
  if (opts.max_iterations < 1) throw std::invalid_argument("solve: max_iterations must be >= 1");

  const int m = p.groups();
  std::vector<double> lo(static_cast<std::size_t>(m)), hi(lo.size()), ney(lo.size());
  for (int j = 0; j < m; ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (p.pinned(j)) {
      lo[k] = hi[k] = ney[k] = 0.5;
      continue;
    }
    const Interval box = derive_welfare_box(p.effect_at(j), p.delta, p.c2);
    lo[k] = box.lo;
    hi[k] = box.hi;
    const double s1 = std::sqrt(p.var_treated[k]);
    const double s0 = std::sqrt(p.var_control[k]);
    ney[k] = s1 / (s1 + s0);  // s1 + s0 > 0 since the coordinate is not pinned
  }

  // Every per-group box contains 1/2, so the window range is never empty.
  double z_lo = -1.0, z_hi = 2.0;
  for (int j = 0; j < m; ++j) {
    const auto k = static_cast<std::size_t>(j);
    z_lo = std::max(z_lo, lo[k] - p.c1);
    z_hi = std::min(z_hi, hi[k]);
  }

  auto coordinates = [&](double z, std::span<double> e) {
    for (int j = 0; j < m; ++j) {
      const auto k = static_cast<std::size_t>(j);
      const double a = std::max(lo[k], z);
      const double b = std::min(hi[k], z + p.c1);
      e[k] = std::clamp(ney[k], a, b);
    }
  };
  auto slope = [&](int j, double e) {
    const auto k = static_cast<std::size_t>(j);
    return p.weights[k] * (-p.var_treated[k] / (e * e) +
                           p.var_control[k] / ((1.0 - e) * (1.0 - e)));
  };
  // Subgradient of the window value function: only free coordinates dragged
  // by a moving window edge contribute.
  auto window_slope = [&](double z) {
    double d = 0.0;
    for (int j = 0; j < m; ++j) {
      if (p.pinned(j)) continue;
      const auto k = static_cast<std::size_t>(j);
      const double a = std::max(lo[k], z);
      const double b = std::min(hi[k], z + p.c1);
      if (ney[k] <= a) {
        if (z >= lo[k]) d += slope(j, a);
      } else if (ney[k] >= b) {
        if (z + p.c1 <= hi[k]) d += slope(j, b);
      }
    }
    return d;
  };

  constexpr double width_floor = 1e-15;
  int iterations = 0;
  bool converged = true;
  double z;
  if (window_slope(z_lo) >= 0.0) {
    z = z_lo;
  } else if (window_slope(z_hi) <= 0.0) {
    z = z_hi;
  } else {
    while (z_hi - z_lo > width_floor && iterations < opts.max_iterations) {
      const double mid = 0.5 * (z_lo + z_hi);
      if (window_slope(mid) < 0.0) {
        z_lo = mid;
      } else {
        z_hi = mid;
      }
      ++iterations;
    }
    z = 0.5 * (z_lo + z_hi);
    converged = (z_hi - z_lo) <= std::max(opts.tol, width_floor);
  }

  SolveResult result;
  result.e.resize(static_cast<std::size_t>(m));
  coordinates(z, result.e);
  result.objective = objective(p, result.e);
  result.iterations = iterations;
  result.converged = converged;
  return result;
}

struct GridResult {
  AllocationVector e;
  double objective = 0.0;
};

namespace detail {

// Index of the best grid value for one coordinate over a contiguous index
// range. The per-coordinate objective is convex, so the restricted argmin is
// the continuous minimizer's neighbor clamped into the range.
struct GridAxis {
  std::vector<double> value;  // grid points
  std::vector<double> cost;   // per-coordinate objective at each point
  long first = 0, last = -1;  // allowed index range (welfare ∩ feasibility ∩ pinned-envy)
  long best = 0;              // argmin of cost over [first, last]

  bool empty() const { return last < first; }
  long clamp_best(long a, long b) const {
    const long i = std::clamp(best, a, b);
    return i;
  }
};

}  // namespace detail

// Exhaustive reference search over the grid {c2, c2+step, ..., 1-c2}^m,
// filtered by all constraints. Test oracle: independent of solve(). Groups
// pinned at 1/2 keep exactly that value. At most three free coordinates.
inline GridResult grid_oracle(const AllocationProblem& p, double step) {
  p.validate();
  if (!(step > 0.0)) throw std::invalid_argument("grid_oracle: step must be > 0");

  const int m = p.groups();
  std::vector<int> free;
  double pinned_cost = 0.0;
  bool any_pinned = false;
  for (int j = 0; j < m; ++j) {
    if (p.pinned(j)) {
      any_pinned = true;
      const auto k = static_cast<std::size_t>(j);
      pinned_cost += p.weights[k] * 2.0 * (p.var_treated[k] + p.var_control[k]);
    } else {
      free.push_back(j);
    }
  }
  if (free.size() > 3)
    throw std::invalid_argument("grid_oracle: more than three free groups");

  const long npts = static_cast<long>(std::floor((1.0 - 2.0 * p.c2) / step + 1e-9)) + 1;
  auto grid_value = [&](long i) { return p.c2 + static_cast<double>(i) * step; };

  std::vector<detail::GridAxis> axes(free.size());
  for (std::size_t d = 0; d < free.size(); ++d) {
    const int j = free[d];
    const auto k = static_cast<std::size_t>(j);
    auto& ax = axes[d];
    ax.value.resize(static_cast<std::size_t>(npts));
    ax.cost.resize(static_cast<std::size_t>(npts));
    for (long i = 0; i < npts; ++i) {
      const double e = grid_value(i);
      ax.value[static_cast<std::size_t>(i)] = e;
      ax.cost[static_cast<std::size_t>(i)] =
          p.weights[k] * (detail::var_over(p.var_treated[k], e) +
                          detail::var_over(p.var_control[k], 1.0 - e));
    }
    Interval box = derive_welfare_box(p.effect_at(j), p.delta, p.c2);
    if (any_pinned) {  // envy against the groups pinned at 1/2
      box.lo = std::max(box.lo, 0.5 - p.c1);
      box.hi = std::min(box.hi, 0.5 + p.c1);
    }
    constexpr double edge = 1e-12;  // keep boundary ties feasible
    ax.first = 0;
    ax.last = npts - 1;
    while (ax.first < npts && ax.value[static_cast<std::size_t>(ax.first)] < box.lo - edge) ++ax.first;
    while (ax.last >= 0 && ax.value[static_cast<std::size_t>(ax.last)] > box.hi + edge) --ax.last;
    if (ax.empty()) throw std::runtime_error("grid_oracle: empty grid slice for a group");
    ax.best = ax.first;
    for (long i = ax.first + 1; i <= ax.last; ++i) {
      if (ax.cost[static_cast<std::size_t>(i)] < ax.cost[static_cast<std::size_t>(ax.best)]) ax.best = i;
    }
  }

  // Index range of axis `ax` compatible with envy around [emin, emax];
  // boundary ties stay feasible.
  auto envy_range = [&](const detail::GridAxis& ax, double emin, double emax, long& a, long& b) {
    constexpr double edge = 1e-12;
    a = std::max(ax.first, static_cast<long>(std::ceil((emax - p.c1 - p.c2) / step - 1e-9)) - 1);
    b = std::min(ax.last, static_cast<long>(std::floor((emin + p.c1 - p.c2) / step + 1e-9)) + 1);
    while (a <= b && ax.value[static_cast<std::size_t>(a)] < emax - p.c1 - edge) ++a;
    while (a <= b && ax.value[static_cast<std::size_t>(b)] > emin + p.c1 + edge) --b;
  };

  GridResult best;
  best.objective = std::numeric_limits<double>::infinity();
  AllocationVector e(static_cast<std::size_t>(m), 0.5);
  auto commit = [&](double cost) {
    if (cost < best.objective) {
      best.objective = cost;
      best.e = e;
    }
  };

  if (free.empty()) {
    best.e = e;
    best.objective = pinned_cost;
    return best;
  }

  const auto& ax0 = axes[0];
  for (long i0 = ax0.first; i0 <= ax0.last; ++i0) {
    const double e0 = ax0.value[static_cast<std::size_t>(i0)];
    const double f0 = pinned_cost + ax0.cost[static_cast<std::size_t>(i0)];
    e[static_cast<std::size_t>(free[0])] = e0;
    if (free.size() == 1) {
      commit(f0);
      continue;
    }
    const auto& ax1 = axes[1];
    long a1, b1;
    envy_range(ax1, e0, e0, a1, b1);
    if (free.size() == 2) {
      if (a1 > b1) continue;
      const long i1 = ax1.clamp_best(a1, b1);
      e[static_cast<std::size_t>(free[1])] = ax1.value[static_cast<std::size_t>(i1)];
      commit(f0 + ax1.cost[static_cast<std::size_t>(i1)]);
      continue;
    }
    for (long i1 = a1; i1 <= b1; ++i1) {
      const double e1 = ax1.value[static_cast<std::size_t>(i1)];
      const auto& ax2 = axes[2];
      long a2, b2;
      envy_range(ax2, std::min(e0, e1), std::max(e0, e1), a2, b2);
      if (a2 > b2) continue;
      const long i2 = ax2.clamp_best(a2, b2);
      e[static_cast<std::size_t>(free[1])] = e1;
      e[static_cast<std::size_t>(free[2])] = ax2.value[static_cast<std::size_t>(i2)];
      commit(f0 + ax1.cost[static_cast<std::size_t>(i1)] + ax2.cost[static_cast<std::size_t>(i2)]);
    }
  }
  if (!std::isfinite(best.objective) && best.e.empty())
    throw std::runtime_error("grid_oracle: no feasible grid point");
  return best;
}

}  // namespace fairexp
