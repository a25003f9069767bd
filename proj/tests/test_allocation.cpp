#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "fairexp/allocation.hpp"
#include "fairexp/rng.hpp"

using namespace fairexp;

namespace {

AllocationProblem two_group_oracle_problem() {
  AllocationProblem p;
  p.weights = {0.5, 0.5};
  p.var_treated = {6.25, 1.44};   // sd 2.5, 1.2
  p.var_control = {2.25, 12.25};  // sd 1.5, 3.5
  p.effect = {-3.0, 2.0};
  p.delta = 0.0;
  p.c1 = 0.2;
  p.c2 = 0.1;
  return p;
}

AllocationProblem random_problem(Rng& rng, int m) {
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  AllocationProblem p;
  for (int j = 0; j < m; ++j) {
    p.weights.push_back(u(0.1, 1.0));
    p.var_treated.push_back(u(0.1, 16.0));
    p.var_control.push_back(u(0.1, 16.0));
    p.effect.push_back(u(-4.0, 4.0));
  }
  p.delta = (rng() & 1) ? 0.2 : 0.0;
  const double c1s[] = {0.1, 0.2, 0.5};
  p.c1 = c1s[rng() % 3];
  p.c2 = (rng() & 1) ? 0.05 : 0.1;
  return p;
}

// Rescale so the objective at the all-1/2 vector equals 10; keeps the
// minimizer and all constraints unchanged.
void normalize_scale(AllocationProblem& p) {
  const std::vector<double> half(p.weights.size(), 0.5);
  const double at_half = objective(p, half);
  for (auto& w : p.weights) w *= 10.0 / at_half;
}

// Plain exhaustive enumeration, used to vouch for grid_oracle itself. Same
// grid points and the same boundary-tie tolerance, so the two searches are
// comparable point for point.
GridResult naive_grid(const AllocationProblem& p, double step) {
  constexpr double edge = 1e-12;
  const int m = p.groups();
  const long npts = static_cast<long>(std::floor((1.0 - 2.0 * p.c2) / step + 1e-9)) + 1;
  std::vector<std::vector<double>> axis(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    if (p.pinned(j)) {
      axis[static_cast<std::size_t>(j)] = {0.5};
      continue;
    }
    for (long i = 0; i < npts; ++i)
      axis[static_cast<std::size_t>(j)].push_back(p.c2 + static_cast<double>(i) * step);
  }
  auto feasible = [&](const std::vector<double>& e) {
    for (int j = 0; j < m; ++j) {
      const auto k = static_cast<std::size_t>(j);
      if (!p.pinned(j)) {
        const Interval box = derive_welfare_box(p.effect_at(j), p.delta, p.c2);
        if (e[k] < box.lo - edge || e[k] > box.hi + edge) return false;
      }
      for (int l = 0; l < j; ++l)
        if (std::abs(e[k] - e[static_cast<std::size_t>(l)]) > p.c1 + edge) return false;
    }
    return true;
  };
  GridResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> idx(static_cast<std::size_t>(m), 0);
  std::vector<double> e(static_cast<std::size_t>(m));
  while (true) {
    for (int j = 0; j < m; ++j) e[static_cast<std::size_t>(j)] = axis[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
    if (feasible(e)) {
      const double f = objective(p, e);
      if (f < best.objective) {
        best.objective = f;
        best.e = e;
      }
    }
    int j = 0;
    while (j < m && ++idx[static_cast<std::size_t>(j)] == axis[static_cast<std::size_t>(j)].size()) {
      idx[static_cast<std::size_t>(j)] = 0;
      ++j;
    }
    if (j == m) break;
  }
  return best;
}

}  // namespace

TEST_CASE("welfare boxes") {
  // positive effect with no slack forces e >= 1/2
  auto box = derive_welfare_box(2.0, 0.0, 0.1);
  REQUIRE(box.lo == 0.5);
  REQUIRE(box.hi == 0.9);

  // zero or unknown effect leaves the feasibility box
  box = derive_welfare_box(0.0, 0.1, 0.1);
  REQUIRE(box.lo == 0.1);
  REQUIRE(box.hi == 0.9);
  box = derive_welfare_box(std::nullopt, 0.0, 0.05);
  REQUIRE(box.lo == 0.05);
  REQUIRE(box.hi == 0.95);

  // slack relaxes the bound to logistic(-delta/effect); the original
  // inequality holds with equality at the edge
  box = derive_welfare_box(2.0, 0.1, 0.1);
  REQUIRE_THAT(box.lo, Catch::Matchers::WithinAbs(0.4875026035157896, 1e-14));
  REQUIRE_THAT(std::log(box.lo / (1.0 - box.lo)) * 2.0, Catch::Matchers::WithinAbs(-0.1, 1e-12));

  box = derive_welfare_box(-2.0, 0.1, 0.1);
  REQUIRE_THAT(box.hi, Catch::Matchers::WithinAbs(0.5124973964842104, 1e-14));
  REQUIRE_THAT(std::log(box.hi / (1.0 - box.hi)) * -2.0, Catch::Matchers::WithinAbs(-0.1, 1e-12));

  // every box contains 1/2
  Rng rng(7u);
  for (int i = 0; i < 100; ++i) {
    const double eff = -6.0 + 12.0 * uniform01(rng);
    const double delta = 0.5 * uniform01(rng);
    box = derive_welfare_box(eff, delta, 0.02 + 0.4 * uniform01(rng));
    REQUIRE(box.lo <= 0.5);
    REQUIRE(box.hi >= 0.5);
  }
}

TEST_CASE("objective evaluation") {
  AllocationProblem p;
  p.weights = {1.0};
  p.var_treated = {1.0};
  p.var_control = {1.0};
  const std::vector<double> half{0.5};
  REQUIRE(objective(p, half) == 4.0);

  const auto two_group = two_group_oracle_problem();
  const std::vector<double> both_half{0.5, 0.5};
  REQUIRE_THAT(objective(two_group, both_half), Catch::Matchers::WithinAbs(22.19, 1e-12));

  // boundary with positive variance diverges; zero variance contributes nothing
  const std::vector<double> edge{0.0};
  REQUIRE(std::isinf(objective(p, edge)));
  p.var_treated = {0.0};
  p.var_control = {0.0};
  REQUIRE(objective(p, edge) == 0.0);
}

TEST_CASE("objective is convex along segments") {
  Rng rng(99u);
  for (int i = 0; i < 50; ++i) {
    const int m = 1 + static_cast<int>(rng() % 3);
    const auto p = random_problem(rng, m);
    std::vector<double> a(static_cast<std::size_t>(m)), b(a.size()), mid(a.size());
    for (int j = 0; j < m; ++j) {
      a[static_cast<std::size_t>(j)] = 0.05 + 0.9 * uniform01(rng);
      b[static_cast<std::size_t>(j)] = 0.05 + 0.9 * uniform01(rng);
      mid[static_cast<std::size_t>(j)] = 0.5 * (a[static_cast<std::size_t>(j)] + b[static_cast<std::size_t>(j)]);
    }
    REQUIRE(objective(p, mid) <= 0.5 * (objective(p, a) + objective(p, b)) + 1e-9);
  }
}

TEST_CASE("single group solves to the clipped interior optimum") {
  AllocationProblem p;
  p.weights = {1.0};
  p.var_treated = {6.25};
  p.var_control = {2.25};
  p.c2 = 0.1;
  const auto res = solve(p);
  REQUIRE(res.converged);
  REQUIRE_THAT(res.e[0], Catch::Matchers::WithinAbs(0.625, 1e-12));

  const auto grid = grid_oracle(p, 1e-3);
  REQUIRE(std::abs(grid.e[0] - 0.625) <= 1e-3);
  REQUIRE(res.objective <= grid.objective + 1e-9);

  // clipped at the feasibility edge when the optimum is outside
  p.var_treated = {16.0};
  p.var_control = {0.01};
  REQUIRE_THAT(solve(p).e[0], Catch::Matchers::WithinAbs(0.9, 1e-12));
}

TEST_CASE("opposite welfare bounds pin the two-group oracle at one half") {
  const auto p = two_group_oracle_problem();
  const auto res = solve(p);
  REQUIRE(res.converged);
  REQUIRE_THAT(res.e[0], Catch::Matchers::WithinAbs(0.5, 1e-9));
  REQUIRE_THAT(res.e[1], Catch::Matchers::WithinAbs(0.5, 1e-9));
  REQUIRE(constraint_violation(p, res.e) <= 1e-12);

  const auto grid = grid_oracle(p, 1e-3);
  REQUIRE(res.objective <= grid.objective + 1e-9);
}

TEST_CASE("symmetric groups move together") {
  AllocationProblem p;
  p.weights = {0.5, 0.5};
  p.var_treated = {4.0, 4.0};
  p.var_control = {1.0, 1.0};
  p.effect = {0.0, 0.0};
  const auto res = solve(p);
  REQUIRE_THAT(res.e[0], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  REQUIRE(res.e[0] == res.e[1]);
}

TEST_CASE("grid oracle fixed-half handling") {
  AllocationProblem p;
  p.weights = {0.3, 0.7};
  p.var_treated = {1.0, 2.0};
  p.var_control = {1.0, 1.0};
  p.fixed_half = {1, 1};
  const auto grid = grid_oracle(p, 1e-3);
  REQUIRE(grid.e == std::vector<double>{0.5, 0.5});
  REQUIRE(solve(p).e == grid.e);
}

TEST_CASE("grid oracle agrees with plain enumeration") {
  Rng rng(4242u);
  for (int i = 0; i < 12; ++i) {
    const int m = 1 + i % 3;
    auto p = random_problem(rng, m);
    if (i % 4 == 0 && m > 1) p.fixed_half.assign(static_cast<std::size_t>(m), 0), p.fixed_half[0] = 1;
    const auto fast = grid_oracle(p, 0.01);
    const auto slow = naive_grid(p, 0.01);
    REQUIRE_THAT(fast.objective, Catch::Matchers::WithinAbs(slow.objective, 1e-12));
    for (int j = 0; j < m; ++j)
      REQUIRE_THAT(fast.e[static_cast<std::size_t>(j)],
                   Catch::Matchers::WithinAbs(slow.e[static_cast<std::size_t>(j)], 1e-12));
  }
}

TEST_CASE("solver matches the grid oracle on random problems") {
  Rng rng(20240812u);
  for (int i = 0; i < 25; ++i) {
    const int m = 1 + i % 3;
    auto p = random_problem(rng, m);
    normalize_scale(p);
    const auto res = solve(p);
    REQUIRE(res.converged);
    REQUIRE(constraint_violation(p, res.e) <= 1e-8);
    const auto grid = grid_oracle(p, 2e-3);
    REQUIRE(res.objective <= grid.objective + 1e-4);
  }
}

TEST_CASE("all-1/2 is always feasible") {
  Rng rng(17u);
  for (int i = 0; i < 60; ++i) {
    const int m = 1 + static_cast<int>(rng() % 3);
    const auto p = random_problem(rng, m);
    const std::vector<double> half(static_cast<std::size_t>(m), 0.5);
    REQUIRE(constraint_violation(p, half) <= 0.0);
  }
}

TEST_CASE("welfare signs bind around one half when the slack is zero") {
  Rng rng(31u);
  for (int i = 0; i < 40; ++i) {
    const int m = 1 + static_cast<int>(rng() % 3);
    auto p = random_problem(rng, m);
    p.delta = 0.0;
    const auto res = solve(p);
    for (int j = 0; j < m; ++j) {
      const auto k = static_cast<std::size_t>(j);
      if (*p.effect[k] > 0.0) REQUIRE(res.e[k] >= 0.5 - 1e-8);
      if (*p.effect[k] < 0.0) REQUIRE(res.e[k] <= 0.5 + 1e-8);
    }
  }
}

TEST_CASE("no feasible point beats the solver, any group count") {
  // Feasible points sampled directly: pick a window position z, then each
  // coordinate uniformly inside (welfare box ∩ window). Every feasible vector
  // arises this way (take z = min_j e_j), so this probes global optimality
  // without the grid oracle's three-group limit.
  Rng rng(0xbeefu);
  for (int i = 0; i < 20; ++i) {
    const int m = 1 + static_cast<int>(rng() % 6);
    const auto p = random_problem(rng, m);
    const auto res = solve(p);
    REQUIRE(constraint_violation(p, res.e) <= 1e-8);

    double z_lo = -1.0, z_hi = 2.0;
    std::vector<Interval> box(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      const auto k = static_cast<std::size_t>(j);
      box[k] = derive_welfare_box(p.effect_at(j), p.delta, p.c2);
      z_lo = std::max(z_lo, box[k].lo - p.c1);
      z_hi = std::min(z_hi, box[k].hi);
    }
    std::vector<double> e(static_cast<std::size_t>(m));
    for (int draw = 0; draw < 400; ++draw) {
      const double z = z_lo + (z_hi - z_lo) * uniform01(rng);
      for (int j = 0; j < m; ++j) {
        const auto k = static_cast<std::size_t>(j);
        const double a = std::max(box[k].lo, z);
        const double b = std::min(box[k].hi, z + p.c1);
        e[k] = a + (b - a) * uniform01(rng);
      }
      REQUIRE(res.objective <= objective(p, e) + 1e-9);
    }
  }
}

TEST_CASE("solver is deterministic bit for bit") {
  Rng rng(5150u);
  const auto p = random_problem(rng, 3);
  const auto a = solve(p);
  const auto b = solve(p);
  REQUIRE(a.e.size() == b.e.size());
  REQUIRE(std::memcmp(a.e.data(), b.e.data(), a.e.size() * sizeof(double)) == 0);
  REQUIRE(a.objective == b.objective);
}

TEST_CASE("iteration cap reports non-convergence with a feasible iterate") {
  AllocationProblem p;
  p.weights = {0.5, 0.5};
  p.var_treated = {9.0, 1.0};
  p.var_control = {1.0, 9.0};
  p.effect = {0.0, 0.0};
  p.c1 = 0.1;
  SolverOptions opts;
  opts.max_iterations = 2;
  opts.tol = 1e-14;
  const auto res = solve(p, opts);
  REQUIRE_FALSE(res.converged);
  REQUIRE(constraint_violation(p, res.e) <= 1e-8);
}

TEST_CASE("invalid problems are rejected") {
  AllocationProblem p;
  p.weights = {1.0};
  p.var_treated = {std::numeric_limits<double>::quiet_NaN()};
  p.var_control = {1.0};
  REQUIRE_THROWS_AS(solve(p), std::invalid_argument);

  AllocationProblem q;
  q.weights = {1.0, 1.0};
  q.var_treated = {1.0, 1.0};
  q.var_control = {1.0, 1.0};
  q.c2 = 0.6;
  REQUIRE_THROWS_AS(solve(q), std::invalid_argument);
  REQUIRE_THROWS_AS(grid_oracle(q, 1e-2), std::invalid_argument);
}

TEST_CASE("grid oracle refuses more than three free groups") {
  AllocationProblem p;
  p.weights.assign(4, 0.25);
  p.var_treated.assign(4, 1.0);
  p.var_control.assign(4, 1.0);
  REQUIRE_THROWS_AS(grid_oracle(p, 1e-2), std::invalid_argument);
  p.fixed_half = {1, 0, 0, 0};
  REQUIRE_NOTHROW(grid_oracle(p, 1e-2));
}
