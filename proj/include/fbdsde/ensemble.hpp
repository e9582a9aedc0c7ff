#pragma once

#include <cstdint>
#include <string>

#include "fbdsde/array2d.hpp"
#include "fbdsde/counter_rng.hpp"
#include "fbdsde/errors.hpp"
#include "fbdsde/parallel.hpp"
#include "fbdsde/time_grid.hpp"

namespace fbdsde {

// Increments of the two independent Brownian motions over one time grid.
//
// Layout: n_paths = n_scenarios * n_inner, path p = scenario * n_inner + inner.
// A flat ensemble (independent W and B per path) has n_inner = 1. A product
// ensemble shares each W stream across all scenarios (dW depends on the inner
// index only) and each B stream across all inner paths of one scenario, which
// is what realizes conditioning on the two halves of the filtration: the same
// W panel is observed under every B scenario and vice versa.
struct BrownianEnsemble {
  TimeGrid grid;
  int n_scenarios = 0;
  int n_inner = 1;
  bool product = false;   // true when W streams are shared across scenarios
  std::uint64_t seed = 0;
  Array2D dW;  // n_paths x n_steps
  Array2D dB;  // n_paths x n_steps (rows repeat within a scenario)

  int n_paths() const { return n_scenarios * n_inner; }
  int scenario_of(int p) const { return p / n_inner; }
  int inner_of(int p) const { return p % n_inner; }
};

// Values of a scalar process at every grid node for every path.
struct ProcessPath {
  TimeGrid grid;
  Array2D values;  // n_paths x (n_steps + 1)

  ProcessPath() = default;
  ProcessPath(const TimeGrid& g, int n_paths) : grid(g), values(n_paths, g.n_nodes()) {}
  int n_paths() const { return static_cast<int>(values.rows()); }
};

// Independent W and B streams for every path. Stream indices for the two
// motions are disjoint, so the motions are independent by construction.
inline BrownianEnsemble generate_ensemble(const TimeGrid& grid, int n_paths,
                                          std::uint64_t seed, int n_threads = 1) {
  require(n_paths >= 1, "ensemble requires n_paths >= 1 (got " +
                            std::to_string(n_paths) + ")");
  BrownianEnsemble e;
  e.grid = grid;
  e.n_scenarios = n_paths;
  e.n_inner = 1;
  e.product = false;
  e.seed = seed;
  e.dW = Array2D(n_paths, grid.n_steps);
  e.dB = Array2D(n_paths, grid.n_steps);
  const double root_dt = std::sqrt(grid.dt());
  parallel_for(n_paths, n_threads, [&](int p) {
    double* w = e.dW.row(p);
    double* b = e.dB.row(p);
    for (int i = 0; i < grid.n_steps; ++i) {
      w[i] = root_dt * rng::standard_normal(seed, rng::kMotionW, p, i);
      b[i] = root_dt * rng::standard_normal(seed, rng::kMotionB, p, i);
    }
  });
  return e;
}

// Product ensemble: n_scenarios B streams crossed with n_inner W streams.
inline BrownianEnsemble generate_product_ensemble(const TimeGrid& grid, int n_scenarios,
                                                  int n_inner, std::uint64_t seed,
                                                  int n_threads = 1) {
  require(n_scenarios >= 1, "product ensemble requires n_scenarios >= 1");
  require(n_inner >= 1, "product ensemble requires n_inner >= 1");
  BrownianEnsemble e;
  e.grid = grid;
  e.n_scenarios = n_scenarios;
  e.n_inner = n_inner;
  e.product = true;
  e.seed = seed;
  const int n_paths = n_scenarios * n_inner;
  e.dW = Array2D(n_paths, grid.n_steps);
  e.dB = Array2D(n_paths, grid.n_steps);
  const double root_dt = std::sqrt(grid.dt());
  parallel_for(n_paths, n_threads, [&](int p) {
    const int j = p / n_inner;
    const int m = p % n_inner;
    double* w = e.dW.row(p);
    double* b = e.dB.row(p);
    for (int i = 0; i < grid.n_steps; ++i) {
      w[i] = root_dt * rng::standard_normal(seed, rng::kMotionW, m, i);
      b[i] = root_dt * rng::standard_normal(seed, rng::kMotionB, j, i);
    }
  });
  return e;
}

// Cumulative forward Ito integral of a left-endpoint integrand against W:
// node k holds sum_{i<k} u(t_i) dW_i, so node 0 is 0.
inline ProcessPath forward_ito_integral(const ProcessPath& integrand,
                                        const BrownianEnsemble& e) {
  require(integrand.values.rows() == static_cast<std::size_t>(e.n_paths()) &&
              integrand.values.cols() == static_cast<std::size_t>(e.grid.n_nodes()),
          "forward integral: integrand shape does not match ensemble");
  ProcessPath out(e.grid, e.n_paths());
  for (int p = 0; p < e.n_paths(); ++p) {
    const double* u = integrand.values.row(p);
    const double* dw = e.dW.row(p);
    double* acc = out.values.row(p);
    acc[0] = 0.0;
    for (int i = 0; i < e.grid.n_steps; ++i) acc[i + 1] = acc[i] + u[i] * dw[i];
  }
  return out;
}

// Tail backward Ito integral of a right-endpoint integrand against B:
// node k holds sum_{i>=k} v(t_{i+1}) dB_i, accumulated from T where it is 0.
inline ProcessPath backward_ito_integral(const ProcessPath& integrand,
                                         const BrownianEnsemble& e) {
  require(integrand.values.rows() == static_cast<std::size_t>(e.n_paths()) &&
              integrand.values.cols() == static_cast<std::size_t>(e.grid.n_nodes()),
          "backward integral: integrand shape does not match ensemble");
  ProcessPath out(e.grid, e.n_paths());
  const int n = e.grid.n_steps;
  for (int p = 0; p < e.n_paths(); ++p) {
    const double* v = integrand.values.row(p);
    const double* db = e.dB.row(p);
    double* acc = out.values.row(p);
    acc[n] = 0.0;
    for (int i = n - 1; i >= 0; --i) acc[i] = acc[i + 1] + v[i + 1] * db[i];
  }
  return out;
}

}  // namespace fbdsde
