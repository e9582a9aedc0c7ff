#pragma once

#include <string>

#include "fbdsde/errors.hpp"

namespace fbdsde {

// Uniform partition of [t0, T] into n_steps intervals. Node i sits at
// t0 + i*dt; all discretizations in the library share this indexing.
struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int n_steps = 1;

  TimeGrid() = default;
  TimeGrid(double t0_, double T_, int n_steps_) : t0(t0_), T(T_), n_steps(n_steps_) {
    require(T > t0, "time grid requires t0 < T (got t0=" + std::to_string(t0) +
                        ", T=" + std::to_string(T) + ")");
    require(n_steps >= 1, "time grid requires n_steps >= 1 (got " +
                              std::to_string(n_steps) + ")");
  }

  double dt() const { return (T - t0) / n_steps; }
  double time(int i) const { return t0 + i * dt(); }
  int n_nodes() const { return n_steps + 1; }
};

}  // namespace fbdsde
