#pragma once

#include <vector>

#include "fbdsde/solver.hpp"

namespace fbdsde {

// Linearization of the coupled system along a base solution: the same
// engine solves the system whose coefficients are the base-point partial
// derivatives applied to the perturbation quadruple, driven by a control
// direction. The perturbation starts at zero and its terminal condition is
// the base terminal slope times the terminal perturbation.
namespace detail {

inline CoupledProblem variational_problem(const CoefficientSet& cs,
                                          const QuadrupleSolution& base,
                                          const std::vector<double>& u,
                                          const std::vector<double>& delta_u,
                                          const BrownianEnsemble& e) {
  const TimeGrid& grid = e.grid;
  CoupledProblem prob;
  const std::vector<double>* up = &u;
  const std::vector<double>* dup = &delta_u;
  auto lift = [&base, grid, up, dup](const Coef& c) {
    return [&base, c, grid, up, dup](int p, int i, double y1, double Y1,
                                     double z1, double Z1) {
      const double t = grid.time(i);
      const double yb = base.y.values(p, i);
      const double Yb = base.Y.values(p, i);
      const double zb = base.z.values(p, i);
      const double Zb = base.Z.values(p, i);
      const double v = control_at_node(*up, i);
      return c.dy(t, yb, Yb, zb, Zb, v) * y1 + c.dY(t, yb, Yb, zb, Zb, v) * Y1 +
             c.dz(t, yb, Yb, zb, Zb, v) * z1 + c.dZ(t, yb, Yb, zb, Zb, v) * Z1 +
             c.dv(t, yb, Yb, zb, Zb, v) * control_at_node(*dup, i);
    };
  };
  prob.f = lift(cs.f);
  prob.g = lift(cs.g);
  prob.F = lift(cs.F);
  prob.G = lift(cs.G);
  prob.initial = [](int) { return 0.0; };
  const Fn1 hd = cs.h.d;
  prob.terminal = [&base, hd, n = grid.n_steps](int p, double y1T) {
    return hd(base.y.values(p, n)) * y1T;
  };
  prob.terminal_slope = [&base, hd, n = grid.n_steps](int p, double) {
    return hd(base.y.values(p, n));
  };
  // Full dW-integrand of h'(y_T) y1_T: the curvature of the terminal map
  // against the base dW-integrand g(T) plus the slope against the
  // perturbation's own integrand.
  prob.terminal_integrand = [&cs, &base, up, grid,
                             n = grid.n_steps](int p, double y1T, double g_val) {
    const double ybT = base.y.values(p, n);
    const double gb =
        cs.g.val(grid.time(n), ybT, base.Y.values(p, n), base.z.values(p, n),
                 base.Z.values(p, n), control_at_node(*up, n));
    return cs.h.dd(ybT) * gb * y1T + cs.h.d(ybT) * g_val;
  };
  prob.n_forward_features = 2;
  prob.forward_features = [&base](int p, int i, const QuadrupleView& it,
                                  double* out) {
    out[0] = base.y.values(p, i);
    out[1] = it.y->values(p, i);
  };
  prob.n_backward_features = 2;
  prob.backward_features = [&base](int p, int i, const QuadrupleView& it,
                                   double* out) {
    out[0] = base.y.values(p, i);
    out[1] = it.y->values(p, i);
  };
  return prob;
}

}  // namespace detail

// Solves the linearized system along `base` in the direction `delta_u`.
// The base solution and both control vectors must outlive the call only.
inline QuadrupleSolution solve_variational(const CoefficientSet& cs,
                                           const QuadrupleSolution& base,
                                           const std::vector<double>& u,
                                           const std::vector<double>& delta_u,
                                           const BrownianEnsemble& e,
                                           const SolverConfig& cfg) {
  require(static_cast<int>(u.size()) == e.grid.n_steps &&
              static_cast<int>(delta_u.size()) == e.grid.n_steps,
          "control size must equal the number of grid steps");
  const CoupledProblem prob =
      detail::variational_problem(cs, base, u, delta_u, e);
  return detail::wrap_result(solve_coupled_problem(prob, e, cfg));
}

// First-order change of the cost along a direction: the running-cost
// partials paired with the perturbation quadruple plus the terminal and
// initial cost slopes paired with the terminal and initial perturbations.
inline CostEstimate cost_derivative(const CoefficientSet& cs,
                                    const QuadrupleSolution& base,
                                    const QuadrupleSolution& var,
                                    const std::vector<double>& u,
                                    const std::vector<double>& delta_u,
                                    const BrownianEnsemble& e) {
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const double dt = grid.dt();
  std::vector<double> per_path(e.n_paths());
  for (int p = 0; p < e.n_paths(); ++p) {
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      const double t = grid.time(i);
      const double yb = base.y.values(p, i);
      const double Yb = base.Y.values(p, i);
      const double zb = base.z.values(p, i);
      const double Zb = base.Z.values(p, i);
      const double v = control_at_node(u, i);
      acc += (cs.l.dy(t, yb, Yb, zb, Zb, v) * var.y.values(p, i) +
              cs.l.dY(t, yb, Yb, zb, Zb, v) * var.Y.values(p, i) +
              cs.l.dz(t, yb, Yb, zb, Zb, v) * var.z.values(p, i) +
              cs.l.dZ(t, yb, Yb, zb, Zb, v) * var.Z.values(p, i) +
              cs.l.dv(t, yb, Yb, zb, Zb, v) * control_at_node(delta_u, i)) *
             dt;
    }
    acc += cs.Phi.d(base.y.values(p, n)) * var.y.values(p, n);
    acc += cs.gamma_cost.d(base.Y.values(p, 0)) * var.Y.values(p, 0);
    per_path[p] = acc;
  }
  return detail::summarize_by_scenario(per_path, e);
}

}  // namespace fbdsde
