#pragma once

#include <cmath>
#include <vector>

#include "fbdsde/solver.hpp"
#include "fbdsde/variation.hpp"

namespace fbdsde {

// ---------------------------------------------------------------------------
// Pointwise Hamiltonian pairings
//
// Coupled system: H = q f - p F - k G + h g + l, evaluated at a state
// quadruple, an adjoint quadruple (p, q, k, h), and a control value.

inline double hamiltonian_value(const CoefficientSet& cs, double t, double y,
                                double Y, double z, double Z, double pv,
                                double qv, double kv, double hv, double v) {
  return qv * cs.f.val(t, y, Y, z, Z, v) - pv * cs.F.val(t, y, Y, z, Z, v) -
         kv * cs.G.val(t, y, Y, z, Z, v) + hv * cs.g.val(t, y, Y, z, Z, v) +
         cs.l.val(t, y, Y, z, Z, v);
}

// Partial of H in the control slot at fixed state and adjoint values.
inline double hamiltonian_control_slope(const CoefficientSet& cs, double t,
                                        double y, double Y, double z, double Z,
                                        double pv, double qv, double kv,
                                        double hv, double v) {
  return qv * cs.f.dv(t, y, Y, z, Z, v) - pv * cs.F.dv(t, y, Y, z, Z, v) -
         kv * cs.G.dv(t, y, Y, z, Z, v) + hv * cs.g.dv(t, y, Y, z, Z, v) +
         cs.l.dv(t, y, Y, z, Z, v);
}

// Decoupled system: H = l - k g + q b - p f + h sigma.
inline double decoupled_hamiltonian_value(const DecoupledCoefficientSet& m,
                                          double t, double x, double Yv,
                                          double Zv, double pv, double qv,
                                          double kv, double hv, double v) {
  return m.l.val(t, x, Yv, Zv, v) - kv * m.g.val(t, x, Yv, Zv, v) +
         qv * m.b.val(x, v) - pv * m.f.val(t, x, Yv, Zv, v) +
         hv * m.sigma.val(x, v);
}

inline double decoupled_control_slope(const DecoupledCoefficientSet& m,
                                      double t, double x, double Yv, double Zv,
                                      double pv, double qv, double kv,
                                      double hv, double v) {
  return m.l.dv(t, x, Yv, Zv, v) - kv * m.g.dv(t, x, Yv, Zv, v) +
         qv * m.b.dv(x, v) - pv * m.f.dv(t, x, Yv, Zv, v) +
         hv * m.sigma.dv(x, v);
}

// ---------------------------------------------------------------------------
// Coupled adjoint
//
// The adjoint quadruple (p, q, k, h) solves the same shape of coupled system
// as the state, with the slot mapping (y, Y, z, Z) -> (p, q, k, h):
//
//   dp = -H_Y dt - H_Z dW - k dB~,   p(0) = -gamma_cost'(Y(0)),
//   dq = -H_y dt - H_z dB~ + h dW,   q(T) = -h'(y(T)) p(T) + Phi'(y(T)),
//
// with the H partials frozen at the base solution and paired with the
// running adjoint values, so the engine solves it directly.

struct AdjointSolution {
  ProcessPath p, q, k, h;
  int picard_iterations = 0;
  double picard_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

namespace detail {

inline CoupledProblem adjoint_problem(const CoefficientSet& cs,
                                      const QuadrupleSolution& base,
                                      const std::vector<double>& u,
                                      const BrownianEnsemble& e) {
  const TimeGrid& grid = e.grid;
  CoupledProblem prob;
  const std::vector<double>* up = &u;
  // One H-partial paired with the adjoint slots:
  //   q f_d - p F_d - k G_d + h g_d + l_d
  // with the partials evaluated at the base quadruple and base control.
  auto pairing = [&cs, &base, grid, up](Fn6 Coef::*part, double sign) {
    return [&cs, &base, grid, up, part, sign](int p, int i, double pv,
                                              double qv, double kv, double hv) {
      const double t = grid.time(i);
      const double yb = base.y.values(p, i);
      const double Yb = base.Y.values(p, i);
      const double zb = base.z.values(p, i);
      const double Zb = base.Z.values(p, i);
      const double v = control_at_node(*up, i);
      return sign * (qv * (cs.f.*part)(t, yb, Yb, zb, Zb, v) -
                     pv * (cs.F.*part)(t, yb, Yb, zb, Zb, v) -
                     kv * (cs.G.*part)(t, yb, Yb, zb, Zb, v) +
                     hv * (cs.g.*part)(t, yb, Yb, zb, Zb, v) +
                     (cs.l.*part)(t, yb, Yb, zb, Zb, v));
    };
  };
  prob.f = pairing(&Coef::dY, -1.0);
  prob.g = pairing(&Coef::dZ, -1.0);
  prob.F = pairing(&Coef::dy, 1.0);
  prob.G = pairing(&Coef::dz, 1.0);
  prob.initial = [&base, gd = cs.gamma_cost.d](int p) {
    return -gd(base.Y.values(p, 0));
  };
  prob.terminal = [&base, hd = cs.h.d, Pd = cs.Phi.d,
                   n = grid.n_steps](int p, double pT) {
    const double ybT = base.y.values(p, n);
    return -hd(ybT) * pT + Pd(ybT);
  };
  prob.terminal_slope = [&base, hd = cs.h.d, n = grid.n_steps](int p, double) {
    return -hd(base.y.values(p, n));
  };
  // Full dW-integrand of -h'(y_T) p_T + Phi'(y_T): the chain rule adds the
  // curvature of the terminal maps against the base dW-integrand g(T).
  prob.terminal_integrand = [&cs, &base, up, grid,
                             n = grid.n_steps](int p, double pT, double g_val) {
    const double ybT = base.y.values(p, n);
    const double gb =
        cs.g.val(grid.time(n), ybT, base.Y.values(p, n), base.z.values(p, n),
                 base.Z.values(p, n), control_at_node(*up, n));
    return -cs.h.dd(ybT) * gb * pT - cs.h.d(ybT) * g_val + cs.Phi.dd(ybT) * gb;
  };
  // Start from the initial map applied at every node. The Euler walk would
  // carry the node-0 value's dependence on the whole B path to every later
  // node, where it reads as spurious increment content.
  prob.forward_bootstrap = [&base, gd = cs.gamma_cost.d](int p, int i) {
    return -gd(base.Y.values(p, i));
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

// Solves the adjoint system along `base`; base and u must outlive the call.
inline AdjointSolution solve_adjoint(const CoefficientSet& cs,
                                     const QuadrupleSolution& base,
                                     const std::vector<double>& u,
                                     const BrownianEnsemble& e,
                                     const SolverConfig& cfg) {
  require(static_cast<int>(u.size()) == e.grid.n_steps,
          "control size must equal the number of grid steps");
  const CoupledProblem prob = detail::adjoint_problem(cs, base, u, e);
  PicardResult r = solve_coupled_problem(prob, e, cfg);
  AdjointSolution s{std::move(r.sol.y), std::move(r.sol.Y), std::move(r.sol.z),
                    std::move(r.sol.Z)};
  s.picard_iterations = r.iterations;
  s.picard_residual = r.residual;
  s.converged = r.converged;
  s.residual_history = std::move(r.residual_history);
  return s;
}

// ---------------------------------------------------------------------------
// First-order pairing identity
//
// The boundary pairing of the variational quadruple with the adjoint plus
// the running-cost expansion must match the accumulated control slope of H
// along the direction. Both sides estimate the first-order change of the
// cost, so their per-path difference has mean zero up to discretization.

struct DualityCheck {
  CostEstimate lhs;  // boundary pairing + running-cost expansion
  CostEstimate rhs;  // integrated H control slope against the direction
  CostEstimate gap;  // per-path lhs - rhs, summarized on the same draws
};

inline DualityCheck duality_check(const CoefficientSet& cs,
                                  const QuadrupleSolution& base,
                                  const QuadrupleSolution& var,
                                  const AdjointSolution& adj,
                                  const std::vector<double>& u,
                                  const std::vector<double>& delta_u,
                                  const BrownianEnsemble& e) {
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const double dt = grid.dt();
  const int P = e.n_paths();
  std::vector<double> lhs(P), rhs(P), diff(P);
  for (int p = 0; p < P; ++p) {
    double a = var.y.values(p, n) * adj.q.values(p, n) +
               var.Y.values(p, n) * adj.p.values(p, n) -
               var.Y.values(p, 0) * adj.p.values(p, 0);
    double b = 0;
    for (int i = 0; i < n; ++i) {
      const double t = grid.time(i);
      const double yb = base.y.values(p, i);
      const double Yb = base.Y.values(p, i);
      const double zb = base.z.values(p, i);
      const double Zb = base.Z.values(p, i);
      const double v = control_at_node(u, i);
      const double dv = control_at_node(delta_u, i);
      a += (cs.l.dy(t, yb, Yb, zb, Zb, v) * var.y.values(p, i) +
            cs.l.dY(t, yb, Yb, zb, Zb, v) * var.Y.values(p, i) +
            cs.l.dz(t, yb, Yb, zb, Zb, v) * var.z.values(p, i) +
            cs.l.dZ(t, yb, Yb, zb, Zb, v) * var.Z.values(p, i) +
            cs.l.dv(t, yb, Yb, zb, Zb, v) * dv) *
           dt;
      b += hamiltonian_control_slope(cs, t, yb, Yb, zb, Zb,
                                     adj.p.values(p, i), adj.q.values(p, i),
                                     adj.k.values(p, i), adj.h.values(p, i),
                                     v) *
           dv * dt;
    }
    lhs[p] = a;
    rhs[p] = b;
    diff[p] = a - b;
  }
  return {detail::summarize_by_scenario(lhs, e),
          detail::summarize_by_scenario(rhs, e),
          detail::summarize_by_scenario(diff, e)};
}

// ---------------------------------------------------------------------------
// Decoupled adjoint
//
// First pair (p, k): forward doubly stochastic equation
//   dp = (f_y p + g_y k - l_y) dt + (f_z p + g_z k - l_z) dW - k dB~,
//   p(t0) = -gamma_cost'(Y(t0)),
// with the backward-value partials frozen at the base triple. Second pair
// (q, h): a backward equation without dB~ term,
//   dq = -(f_x p - b_x q + g_x k - sigma_x h - l_x) dt + h dW,
//   q(T) = -h'(X(T)) p(T).

struct DecoupledAdjointSolution {
  ProcessPath p, k;
  ProcessPath q, h;
};

inline DecoupledAdjointSolution solve_decoupled_adjoint(
    const DecoupledCoefficientSet& m, const TripleSolution& base,
    const std::vector<double>& u, const BrownianEnsemble& e,
    const SolverConfig& cfg) {
  require(static_cast<int>(u.size()) == e.grid.n_steps,
          "control size must equal the number of grid steps");
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;

  ForwardDsProblem fwd;
  auto at = [&](int p, int i) {
    struct Pt {
      double t, x, Y, Z, v;
    };
    return Pt{grid.time(i), base.X.values(p, i), base.Y.values(p, i),
              base.Z.values(p, i), control_at_node(u, i)};
  };
  fwd.f = [&m, at](int p, int i, double pv, double kv) {
    const auto s = at(p, i);
    return m.f.dy(s.t, s.x, s.Y, s.Z, s.v) * pv +
           m.g.dy(s.t, s.x, s.Y, s.Z, s.v) * kv -
           m.l.dy(s.t, s.x, s.Y, s.Z, s.v);
  };
  fwd.g = [&m, at](int p, int i, double pv, double kv) {
    const auto s = at(p, i);
    return m.f.dz(s.t, s.x, s.Y, s.Z, s.v) * pv +
           m.g.dz(s.t, s.x, s.Y, s.Z, s.v) * kv -
           m.l.dz(s.t, s.x, s.Y, s.Z, s.v);
  };
  fwd.initial = [&m, &base](int p) {
    return -m.gamma_cost.d(base.Y.values(p, 0));
  };
  // The base backward pair is itself fitted per scenario on X, so as a
  // regression feature it duplicates the X span; near the terminal the
  // duplication is exact and the joint fit would shed the redundancy into
  // the integrand. X alone carries the usable conditioning information.
  fwd.n_features = 1;
  fwd.features = [&base](int p, int i, double* out) {
    out[0] = base.X.values(p, i);
  };
  fwd.n_internal_sweeps = 3;
  PairSolution pk = solve_forward_ds(fwd, e, cfg);

  BdsdeProblem bwd;
  bwd.terminal = [&m, &base, &pk, n](int p) {
    return -m.h.d(base.X.values(p, n)) * pk.value.values(p, n);
  };
  // dW-integrand of -h'(X_T) p_T: curvature against sigma plus the slope
  // against p's own dW-integrand
  bwd.terminal_Z = [&m, &base, &pk, &fwd, &u, n](int p) {
    const double xT = base.X.values(p, n);
    const double pT = pk.value.values(p, n);
    const double gT = fwd.g(p, n, pT, pk.integrand.values(p, n));
    return -m.h.dd(xT) * m.sigma.val(xT, control_at_node(u, n)) * pT -
           m.h.d(xT) * gT;
  };
  bwd.F = [&m, &base, &pk, &u, &grid](int p, int i, double qnext, double hi) {
    const double t = grid.time(i);
    const double x = base.X.values(p, i);
    const double Yv = base.Y.values(p, i);
    const double Zv = base.Z.values(p, i);
    const double v = control_at_node(u, i);
    const double alpha = m.f.dx(t, x, Yv, Zv, v) * pk.value.values(p, i) -
                         m.b.dx(x, v) * qnext +
                         m.g.dx(t, x, Yv, Zv, v) * pk.integrand.values(p, i) -
                         m.sigma.dx(x, v) * hi - m.l.dx(t, x, Yv, Zv, v);
    return -alpha;
  };
  bwd.G = [](int, int, double, double) { return 0.0; };
  bwd.n_features = 2;
  bwd.features = [&base, &pk](int p, int i, double* out) {
    out[0] = base.X.values(p, i);
    out[1] = pk.value.values(p, i);
  };
  PairSolution qh = solve_bdsde(bwd, e, cfg);

  return {std::move(pk.value), std::move(pk.integrand), std::move(qh.value),
          std::move(qh.integrand)};
}

}  // namespace fbdsde
