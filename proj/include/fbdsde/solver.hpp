#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fbdsde/engine.hpp"
#include "fbdsde/model.hpp"
#include "fbdsde/stats.hpp"

namespace fbdsde {

// Deterministic step control: value u[i] on [t_i, t_{i+1}).
inline double control_at_node(const std::vector<double>& u, int node) {
  const int last = static_cast<int>(u.size()) - 1;
  return u[node < last ? node : last];
}

inline std::vector<double> constant_control(int n_steps, double v) {
  return std::vector<double>(n_steps, v);
}

inline std::vector<double> clip_control(std::vector<double> u, double lo, double hi) {
  for (double& x : u) x = std::min(hi, std::max(lo, x));
  return u;
}

// ---------------------------------------------------------------------------
// Coupled state solve

struct QuadrupleSolution {
  ProcessPath y, Y, z, Z;
  int picard_iterations = 0;
  double picard_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

namespace detail {

// The returned problem holds a pointer to the caller's control vector, which
// must stay alive for the problem's lifetime.
inline CoupledProblem state_problem(const CoefficientSet& cs, double x0,
                                    const std::vector<double>& u,
                                    const BrownianEnsemble& e) {
  const TimeGrid& grid = e.grid;
  CoupledProblem prob;
  const std::vector<double>* up = &u;
  auto lift = [grid, up](const Coef& c) {
    const Fn6 val = c.val;
    return [val, grid, up](int, int i, double y, double Y, double z, double Z) {
      return val(grid.time(i), y, Y, z, Z, control_at_node(*up, i));
    };
  };
  prob.f = lift(cs.f);
  prob.g = lift(cs.g);
  prob.F = lift(cs.F);
  prob.G = lift(cs.G);
  prob.initial = [x0](int) { return x0; };
  const Fn1 h = cs.h.val, hd = cs.h.d;
  prob.terminal = [h](int, double yT) { return h(yT); };
  prob.terminal_slope = [hd](int, double yT) { return hd(yT); };
  prob.n_forward_features = 1;
  prob.forward_features = [](int p, int i, const QuadrupleView& it, double* out) {
    out[0] = it.y->values(p, i);
  };
  prob.n_backward_features = 1;
  prob.backward_features = [](int p, int i, const QuadrupleView& it, double* out) {
    out[0] = it.y->values(p, i);
  };
  return prob;
}

inline QuadrupleSolution wrap_result(PicardResult&& r) {
  QuadrupleSolution s{std::move(r.sol.y), std::move(r.sol.Y), std::move(r.sol.z),
                      std::move(r.sol.Z)};
  s.picard_iterations = r.iterations;
  s.picard_residual = r.residual;
  s.converged = r.converged;
  s.residual_history = std::move(r.residual_history);
  return s;
}

inline Quadruple as_quadruple(const QuadrupleSolution& s) {
  Quadruple q(s.y.grid, s.y.n_paths());
  q.y = s.y;
  q.Y = s.Y;
  q.z = s.z;
  q.Z = s.Z;
  return q;
}

}  // namespace detail

inline QuadrupleSolution solve_coupled(const CoefficientSet& cs, double x0,
                                       const std::vector<double>& u,
                                       const BrownianEnsemble& e,
                                       const SolverConfig& cfg,
                                       const QuadrupleSolution* warm = nullptr) {
  require(static_cast<int>(u.size()) == e.grid.n_steps,
          "control size must equal the number of grid steps");
  const CoupledProblem prob = detail::state_problem(cs, x0, u, e);
  if (warm) {
    const Quadruple w = detail::as_quadruple(*warm);
    return detail::wrap_result(solve_coupled_problem(prob, e, cfg, &w));
  }
  return detail::wrap_result(solve_coupled_problem(prob, e, cfg));
}

// One extra undamped sweep applied to a returned solution; reports how far
// the discrete recursions move it.
inline double state_resubstitution_defect(const CoefficientSet& cs, double x0,
                                          const std::vector<double>& u,
                                          const BrownianEnsemble& e,
                                          const QuadrupleSolution& sol,
                                          const SolverConfig& cfg) {
  const CoupledProblem prob = detail::state_problem(cs, x0, u, e);
  return resubstitution_defect(prob, e, detail::as_quadruple(sol), cfg);
}

// ---------------------------------------------------------------------------
// Standalone halves for decoupled systems

// dY = -F dt - G dB~ + Z dW backward from a per-path terminal value, with
// per-scenario regressions on caller-supplied features.
struct BdsdeProblem {
  // drift at the left node; receives the node-(i+1) value and the fresh Z_i
  std::function<double(int path, int i, double Y_next, double Z_i)> F;
  // backward integrand at the right node k = i+1
  std::function<double(int path, int k, double Y_k, double Z_k)> G;
  std::function<double(int path)> terminal;
  std::function<double(int path)> terminal_Z;
  int n_features = 1;
  std::function<void(int path, int i, double* out)> features;
};

struct PairSolution {
  ProcessPath value, integrand;
};

inline PairSolution solve_bdsde(const BdsdeProblem& prob, const BrownianEnsemble& e,
                                const SolverConfig& cfg) {
  require(e.product, "backward solve requires a product ensemble");
  require(e.n_inner >= basis_size(prob.n_features, cfg.basis_degree),
          "not enough inner paths for the regression basis");
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const int P = e.n_paths();
  const int J = e.n_scenarios;
  const int M = e.n_inner;
  const double dt = grid.dt();
  PairSolution out{ProcessPath(grid, P), ProcessPath(grid, P)};
  ProcessPath& Y = out.value;
  ProcessPath& Z = out.integrand;
  for (int p = 0; p < P; ++p) {
    Y.values(p, n) = prob.terminal(p);
    Z.values(p, n) = prob.terminal_Z(p);
  }
  const int nf = prob.n_features;
  std::vector<double> feat(static_cast<size_t>(P) * nf), ynext(P), winc(P);
  for (int i = n - 1; i >= 0; --i) {
    parallel_for(P, cfg.n_threads, [&](int p) {
      prob.features(p, i, feat.data() + static_cast<size_t>(p) * nf);
      ynext[p] = Y.values(p, i + 1);
      winc[p] = e.dW(p, i);
    });
    parallel_for(J, cfg.n_threads, [&](int j) {
      const int base = j * M;
      const double* fj = feat.data() + static_cast<size_t>(base) * nf;
      IncrementRegression reg(fj, M, nf, cfg.basis_degree, cfg.ridge,
                              winc.data() + base);
      // slope of the node-(i+1) value against dW_i is the fresh integrand
      const std::vector<double> yn(ynext.begin() + base, ynext.begin() + base + M);
      const LevelSlopeFit zfit = reg.fit(yn);
      for (int m = 0; m < M; ++m) Z.values(base + m, i) = zfit.slope[m];
      std::vector<double> ytj(M);
      for (int m = 0; m < M; ++m) {
        const int p = base + m;
        const double Yn = Y.values(p, i + 1);
        ytj[m] = Yn + prob.F(p, i, Yn, Z.values(p, i)) * dt +
                 prob.G(p, i + 1, Yn, Z.values(p, i + 1)) * e.dB(p, i);
      }
      const LevelSlopeFit yfit = reg.fit(ytj);
      for (int m = 0; m < M; ++m) Y.values(base + m, i) = yfit.level[m];
    });
  }
  return out;
}

// dy = f dt + g dW - z dB~ forward from a per-path initial value, with the
// pooled regression extracting the backward integrand. The integrand enters
// the coefficients lagged, so a couple of internal sweeps refine it.
struct ForwardDsProblem {
  std::function<double(int path, int i, double y_i, double z_i)> f, g;
  std::function<double(int path)> initial;
  int n_features = 2;
  std::function<void(int path, int i, double* out)> features;
  int n_internal_sweeps = 2;
};

inline PairSolution solve_forward_ds(const ForwardDsProblem& prob,
                                     const BrownianEnsemble& e,
                                     const SolverConfig& cfg) {
  require(e.product, "forward doubly stochastic solve requires a product ensemble");
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const int P = e.n_paths();
  const double dt = grid.dt();
  PairSolution out{ProcessPath(grid, P), ProcessPath(grid, P)};
  const int nf = prob.n_features;
  std::vector<double> feat(static_cast<size_t>(P) * nf);
  std::vector<double> s_free(P), inc(P);
  for (int sweep = 0; sweep < std::max(1, prob.n_internal_sweeps); ++sweep) {
    ProcessPath y(grid, P), z(grid, P);
    for (int p = 0; p < P; ++p) y.values(p, 0) = prob.initial(p);
    for (int i = 0; i < n; ++i) {
      parallel_for(P, cfg.n_threads, [&](int p) {
        const double yv = y.values(p, i);
        // lagged integrand: previous internal sweep (zero on the first)
        const double zv = out.integrand.values(p, i);
        s_free[p] = yv + prob.f(p, i, yv, zv) * dt +
                    prob.g(p, i, yv, zv) * e.dW(p, i);
        inc[p] = e.dB(p, i);
        prob.features(p, i + 1, feat.data() + static_cast<size_t>(p) * nf);
      });
      IncrementRegression reg(feat.data(), P, nf, cfg.basis_degree, cfg.ridge,
                              inc.data());
      const LevelSlopeFit fit = reg.fit(s_free);
      for (int p = 0; p < P; ++p) {
        y.values(p, i + 1) = fit.level[p];
        z.values(p, i + 1) = fit.slope[p];
      }
    }
    for (int p = 0; p < P; ++p) z.values(p, 0) = z.values(p, 1);
    out.value = std::move(y);
    out.integrand = std::move(z);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoupled systems

struct TripleSolution {
  ProcessPath X, Y, Z;
};

inline ProcessPath simulate_forward(const DecoupledCoefficientSet& m, double x0,
                                    const std::vector<double>& u,
                                    const BrownianEnsemble& e, int n_threads = 1) {
  require(static_cast<int>(u.size()) == e.grid.n_steps,
          "control size must equal the number of grid steps");
  const int n = e.grid.n_steps;
  const double dt = e.grid.dt();
  ProcessPath X(e.grid, e.n_paths());
  parallel_for(e.n_paths(), n_threads, [&](int p) {
    X.values(p, 0) = x0;
    for (int i = 0; i < n; ++i) {
      const double x = X.values(p, i);
      const double v = u[i];
      X.values(p, i + 1) =
          x + m.b.val(x, v) * dt + m.sigma.val(x, v) * e.dW(p, i);
    }
  });
  return X;
}

inline TripleSolution solve_decoupled(const DecoupledCoefficientSet& m, double x0,
                                      const std::vector<double>& u,
                                      const BrownianEnsemble& e,
                                      const SolverConfig& cfg) {
  TripleSolution sol{simulate_forward(m, x0, u, e, cfg.n_threads),
                     ProcessPath(), ProcessPath()};
  const ProcessPath& X = sol.X;
  const TimeGrid& grid = e.grid;
  BdsdeProblem prob;
  prob.terminal = [&m, &X, n = grid.n_steps](int p) {
    return m.h.val(X.values(p, n));
  };
  prob.terminal_Z = [&m, &X, &u, n = grid.n_steps](int p) {
    const double xT = X.values(p, n);
    return m.h.d(xT) * m.sigma.val(xT, control_at_node(u, n));
  };
  prob.F = [&m, &X, &u, &grid](int p, int i, double Ynext, double Zi) {
    return m.f.val(grid.time(i), X.values(p, i), Ynext, Zi, u[i]);
  };
  prob.G = [&m, &X, &u, &grid](int p, int k, double Yk, double Zk) {
    return m.g.val(grid.time(k), X.values(p, k), Yk, Zk, control_at_node(u, k));
  };
  prob.n_features = 1;
  prob.features = [&X](int p, int i, double* out) { out[0] = X.values(p, i); };
  PairSolution bw = solve_bdsde(prob, e, cfg);
  sol.Y = std::move(bw.value);
  sol.Z = std::move(bw.integrand);
  return sol;
}

// ---------------------------------------------------------------------------
// Cost functionals

struct CostEstimate {
  double value = 0.0;
  double se = 0.0;
};

namespace detail {

// On product ensembles the B scenarios are the independent replications, so
// the standard error is taken across scenario means.
inline CostEstimate summarize_by_scenario(const std::vector<double>& per_path,
                                          const BrownianEnsemble& e) {
  if (!e.product || e.n_scenarios < 2) {
    auto ms = mean_and_se(per_path);
    return {ms.mean, ms.se};
  }
  std::vector<double> means(e.n_scenarios, 0.0);
  for (int j = 0; j < e.n_scenarios; ++j) {
    double s = 0;
    for (int m = 0; m < e.n_inner; ++m) s += per_path[j * e.n_inner + m];
    means[j] = s / e.n_inner;
  }
  auto ms = mean_and_se(means);
  return {ms.mean, ms.se};
}

}  // namespace detail

inline CostEstimate cost_functional(const CoefficientSet& cs,
                                    const QuadrupleSolution& sol,
                                    const std::vector<double>& u,
                                    const BrownianEnsemble& e) {
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const double dt = grid.dt();
  std::vector<double> per_path(e.n_paths());
  for (int p = 0; p < e.n_paths(); ++p) {
    double acc = 0;
    for (int i = 0; i < n; ++i)
      acc += cs.l.val(grid.time(i), sol.y.values(p, i), sol.Y.values(p, i),
                      sol.z.values(p, i), sol.Z.values(p, i), u[i]) *
             dt;
    acc += cs.Phi.val(sol.y.values(p, n));
    acc += cs.gamma_cost.val(sol.Y.values(p, 0));
    per_path[p] = acc;
  }
  return detail::summarize_by_scenario(per_path, e);
}

inline CostEstimate cost_functional(const DecoupledCoefficientSet& m,
                                    const TripleSolution& sol,
                                    const std::vector<double>& u,
                                    const BrownianEnsemble& e) {
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const double dt = grid.dt();
  std::vector<double> per_path(e.n_paths());
  for (int p = 0; p < e.n_paths(); ++p) {
    double acc = 0;
    for (int i = 0; i < n; ++i)
      acc += m.l.val(grid.time(i), sol.X.values(p, i), sol.Y.values(p, i),
                     sol.Z.values(p, i), u[i]) *
             dt;
    acc += m.gamma_cost.val(sol.Y.values(p, 0));
    per_path[p] = acc;
  }
  return detail::summarize_by_scenario(per_path, e);
}

// M2 norm of a deterministic step control.
inline double control_m2_norm(const std::vector<double>& u, const TimeGrid& grid) {
  double acc = 0;
  for (double x : u) acc += x * x;
  return std::sqrt(acc * grid.dt());
}

}  // namespace fbdsde
