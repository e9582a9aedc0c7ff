#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "fbdsde/ensemble.hpp"
#include "fbdsde/errors.hpp"
#include "fbdsde/parallel.hpp"
#include "fbdsde/regression.hpp"

namespace fbdsde {

struct SolverConfig {
  int n_picard_max = 120;
  double picard_tol = 1e-7;
  int basis_degree = 2;
  double ridge = 1e-10;
  double theta = 0.5;  // initial damping weight on the fresh iterate
  // History window of the Anderson mixing step in the coupled Picard loop
  // (0 = plain damped iteration). Strong two-way drift coupling can make the
  // sweep map expansive even though the discrete system is uniquely
  // solvable; mixing a few past sweeps handles that case, which no damping
  // weight can. Expansive systems also want theta at 0.25 or below so the
  // window keeps up with the growing modes.
  int anderson_memory = 8;
  int n_threads = 1;
};

// Four coupled processes on a shared grid. The slots are named after the
// state system (value/integrand of the forward and backward equations); an
// adjoint system occupies the same slots with its own processes.
struct Quadruple {
  ProcessPath y, Y, z, Z;
  Quadruple(const TimeGrid& grid, int n_paths)
      : y(grid, n_paths), Y(grid, n_paths), z(grid, n_paths), Z(grid, n_paths) {}
};

struct QuadrupleView {
  const ProcessPath *y, *Y, *z, *Z;
};
inline QuadrupleView view_of(const Quadruple& q) {
  return {&q.y, &q.Y, &q.z, &q.Z};
}

// One instance of the coupled pair
//   dy = f dt + g dW - z dB~,            y(0) = initial(path),
//   dY = -F dt - G dB~ + Z dW,           Y(T) = terminal(path, y(T)),
// discretized with drifts at the left node, backward integrands at the right
// node, forward integrands at the left node. Coefficient callbacks receive
// the path, the node index, and the four slot values there.
struct CoupledProblem {
  using StepFn =
      std::function<double(int path, int i, double y, double Y, double z, double Z)>;
  StepFn f, g, F, G;
  std::function<double(int path)> initial;
  std::function<double(int path, double yT)> terminal;
  // slope of the terminal map in y(T); seeds the dW-integrand at T
  std::function<double(int path, double yT)> terminal_slope;
  // Optional full dW-integrand at T, for terminal maps whose seed is not
  // just slope * g (curved maps, or maps that also touch the base state).
  // Receives the forward terminal value and the g evaluation that the
  // default seed would have multiplied.
  std::function<double(int path, double yT, double g_val)> terminal_integrand;
  // Optional pathwise start for the forward value (all nodes). Replaces the
  // Euler walk; use it when the walk would drag node-0 information past the
  // nodes where the backward integral should have removed it.
  std::function<double(int path, int i)> forward_bootstrap;

  // Conditioning proxies for the regressions. Forward-half fits pool every
  // path and are keyed at the right node; backward-half fits run per
  // scenario and are keyed at the left node. Two rules keep the fits honest:
  // a feature at node i must be a function of node-i information only (one
  // that carries the increment just below the node hands value content to
  // the integrand), and every forward feature must vary within scenarios (a
  // scenario-constant feature adds columns that live on the handful of
  // scenario cells, where the value/integrand split of the target stops
  // being unique and the fit splits it arbitrarily).
  int n_forward_features = 1;
  int n_backward_features = 1;
  std::function<void(int path, int i, const QuadrupleView& it, double* out)>
      forward_features;
  std::function<void(int path, int i, const QuadrupleView& it, double* out)>
      backward_features;
};

struct PicardResult {
  Quadruple sol;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

namespace detail {

// Per-path running sum of the B increments from node i to the horizon.
// The sum at node i is node-i measurable and independent of dB_{i-1}, which
// makes it a legitimate regression feature wherever the level must be
// allowed to depend on the remaining B noise.
inline std::shared_ptr<Array2D> remaining_b(const BrownianEnsemble& e) {
  const int P = e.n_paths();
  const int n = e.grid.n_steps;
  auto tail = std::make_shared<Array2D>(P, n + 1);
  for (int p = 0; p < P; ++p) {
    (*tail)(p, n) = 0.0;
    for (int i = n - 1; i >= 0; --i) (*tail)(p, i) = (*tail)(p, i + 1) + e.dB(p, i);
  }
  return tail;
}

// mean over paths of the time-integrated squared gap
inline double m2_gap_sq(const ProcessPath& a, const ProcessPath& b) {
  const int P = a.n_paths();
  const int K = a.grid.n_nodes();
  const double dt = a.grid.dt();
  double acc = 0;
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) {
      const double d = a.values(p, k) - b.values(p, k);
      acc += d * d;
    }
  return acc * dt / P;
}

}  // namespace detail

// One undamped sweep of the two halves: rebuilds (y, z) forward from the
// current iterate, then (Y, Z) backward from the fresh forward pair.
inline Quadruple coupled_sweep(const CoupledProblem& prob,
                               const BrownianEnsemble& e, const Quadruple& cur,
                               const SolverConfig& cfg) {
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const int P = e.n_paths();
  const double dt = grid.dt();
  Quadruple next(grid, P);

  // ---- forward half. The one-step composite obeys
  //   S_i = y_{i+1} + z_{i+1} dB_i
  // with dB_i independent of the node-(i+1) information, so the node-(i+1)
  // value is the conditional expectation of S_i and the integrand its dB
  // coefficient; one pooled joint fit per node estimates both. Taking the
  // value pathwise (S_i minus the read coefficient times the increment)
  // would keep detail the basis cannot express, but it also re-injects the
  // coefficient's estimation noise into the value, where the next node's
  // fit reads it as fresh increment content; the feedback compounds along
  // the grid, so the smoothed level is the stable choice.
  const QuadrupleView cur_view = view_of(cur);
  const int nff = prob.n_forward_features;
  std::vector<double> s_free(P), inc(P);
  std::vector<double> ffeat(static_cast<size_t>(P) * nff);
  for (int p = 0; p < P; ++p) next.y.values(p, 0) = prob.initial(p);
  for (int i = 0; i < n; ++i) {
    parallel_for(P, cfg.n_threads, [&](int p) {
      const double yv = next.y.values(p, i);
      const double Yv = cur.Y.values(p, i);
      // the backward integrand enters the coefficients lagged one full sweep;
      // feeding the freshly fitted z back in would let its estimation noise
      // compound node by node within the sweep
      const double zv = cur.z.values(p, i);
      const double Zv = cur.Z.values(p, i);
      s_free[p] = yv + prob.f(p, i, yv, Yv, zv, Zv) * dt +
                  prob.g(p, i, yv, Yv, zv, Zv) * e.dW(p, i);
      inc[p] = e.dB(p, i);
      prob.forward_features(p, i + 1, cur_view,
                            ffeat.data() + static_cast<size_t>(p) * nff);
    });
    IncrementRegression reg(ffeat.data(), P, nff, cfg.basis_degree, cfg.ridge,
                            inc.data());
    const LevelSlopeFit fit = reg.fit(s_free);
    for (int p = 0; p < P; ++p) {
      next.y.values(p, i + 1) = fit.level[p];
      next.z.values(p, i + 1) = fit.slope[p];
    }
  }
  for (int p = 0; p < P; ++p) next.z.values(p, 0) = next.z.values(p, 1);

  // ---- backward half: per-scenario conditioning is exact in the
  // future-of-B coordinate, so only the W-state needs a proxy.
  const QuadrupleView bwd_view = {&next.y, &cur.Y, &next.z, &cur.Z};
  for (int p = 0; p < P; ++p) {
    const double yT = next.y.values(p, n);
    const double YT = prob.terminal(p, yT);
    next.Y.values(p, n) = YT;
    const double gT = prob.g(p, n, yT, YT, next.z.values(p, n), cur.Z.values(p, n));
    next.Z.values(p, n) = prob.terminal_integrand
                              ? prob.terminal_integrand(p, yT, gT)
                              : prob.terminal_slope(p, yT) * gT;
  }
  const int J = e.n_scenarios;
  const int M = e.n_inner;
  const int nf = prob.n_backward_features;
  std::vector<double> feat(static_cast<size_t>(P) * nf), ynext(P), winc(P);
  for (int i = n - 1; i >= 0; --i) {
    parallel_for(P, cfg.n_threads, [&](int p) {
      prob.backward_features(p, i, bwd_view, feat.data() + static_cast<size_t>(p) * nf);
      ynext[p] = next.Y.values(p, i + 1);
      winc[p] = e.dW(p, i);
    });
    parallel_for(J, cfg.n_threads, [&](int j) {
      const int base = j * M;
      const double* fj = feat.data() + static_cast<size_t>(base) * nf;
      IncrementRegression reg(fj, M, nf, cfg.basis_degree, cfg.ridge,
                              winc.data() + base);
      // the node-(i+1) value decomposes as (past of dW_i) + Z_i dW_i, so its
      // slope against the W increment is the fresh Z_i
      const std::vector<double> yn(ynext.begin() + base, ynext.begin() + base + M);
      const LevelSlopeFit zfit = reg.fit(yn);
      for (int m = 0; m < M; ++m) next.Z.values(base + m, i) = zfit.slope[m];
      std::vector<double> ytj(M);
      for (int m = 0; m < M; ++m) {
        const int p = base + m;
        const double Yn = next.Y.values(p, i + 1);
        const double drift = prob.F(p, i, next.y.values(p, i), Yn,
                                    next.z.values(p, i), next.Z.values(p, i));
        const double gterm =
            prob.G(p, i + 1, next.y.values(p, i + 1), Yn,
                   next.z.values(p, i + 1), next.Z.values(p, i + 1));
        ytj[m] = Yn + drift * dt + gterm * e.dB(p, i);
      }
      const LevelSlopeFit yfit = reg.fit(ytj);
      for (int m = 0; m < M; ++m) next.Y.values(base + m, i) = yfit.level[m];
    });
  }
  return next;
}

namespace detail {

// Cold start: a pathwise Euler walk for the forward value (backward slots
// zero), or the problem's own start when one is supplied, then one backward
// half to seed (Y, Z).
inline Quadruple bootstrap(const CoupledProblem& prob, const BrownianEnsemble& e,
                           const SolverConfig& cfg) {
  const TimeGrid& grid = e.grid;
  const int n = grid.n_steps;
  const int P = e.n_paths();
  const double dt = grid.dt();
  Quadruple q(grid, P);
  parallel_for(P, cfg.n_threads, [&](int p) {
    if (prob.forward_bootstrap) {
      for (int i = 0; i <= n; ++i)
        q.y.values(p, i) = prob.forward_bootstrap(p, i);
      return;
    }
    q.y.values(p, 0) = prob.initial(p);
    for (int i = 0; i < n; ++i) {
      const double yv = q.y.values(p, i);
      q.y.values(p, i + 1) = yv + prob.f(p, i, yv, 0, 0, 0) * dt +
                             prob.g(p, i, yv, 0, 0, 0) * e.dW(p, i);
    }
  });
  Quadruple swept = coupled_sweep(prob, e, q, cfg);
  // keep the pathwise walk for the forward pair; adopt the backward pair
  swept.y = q.y;
  swept.z = q.z;
  return swept;
}

}  // namespace detail

namespace detail {

inline void flatten(const Quadruple& q, std::vector<double>& v) {
  const ProcessPath* slots[4] = {&q.y, &q.Y, &q.z, &q.Z};
  std::size_t c = 0;
  for (const ProcessPath* s : slots) {
    const auto& d = s->values.data();
    std::copy(d.begin(), d.end(), v.begin() + c);
    c += d.size();
  }
}

inline void unflatten(const std::vector<double>& v, Quadruple& q) {
  ProcessPath* slots[4] = {&q.y, &q.Y, &q.z, &q.Z};
  std::size_t c = 0;
  for (ProcessPath* s : slots) {
    auto& d = s->values.data();
    std::copy(v.begin() + c, v.begin() + c + d.size(), d.begin());
    c += d.size();
  }
}

}  // namespace detail

// Damped Picard iteration over full sweeps, stabilized by short-memory
// Anderson mixing. The residual is the M2 distance between a sweep's input
// and its output summed over all four processes (the fixed-point defect).
//
// Plain damping converges only while the sweep map contracts. When the
// forward and backward drifts read each other at order one the map can be
// expansive even though the discrete system still has a unique solution,
// and then no damping weight helps; combining the last few sweeps through a
// small least-squares step solves that case the way a Krylov method would,
// since the sweep map is affine in the iterate whenever the coefficients
// are. Everything here is plain linear algebra in a fixed order, so reruns
// reproduce bit for bit.
inline PicardResult solve_coupled_problem(const CoupledProblem& prob,
                                          const BrownianEnsemble& e,
                                          const SolverConfig& cfg,
                                          const Quadruple* warm_start = nullptr) {
  require(e.product, "coupled solve requires a product ensemble");
  require(e.n_inner >= basis_size(prob.n_backward_features, cfg.basis_degree),
          "not enough inner paths for the backward-half regression");
  const int P = e.n_paths();
  const int K = e.grid.n_nodes();
  const std::size_t N = 4 * static_cast<std::size_t>(P) * K;
  const double scale = e.grid.dt() / P;

  PicardResult res{warm_start ? *warm_start : detail::bootstrap(prob, e, cfg)};
  Quadruple& cur = res.sol;
  std::vector<double> x(N), fx(N), x_prev, f_prev, best_x;
  detail::flatten(cur, x);

  const int m = std::max(0, cfg.anderson_memory);
  std::vector<std::vector<double>> dX, dF;
  bool have_prev = false;
  double th = cfg.theta;
  const double th_floor = cfg.theta / 64.0;
  double prev_residual = std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();

  for (int k = 0; k < cfg.n_picard_max; ++k) {
    Quadruple next = coupled_sweep(prob, e, cur, cfg);
    detail::flatten(next, fx);
    double g2 = 0;
    for (std::size_t c = 0; c < N; ++c) {
      fx[c] -= x[c];
      g2 += fx[c] * fx[c];
    }
    res.residual = std::sqrt(g2 * scale);
    res.residual_history.push_back(res.residual);
    res.iterations = k + 1;
    if (!std::isfinite(res.residual))
      throw solver_error("coupled solve diverged (residual is not finite)");
    if (res.residual <= cfg.picard_tol) {
      res.sol = std::move(next);
      res.converged = true;
      return res;
    }
    if (res.residual < best) {
      best = res.residual;
      best_x = x;
    } else if (res.residual > 100 * best) {
      // runaway extrapolation: return to the best iterate, forget the
      // history that produced the excursion, and damp harder
      x = best_x;
      dX.clear();
      dF.clear();
      have_prev = false;
      th = std::max(0.5 * th, th_floor);
      prev_residual = res.residual;
      detail::unflatten(x, cur);
      continue;
    }
    if (have_prev) {
      std::vector<double> ddx(N), ddf(N);
      for (std::size_t c = 0; c < N; ++c) {
        ddx[c] = x[c] - x_prev[c];
        ddf[c] = fx[c] - f_prev[c];
      }
      dX.push_back(std::move(ddx));
      dF.push_back(std::move(ddf));
      if (static_cast<int>(dX.size()) > m) {
        dX.erase(dX.begin());
        dF.erase(dF.begin());
      }
    }
    x_prev = x;
    f_prev = fx;
    have_prev = m > 0;

    const int mk = static_cast<int>(dX.size());
    if (mk == 0) {
      for (std::size_t c = 0; c < N; ++c) x[c] += th * fx[c];
    } else {
      // gamma minimizes |fx - dF gamma|; normal equations suffice at this
      // window size, with a vanishing shift for degenerate histories
      Eigen::MatrixXd G(mk, mk);
      Eigen::VectorXd b(mk);
      for (int a = 0; a < mk; ++a) {
        double dot = 0;
        for (std::size_t c = 0; c < N; ++c) dot += dF[a][c] * fx[c];
        b(a) = dot;
        for (int bb = a; bb < mk; ++bb) {
          double g = 0;
          for (std::size_t c = 0; c < N; ++c) g += dF[a][c] * dF[bb][c];
          G(a, bb) = g;
          G(bb, a) = g;
        }
      }
      const double shift = 1e-12 * (G.trace() / mk + 1e-300);
      for (int a = 0; a < mk; ++a) G(a, a) += shift;
      const Eigen::VectorXd gamma = G.ldlt().solve(b);
      for (std::size_t c = 0; c < N; ++c) x[c] += th * fx[c];
      for (int j = 0; j < mk; ++j) {
        const double gj = gamma(j);
        const std::vector<double>& xj = dX[j];
        const std::vector<double>& fj = dF[j];
        for (std::size_t c = 0; c < N; ++c) x[c] -= gj * (xj[c] + th * fj[c]);
      }
    }
    detail::unflatten(x, cur);
    // the halving schedule belongs to the plain damped mode; transient
    // residual growth is normal while the mixing history fills
    if (mk == 0 && res.residual > 2 * prev_residual &&
        res.residual > 10 * cfg.picard_tol)
      th = std::max(0.5 * th, th_floor);
    prev_residual = res.residual;
  }
  return res;
}

// Movement produced by one extra undamped sweep applied to a solution; a
// converged fixed point of the discrete recursions moves by at most the
// final Picard residual scale.
inline double resubstitution_defect(const CoupledProblem& prob,
                                    const BrownianEnsemble& e,
                                    const Quadruple& sol,
                                    const SolverConfig& cfg) {
  Quadruple next = coupled_sweep(prob, e, sol, cfg);
  const double gap =
      detail::m2_gap_sq(next.y, sol.y) + detail::m2_gap_sq(next.Y, sol.Y) +
      detail::m2_gap_sq(next.z, sol.z) + detail::m2_gap_sq(next.Z, sol.Z);
  return std::sqrt(gap);
}

}  // namespace fbdsde
