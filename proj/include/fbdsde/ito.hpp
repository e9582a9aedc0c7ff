#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fbdsde/ensemble.hpp"
#include "fbdsde/stats.hpp"

namespace fbdsde {

// Decomposition a_t = a_0 + int b ds + int c d<-B + int d dW of a scalar
// process. Drift and dW integrands are read at left endpoints, the d<-B
// integrand at right endpoints; those are the discrete conventions the whole
// library is built on.
struct ItoDecomposition {
  std::vector<double> alpha0;  // per path
  ProcessPath beta;
  ProcessPath gamma;
  ProcessPath delta;
};

struct ItoReport {
  // Pathwise squared-norm identity |a_t|^2 = |a_0|^2 + 2 int <a,b> ds
  // + 2 int <a,c d<-B> + 2 int <a,d dW> - int |c|^2 ds + int |d|^2 ds,
  // residual tracked at every node.
  double max_mean_square_residual = 0.0;  // max_k E[res_k^2]
  double max_rms_residual = 0.0;          // sqrt of the above
  // Expectation identity at T: martingale terms dropped.
  double expectation_gap = 0.0;
  double expectation_gap_se = 0.0;
  int n_paths = 0;
};

// Reconstructs the process from its decomposition and measures both identity
// residuals over the given ensemble.
inline ItoReport verify_ito_formula(const ItoDecomposition& dec,
                                    const BrownianEnsemble& e) {
  const int n = e.grid.n_steps;
  const int np = e.n_paths();
  const double dt = e.grid.dt();
  require(static_cast<int>(dec.alpha0.size()) == np &&
              dec.beta.n_paths() == np && dec.gamma.n_paths() == np &&
              dec.delta.n_paths() == np,
          "ito verification: decomposition shape does not match ensemble");

  std::vector<double> sum_sq(n + 1, 0.0);
  std::vector<double> exp_diff(np, 0.0);
  for (int p = 0; p < np; ++p) {
    const double* b = dec.beta.values.row(p);
    const double* c = dec.gamma.values.row(p);
    const double* d = dec.delta.values.row(p);
    const double* dw = e.dW.row(p);
    const double* db = e.dB.row(p);

    double a = dec.alpha0[p];
    const double a0sq = a * a;
    double rhs = a0sq;          // full pathwise identity
    double rhs_exp = a0sq;      // drift and correction terms only
    for (int i = 0; i < n; ++i) {
      const double a_next = a + b[i] * dt + c[i + 1] * db[i] + d[i] * dw[i];
      rhs += 2.0 * a * b[i] * dt + 2.0 * a_next * c[i + 1] * db[i] +
             2.0 * a * d[i] * dw[i] - c[i + 1] * c[i + 1] * dt + d[i] * d[i] * dt;
      rhs_exp += 2.0 * a * b[i] * dt - c[i + 1] * c[i + 1] * dt + d[i] * d[i] * dt;
      a = a_next;
      const double res = a * a - rhs;
      sum_sq[i + 1] += res * res;
    }
    exp_diff[p] = a * a - rhs_exp;
  }

  ItoReport r;
  r.n_paths = np;
  for (int k = 0; k <= n; ++k)
    r.max_mean_square_residual = std::max(r.max_mean_square_residual, sum_sq[k] / np);
  r.max_rms_residual = std::sqrt(r.max_mean_square_residual);
  const MeanSE g = mean_and_se(exp_diff);
  r.expectation_gap = g.mean;
  r.expectation_gap_se = g.se;
  return r;
}

// Decomposition of a_t = W_t (unit dW integrand).
inline ItoDecomposition decomposition_of_w(const BrownianEnsemble& e) {
  ItoDecomposition d;
  d.alpha0.assign(e.n_paths(), 0.0);
  d.beta = ProcessPath(e.grid, e.n_paths());
  d.gamma = ProcessPath(e.grid, e.n_paths());
  d.delta = ProcessPath(e.grid, e.n_paths());
  d.delta.values.fill(1.0);
  return d;
}

// Decomposition of the tail process a_t = B_T - B_t (alpha0 = B_T, unit
// negative d<-B integrand). The tail, not B_t itself, is the member of the
// admissible class: values and integrands must be measurable with respect to
// the future of B joined with the past of W, or the d<-B term is not
// centered and the expectation identity fails.
inline ItoDecomposition decomposition_of_b(const BrownianEnsemble& e) {
  ItoDecomposition d;
  d.alpha0.assign(e.n_paths(), 0.0);
  d.beta = ProcessPath(e.grid, e.n_paths());
  d.gamma = ProcessPath(e.grid, e.n_paths());
  d.delta = ProcessPath(e.grid, e.n_paths());
  d.gamma.values.fill(-1.0);
  for (int p = 0; p < e.n_paths(); ++p) {
    double bT = 0.0;
    for (int i = 0; i < e.grid.n_steps; ++i) bT += e.dB(p, i);
    d.alpha0[p] = bT;
  }
  return d;
}

}  // namespace fbdsde
