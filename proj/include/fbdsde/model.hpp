#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fbdsde/errors.hpp"
#include "fbdsde/expression.hpp"

namespace fbdsde {

using Fn1 = std::function<double(double)>;
using Fn2 = std::function<double(double, double)>;
using Fn5 = std::function<double(double, double, double, double, double)>;
using Fn6 = std::function<double(double, double, double, double, double, double)>;

// Coefficient of the coupled system, with first partials in the state
// arguments. Argument order is (t, y, Y, z, Z, v) throughout.
struct Coef {
  Fn6 val, dy, dY, dz, dZ, dv;
};

// Scalar terminal/initial cost term with its first two derivatives. The
// curvature feeds the dW-integrand seed at the horizon; it defaults to zero
// so only curved maps need to set it.
struct TerminalFn {
  Fn1 val, d;
  Fn1 dd = [](double) { return 0.0; };
};

// Coefficient over (x, v), used for the drift and diffusion of a decoupled
// forward equation.
struct XCoef {
  Fn2 val, dx, dv;
};

// Coefficient over (t, x, y, z, v) for the backward half of a decoupled
// system; y and z here are the backward pair's value and forward integrand.
struct DCoef {
  Fn5 val, dx, dy, dz, dv;
};

// Fully coupled model
//   dy = f dt + g dW - z dB~,          y(0) given,
//   dY = -F dt - G dB~ + Z dW,         Y(T) = h(y(T)),
// (dB~ is the backward integral) with running cost l, terminal cost Phi on
// y(T), initial cost gamma_cost on Y(0), and control constrained to
// [u_min, u_max].
struct CoefficientSet {
  Coef f, g, F, G, l;
  TerminalFn h, Phi, gamma_cost;
  double u_min = -1.0, u_max = 1.0;
  std::string name;
};

// Decoupled model
//   dX = b dt + sigma dW,                          X(t0) = x,
//   dY = -f dt - g dB~ + Z dW,                     Y(T) = h(X(T)),
// with cost E[ integral of l + gamma_cost(Y(t0)) ].
struct DecoupledCoefficientSet {
  XCoef b, sigma;
  DCoef f, g, l;
  TerminalFn h, gamma_cost;
  double u_min = 0.0, u_max = 1.0;
  std::string name;
};

// ---------------------------------------------------------------------------
// Structural checks

struct SamplerConfig {
  double box = 2.0;       // state coordinates sampled in [-box, box]
  double t_max = 1.0;     // times sampled in [0, t_max]
  int n_samples = 400;    // random pairs (axis-aligned probes are added on top)
  unsigned seed = 2718;
  double fd_step = 1e-4;      // central-difference step
  double fd_tolerance = 1e-5; // relative tolerance for derivative agreement
};

// Results of sampling-based structure checks on a coupled model. The map
// examined is A(t, s) = (-F, f, -G, g) acting on the state block
// s = (y, Y, z, Z), paired componentwise, with t and v held fixed within
// each pair:
//
//   q = <A(t,s) - A(t,s'), s - s'> / |s - s'|^2.
//
// Direction "negative" means sup q < 0 (a dissipative pairing), "positive"
// means inf q > 0 (coercive), otherwise "neither". monotonicity_estimate is
// the binding extreme: q_max for "negative"/"neither", q_min for "positive".
// weak_monotone flags q <= 0 on every sampled pair even when the supremum
// touches zero. Estimates only improve (Lipschitz grows, extremes widen) as
// n_samples increases.
struct AssumptionReport {
  double lipschitz_estimate = 0.0;    // sup |A(s) - A(s')| / |s - s'|
  double h_lipschitz_estimate = 0.0;  // sup |h(y) - h(y')| / |y - y'|
  double monotonicity_estimate = 0.0;
  double q_min = 0.0, q_max = 0.0;
  std::string monotonicity_direction = "neither";
  bool weak_monotone = false;
  bool h_monotone = false;  // <h(y) - h(y'), y - y'> >= 0 on all samples
  long samples_used = 0;
};

struct DerivativeReport {
  double max_error = 0.0;  // worst relative gap, |symbolic - fd| / (1 + |fd|)
  std::string worst = "";  // coefficient/partial label, e.g. "f.dz"
  bool pass = true;
  long samples_used = 0;
};

namespace detail {

struct StatePair {
  double t, v;
  double a[4];  // (y, Y, z, Z)
  double b[4];
};

// Axis-aligned probes first (they pin exact extremes for block-structured
// maps), then random pairs.
inline std::vector<StatePair> sample_state_pairs(double u_min, double u_max,
                                                 const SamplerConfig& cfg) {
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> ubox(-cfg.box, cfg.box);
  std::uniform_real_distribution<double> ut(0.0, cfg.t_max);
  std::uniform_real_distribution<double> uv(u_min, u_max);
  std::uniform_real_distribution<double> uscale(1e-3, cfg.box / 2);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<StatePair> pairs;
  for (int axis = 0; axis < 4; ++axis) {
    for (int rep = 0; rep < 8; ++rep) {
      StatePair p;
      p.t = ut(gen);
      p.v = uv(gen);
      for (int k = 0; k < 4; ++k) p.a[k] = p.b[k] = ubox(gen);
      p.b[axis] += uscale(gen);
      pairs.push_back(p);
    }
  }
  for (int s = 0; s < cfg.n_samples; ++s) {
    StatePair p;
    p.t = ut(gen);
    p.v = uv(gen);
    double norm2 = 0;
    double dir[4];
    for (int k = 0; k < 4; ++k) {
      p.a[k] = ubox(gen);
      dir[k] = gauss(gen);
      norm2 += dir[k] * dir[k];
    }
    if (norm2 < 1e-12) continue;
    const double scale = uscale(gen) / std::sqrt(norm2);
    for (int k = 0; k < 4; ++k) p.b[k] = p.a[k] + scale * dir[k];
    pairs.push_back(p);
  }
  return pairs;
}

inline void eval_map(const CoefficientSet& cs, double t, const double* s,
                     double v, double* out) {
  out[0] = -cs.F.val(t, s[0], s[1], s[2], s[3], v);
  out[1] = cs.f.val(t, s[0], s[1], s[2], s[3], v);
  out[2] = -cs.G.val(t, s[0], s[1], s[2], s[3], v);
  out[3] = cs.g.val(t, s[0], s[1], s[2], s[3], v);
}

}  // namespace detail

inline AssumptionReport check_lipschitz(const CoefficientSet& cs,
                                        const SamplerConfig& cfg = {}) {
  AssumptionReport rep;
  const auto pairs = detail::sample_state_pairs(cs.u_min, cs.u_max, cfg);
  for (const auto& p : pairs) {
    double Aa[4], Ab[4];
    detail::eval_map(cs, p.t, p.a, p.v, Aa);
    detail::eval_map(cs, p.t, p.b, p.v, Ab);
    double num = 0, den = 0;
    for (int k = 0; k < 4; ++k) {
      num += (Aa[k] - Ab[k]) * (Aa[k] - Ab[k]);
      den += (p.a[k] - p.b[k]) * (p.a[k] - p.b[k]);
    }
    if (den < 1e-20) continue;
    rep.lipschitz_estimate =
        std::max(rep.lipschitz_estimate, std::sqrt(num / den));
    const double dy = p.a[0] - p.b[0];
    if (std::abs(dy) > 1e-10) {
      const double dh = cs.h.val(p.a[0]) - cs.h.val(p.b[0]);
      rep.h_lipschitz_estimate =
          std::max(rep.h_lipschitz_estimate, std::abs(dh / dy));
    }
    ++rep.samples_used;
  }
  return rep;
}

inline AssumptionReport check_monotonicity(const CoefficientSet& cs,
                                           const SamplerConfig& cfg = {}) {
  constexpr double kClassTol = 1e-9;
  AssumptionReport rep;
  bool first = true;
  bool h_ok = true;
  const auto pairs = detail::sample_state_pairs(cs.u_min, cs.u_max, cfg);
  for (const auto& p : pairs) {
    double Aa[4], Ab[4];
    detail::eval_map(cs, p.t, p.a, p.v, Aa);
    detail::eval_map(cs, p.t, p.b, p.v, Ab);
    double dot = 0, den = 0;
    for (int k = 0; k < 4; ++k) {
      const double ds = p.a[k] - p.b[k];
      dot += (Aa[k] - Ab[k]) * ds;
      den += ds * ds;
    }
    if (den < 1e-20) continue;
    const double q = dot / den;
    if (first) {
      rep.q_min = rep.q_max = q;
      first = false;
    } else {
      rep.q_min = std::min(rep.q_min, q);
      rep.q_max = std::max(rep.q_max, q);
    }
    const double dy = p.a[0] - p.b[0];
    if (std::abs(dy) > 1e-10) {
      const double dh = cs.h.val(p.a[0]) - cs.h.val(p.b[0]);
      if (dh * dy < -kClassTol * dy * dy) h_ok = false;
    }
    ++rep.samples_used;
  }
  if (rep.q_max < -kClassTol) {
    rep.monotonicity_direction = "negative";
    rep.monotonicity_estimate = rep.q_max;
  } else if (rep.q_min > kClassTol) {
    rep.monotonicity_direction = "positive";
    rep.monotonicity_estimate = rep.q_min;
  } else {
    rep.monotonicity_direction = "neither";
    rep.monotonicity_estimate = rep.q_max;
  }
  rep.weak_monotone = rep.q_max <= kClassTol;
  rep.h_monotone = h_ok;
  return rep;
}

namespace detail {

struct LabeledPartial {
  std::string label;
  std::function<double(const double*)> val;   // args (t, y, Y, z, Z, v)
  std::function<double(const double*)> sym;
  int arg_index;                              // which argument the partial is in
};

inline void check_one(const LabeledPartial& item, const double* args,
                      double fd_step, DerivativeReport& rep) {
  double hi[6], lo[6];
  for (int k = 0; k < 6; ++k) hi[k] = lo[k] = args[k];
  hi[item.arg_index] += fd_step;
  lo[item.arg_index] -= fd_step;
  const double fd = (item.val(hi) - item.val(lo)) / (2 * fd_step);
  const double err = std::abs(item.sym(args) - fd) / (1.0 + std::abs(fd));
  ++rep.samples_used;
  if (err > rep.max_error) {
    rep.max_error = err;
    rep.worst = item.label;
  }
}

}  // namespace detail

// Compares every registered symbolic partial against a central finite
// difference at random points. Fails when the worst relative gap exceeds
// cfg.fd_tolerance.
inline DerivativeReport check_derivative_consistency(
    const CoefficientSet& cs, const SamplerConfig& cfg = {}) {
  DerivativeReport rep;
  std::vector<detail::LabeledPartial> items;
  struct Named {
    const char* name;
    const Coef* c;
  };
  const Named coefs[] = {{"f", &cs.f}, {"g", &cs.g}, {"F", &cs.F},
                         {"G", &cs.G}, {"l", &cs.l}};
  const char* partial_names[] = {"dy", "dY", "dz", "dZ", "dv"};
  for (const auto& nc : coefs) {
    const Coef& c = *nc.c;
    const Fn6 partials[] = {c.dy, c.dY, c.dz, c.dZ, c.dv};
    auto wrap6 = [](const Fn6& fn) {
      return [fn](const double* a) {
        return fn(a[0], a[1], a[2], a[3], a[4], a[5]);
      };
    };
    for (int j = 0; j < 5; ++j) {
      detail::LabeledPartial lp;
      lp.label = std::string(nc.name) + "." + partial_names[j];
      lp.val = wrap6(c.val);
      lp.sym = wrap6(partials[j]);
      lp.arg_index = j + 1;
      items.push_back(lp);
    }
  }
  auto wrap1 = [](const Fn1& fn) {
    return [fn](const double* a) { return fn(a[1]); };
  };
  items.push_back({"h.d", wrap1(cs.h.val), wrap1(cs.h.d), 1});
  items.push_back({"h.dd", wrap1(cs.h.d), wrap1(cs.h.dd), 1});
  items.push_back({"Phi.d", wrap1(cs.Phi.val), wrap1(cs.Phi.d), 1});
  items.push_back({"Phi.dd", wrap1(cs.Phi.d), wrap1(cs.Phi.dd), 1});
  auto wrapY = [](const Fn1& fn) {
    return [fn](const double* a) { return fn(a[2]); };
  };
  items.push_back({"gamma_cost.d", wrapY(cs.gamma_cost.val),
                   wrapY(cs.gamma_cost.d), 2});
  items.push_back({"gamma_cost.dd", wrapY(cs.gamma_cost.d),
                   wrapY(cs.gamma_cost.dd), 2});

  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> ubox(-cfg.box, cfg.box);
  std::uniform_real_distribution<double> ut(0.0, cfg.t_max);
  std::uniform_real_distribution<double> uv(cs.u_min, cs.u_max);
  const int n_points = std::max(8, cfg.n_samples / 8);
  for (int s = 0; s < n_points; ++s) {
    double args[6] = {ut(gen), ubox(gen), ubox(gen), ubox(gen), ubox(gen),
                      uv(gen)};
    for (const auto& item : items)
      detail::check_one(item, args, cfg.fd_step, rep);
  }
  rep.pass = rep.max_error <= cfg.fd_tolerance;
  return rep;
}

inline DerivativeReport check_derivative_consistency(
    const DecoupledCoefficientSet& m, const SamplerConfig& cfg = {}) {
  DerivativeReport rep;
  std::vector<detail::LabeledPartial> items;
  // Argument layout reused from the coupled case: (t, x, y, z, _, v); slot 4
  // is unused so labels and indices stay uniform.
  auto wrapX = [](const Fn2& fn) {
    return [fn](const double* a) { return fn(a[1], a[5]); };
  };
  struct NamedX {
    const char* name;
    const XCoef* c;
  };
  const NamedX xcoefs[] = {{"b", &m.b}, {"sigma", &m.sigma}};
  for (const auto& nc : xcoefs) {
    items.push_back({std::string(nc.name) + ".dx", wrapX(nc.c->val),
                     wrapX(nc.c->dx), 1});
    items.push_back({std::string(nc.name) + ".dv", wrapX(nc.c->val),
                     wrapX(nc.c->dv), 5});
  }
  auto wrapD = [](const Fn5& fn) {
    return [fn](const double* a) { return fn(a[0], a[1], a[2], a[3], a[5]); };
  };
  struct NamedD {
    const char* name;
    const DCoef* c;
  };
  const NamedD dcoefs[] = {{"f", &m.f}, {"g", &m.g}, {"l", &m.l}};
  const char* partial_names[] = {"dx", "dy", "dz", "dv"};
  const int arg_of[] = {1, 2, 3, 5};
  for (const auto& nc : dcoefs) {
    const Fn5 partials[] = {nc.c->dx, nc.c->dy, nc.c->dz, nc.c->dv};
    for (int j = 0; j < 4; ++j)
      items.push_back({std::string(nc.name) + "." + partial_names[j],
                       wrapD(nc.c->val), wrapD(partials[j]), arg_of[j]});
  }
  auto wrap1 = [](const Fn1& fn) {
    return [fn](const double* a) { return fn(a[1]); };
  };
  items.push_back({"h.d", wrap1(m.h.val), wrap1(m.h.d), 1});
  items.push_back({"h.dd", wrap1(m.h.d), wrap1(m.h.dd), 1});
  auto wrapY = [](const Fn1& fn) {
    return [fn](const double* a) { return fn(a[2]); };
  };
  items.push_back({"gamma_cost.d", wrapY(m.gamma_cost.val),
                   wrapY(m.gamma_cost.d), 2});

  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> ubox(-cfg.box, cfg.box);
  std::uniform_real_distribution<double> ut(0.0, cfg.t_max);
  // keep v strictly inside [u_min, u_max] so one-sided kinks at the
  // boundary (e.g. powers at v = 0) do not poison the central difference
  const double pad = 2 * cfg.fd_step;
  std::uniform_real_distribution<double> uv(m.u_min + pad, m.u_max - pad);
  const int n_points = std::max(8, cfg.n_samples / 8);
  for (int s = 0; s < n_points; ++s) {
    double args[6] = {ut(gen), ubox(gen), ubox(gen), ubox(gen), 0.0, uv(gen)};
    for (const auto& item : items)
      detail::check_one(item, args, cfg.fd_step, rep);
  }
  rep.pass = rep.max_error <= cfg.fd_tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Built-in models

namespace detail {
inline Fn6 const6(double c) {
  return [c](double, double, double, double, double, double) { return c; };
}
inline Fn1 const1(double c) {
  return [c](double) { return c; };
}
inline Coef zero_coef() {
  Coef c;
  c.val = c.dy = c.dY = c.dz = c.dZ = c.dv = const6(0.0);
  return c;
}
inline Coef quadratic_cost() {
  Coef l;
  l.val = [](double, double y, double Y, double z, double Z, double v) {
    return 0.5 * (y * y + Y * Y + z * z + Z * Z + v * v);
  };
  l.dy = [](double, double y, double, double, double, double) { return y; };
  l.dY = [](double, double, double Y, double, double, double) { return Y; };
  l.dz = [](double, double, double, double z, double, double) { return z; };
  l.dZ = [](double, double, double, double, double Z, double) { return Z; };
  l.dv = [](double, double, double, double, double, double v) { return v; };
  return l;
}
}  // namespace detail

// Linear-quadratic test model. The state pair stays identically zero under
// the zero control, and for a constant control c the solution is
// y = c W(t), Y = c (B(T) - B(t)), z = Z = 0, with total cost
// c^2 (T^2 + 3T) / 2.
inline CoefficientSet make_lq_model() {
  CoefficientSet cs;
  cs.name = "lq";
  cs.f = detail::zero_coef();
  cs.F = detail::zero_coef();
  cs.g = detail::zero_coef();
  cs.g.val = [](double, double, double, double z, double Z, double v) {
    return z - Z + v;
  };
  cs.g.dz = detail::const6(1.0);
  cs.g.dZ = detail::const6(-1.0);
  cs.g.dv = detail::const6(1.0);
  cs.G = detail::zero_coef();
  cs.G.val = [](double, double, double, double z, double Z, double v) {
    return z + Z + v;
  };
  cs.G.dz = detail::const6(1.0);
  cs.G.dZ = detail::const6(1.0);
  cs.G.dv = detail::const6(1.0);
  cs.l = detail::quadratic_cost();
  cs.h.val = detail::const1(0.0);
  cs.h.d = detail::const1(0.0);
  cs.Phi.val = [](double y) { return 0.5 * y * y; };
  cs.Phi.d = [](double y) { return y; };
  cs.Phi.dd = detail::const1(1.0);
  cs.gamma_cost.val = [](double Y) { return 0.5 * Y * Y; };
  cs.gamma_cost.d = [](double Y) { return Y; };
  cs.gamma_cost.dd = detail::const1(1.0);
  cs.u_min = -1.0;
  cs.u_max = 1.0;
  return cs;
}

// Smooth nonlinear model with a strictly dissipative state map (the sampled
// monotonicity quotient stays below about -0.4) and bounded derivatives, for
// exercising the coupled solver away from the linear regime.
inline CoefficientSet make_nonlinear_model() {
  auto scub = [](double x) { return x * x * x / (1.0 + x * x); };
  auto dscub = [](double x) {
    const double d = 1.0 + x * x;
    return (x * x * x * x + 3.0 * x * x) / (d * d);
  };
  auto sech2 = [](double x) {
    const double c = std::cosh(x);
    return 1.0 / (c * c);
  };
  CoefficientSet cs;
  cs.name = "nonlinear";
  cs.f = detail::zero_coef();
  cs.f.val = [scub](double, double y, double Y, double, double Z, double v) {
    return -Y + 0.2 * scub(y) + 0.1 * std::tanh(Z) + 0.2 * v;
  };
  cs.f.dy = [dscub](double, double y, double, double, double, double) {
    return 0.2 * dscub(y);
  };
  cs.f.dY = detail::const6(-1.0);
  cs.f.dZ = [sech2](double, double, double, double, double Z, double) {
    return 0.1 * sech2(Z);
  };
  cs.f.dv = detail::const6(0.2);
  cs.g = detail::zero_coef();
  cs.g.val = [](double, double y, double, double, double Z, double v) {
    return -Z + 0.1 * std::sin(y) + 0.1 * v;
  };
  cs.g.dy = [](double, double y, double, double, double, double) {
    return 0.1 * std::cos(y);
  };
  cs.g.dZ = detail::const6(-1.0);
  cs.g.dv = detail::const6(0.1);
  cs.F = detail::zero_coef();
  cs.F.val = [scub](double, double y, double Y, double z, double, double v) {
    return y + 0.2 * scub(Y) + 0.1 * std::sin(z) + 0.2 * v;
  };
  cs.F.dy = detail::const6(1.0);
  cs.F.dY = [dscub](double, double, double Y, double, double, double) {
    return 0.2 * dscub(Y);
  };
  cs.F.dz = [](double, double, double, double z, double, double) {
    return 0.1 * std::cos(z);
  };
  cs.F.dv = detail::const6(0.2);
  cs.G = detail::zero_coef();
  cs.G.val = [](double, double, double Y, double z, double, double v) {
    return z + 0.1 * std::tanh(Y) + 0.1 * v;
  };
  cs.G.dY = [sech2](double, double, double Y, double, double, double) {
    return 0.1 * sech2(Y);
  };
  cs.G.dz = detail::const6(1.0);
  cs.G.dv = detail::const6(0.1);
  cs.l = detail::quadratic_cost();
  cs.h.val = [](double y) { return 0.5 * y; };
  cs.h.d = detail::const1(0.5);
  cs.Phi.val = [](double y) { return 0.5 * y * y; };
  cs.Phi.d = [](double y) { return y; };
  cs.Phi.dd = detail::const1(1.0);
  cs.gamma_cost.val = [](double Y) { return 0.5 * Y * Y; };
  cs.gamma_cost.d = [](double Y) { return Y; };
  cs.gamma_cost.dd = detail::const1(1.0);
  cs.u_min = -1.0;
  cs.u_max = 1.0;
  return cs;
}

// Controlled reaction-diffusion benchmark model: the control enters through
// the diffusion of X and a power running cost v^p / p, p >= 1.
inline DecoupledCoefficientSet make_reaction_diffusion_model(
    double cost_exponent = 2.0, double v_max = 2.0) {
  require(cost_exponent >= 1.0, "cost exponent must be >= 1");
  require(v_max > 0.0, "v_max must be positive");
  DecoupledCoefficientSet m;
  m.name = "reaction-diffusion";
  auto zero2 = [](double, double) { return 0.0; };
  auto zero5 = [](double, double, double, double, double) { return 0.0; };
  m.b.val = m.b.dx = m.b.dv = zero2;
  m.sigma.val = [](double, double v) { return v; };
  m.sigma.dx = zero2;
  m.sigma.dv = [](double, double) { return 1.0; };
  m.f.val = [](double, double, double y, double z, double) { return y + z; };
  m.f.dx = zero5;
  m.f.dy = [](double, double, double, double, double) { return 1.0; };
  m.f.dz = [](double, double, double, double, double) { return 1.0; };
  m.f.dv = zero5;
  m.g.val = [](double, double, double y, double, double) { return y; };
  m.g.dx = zero5;
  m.g.dy = [](double, double, double, double, double) { return 1.0; };
  m.g.dz = zero5;
  m.g.dv = zero5;
  const double p = cost_exponent;
  m.l.val = [p](double, double, double, double, double v) {
    return std::pow(v, p) / p;
  };
  m.l.dx = m.l.dy = m.l.dz = zero5;
  m.l.dv = [p](double, double, double, double, double v) {
    return std::pow(v, p - 1.0);
  };
  m.h.val = [](double x) { return x; };
  m.h.d = [](double) { return 1.0; };
  m.gamma_cost.val = [](double Y) { return Y; };
  m.gamma_cost.d = [](double) { return 1.0; };
  m.u_min = 0.0;
  m.u_max = v_max;
  return m;
}

// Uncontrolled quadratic terminal value under a unit diffusion; the value
// field is x^2 + (T - t), which a quadratic regression basis represents
// exactly.
inline DecoupledCoefficientSet make_heat_kernel_model() {
  DecoupledCoefficientSet m;
  m.name = "heat-kernel";
  auto zero2 = [](double, double) { return 0.0; };
  auto zero5 = [](double, double, double, double, double) { return 0.0; };
  m.b.val = m.b.dx = m.b.dv = zero2;
  m.sigma.val = [](double, double) { return 1.0; };
  m.sigma.dx = m.sigma.dv = zero2;
  m.f.val = m.f.dx = m.f.dy = m.f.dz = m.f.dv = zero5;
  m.g.val = m.g.dx = m.g.dy = m.g.dz = m.g.dv = zero5;
  m.l.val = m.l.dx = m.l.dy = m.l.dz = m.l.dv = zero5;
  m.h.val = [](double x) { return x * x; };
  m.h.d = [](double x) { return 2.0 * x; };
  m.h.dd = [](double) { return 2.0; };
  m.gamma_cost.val = [](double Y) { return Y; };
  m.gamma_cost.d = [](double) { return 1.0; };
  m.u_min = 0.0;
  m.u_max = 1.0;
  return m;
}

// ---------------------------------------------------------------------------
// Expression-backed models

struct ExpressionModelSpec {
  std::string f, g, F, G, l;  // over t, y, Y, z, Z, v
  std::string h, Phi;         // over y
  std::string gamma_cost;     // over Y
  double u_min = -1.0, u_max = 1.0;
  std::string name = "expression";
};

namespace detail {

inline void require_vars_within(const Expression& e, const char* which,
                                std::initializer_list<Var> allowed) {
  for (int s = 0; s < kNumVars; ++s) {
    const Var var = static_cast<Var>(s);
    if (!e.uses(var)) continue;
    bool ok = false;
    for (Var a : allowed)
      if (a == var) ok = true;
    if (!ok)
      throw input_error(std::string("coefficient '") + which +
                        "' may not use variable '" + var_name(var) + "'");
  }
}

inline Fn6 fn6_of(const Expression& e) {
  return [e](double t, double y, double Y, double z, double Z, double v) {
    double slots[kNumVars] = {t, y, Y, z, Z, v, 0.0};
    return e.eval(slots);
  };
}

inline Coef coef_of(const std::string& text, const char* which) {
  Expression e = Expression::parse(text);
  require_vars_within(e, which, {Var::t, Var::y, Var::Y, Var::z, Var::Z, Var::v});
  Coef c;
  c.val = fn6_of(e);
  c.dy = fn6_of(e.diff(Var::y));
  c.dY = fn6_of(e.diff(Var::Y));
  c.dz = fn6_of(e.diff(Var::z));
  c.dZ = fn6_of(e.diff(Var::Z));
  c.dv = fn6_of(e.diff(Var::v));
  return c;
}

inline TerminalFn terminal_of(const std::string& text, const char* which,
                              Var arg) {
  Expression e = Expression::parse(text);
  require_vars_within(e, which, {arg});
  TerminalFn t;
  const Expression de = e.diff(arg);
  const Expression dde = de.diff(arg);
  const int slot = static_cast<int>(arg);
  t.val = [e, slot](double x) {
    double slots[kNumVars] = {0, 0, 0, 0, 0, 0, 0};
    slots[slot] = x;
    return e.eval(slots);
  };
  t.d = [de, slot](double x) {
    double slots[kNumVars] = {0, 0, 0, 0, 0, 0, 0};
    slots[slot] = x;
    return de.eval(slots);
  };
  t.dd = [dde, slot](double x) {
    double slots[kNumVars] = {0, 0, 0, 0, 0, 0, 0};
    slots[slot] = x;
    return dde.eval(slots);
  };
  return t;
}

}  // namespace detail

// Builds a coupled model from expression strings; every partial derivative
// is produced symbolically, so derivative-consistency checks hold by
// construction up to floating-point error.
inline CoefficientSet make_expression_model(const ExpressionModelSpec& spec) {
  require(spec.u_min < spec.u_max, "control bounds must satisfy u_min < u_max");
  CoefficientSet cs;
  cs.name = spec.name;
  cs.f = detail::coef_of(spec.f.empty() ? "0" : spec.f, "f");
  cs.g = detail::coef_of(spec.g.empty() ? "0" : spec.g, "g");
  cs.F = detail::coef_of(spec.F.empty() ? "0" : spec.F, "F");
  cs.G = detail::coef_of(spec.G.empty() ? "0" : spec.G, "G");
  cs.l = detail::coef_of(spec.l.empty() ? "0" : spec.l, "l");
  cs.h = detail::terminal_of(spec.h.empty() ? "0" : spec.h, "h", Var::y);
  cs.Phi = detail::terminal_of(spec.Phi.empty() ? "0" : spec.Phi, "Phi", Var::y);
  cs.gamma_cost = detail::terminal_of(
      spec.gamma_cost.empty() ? "0" : spec.gamma_cost, "gamma_cost", Var::Y);
  cs.u_min = spec.u_min;
  cs.u_max = spec.u_max;
  return cs;
}

}  // namespace fbdsde
