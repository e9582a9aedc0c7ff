#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "fbdsde/errors.hpp"

namespace fbdsde {

inline constexpr int kMaxDegree = 16;

// Monomial count for total degree <= degree over n_features variables
// (n_features is 1, 2, or 3 everywhere in this library).
inline int basis_size(int n_features, int degree) {
  if (n_features == 1) return degree + 1;
  if (n_features == 2) return (degree + 1) * (degree + 2) / 2;
  return (degree + 1) * (degree + 2) * (degree + 3) / 6;
}

namespace detail {

// Shifts and scales features to zero mean and unit variance, then expands
// them into graded monomials. A zero-variance feature collapses to the
// intercept so a degenerate design degrades to a plain mean.
class BasisExpander {
 public:
  BasisExpander(const double* features, int n, int n_features, int degree)
      : n_features_(n_features), degree_(degree) {
    require(n >= 1 && n_features >= 1 && degree >= 0, "regression: empty design");
    require(n_features <= 3 && degree <= kMaxDegree,
            "regression: unsupported basis shape");
    mean_.assign(n_features, 0.0);
    scale_.assign(n_features, 1.0);
    for (int j = 0; j < n_features; ++j) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += features[i * n_features + j];
      mean_[j] = s / n;
      double ss = 0;
      for (int i = 0; i < n; ++i) {
        const double d = features[i * n_features + j] - mean_[j];
        ss += d * d;
      }
      const double sd = std::sqrt(ss / n);
      scale_[j] = sd > 1e-300 ? sd : 0.0;  // 0 marks a degenerate feature
    }
  }

  int n_basis() const { return basis_size(n_features_, degree_); }

  // Standardized monomials, graded order. One feature: 1, u, u^2, ...
  // Two features: 1, u, w, u^2, u*w, w^2, ... (total degree <= degree_).
  // Three features append the third variable the same way.
  void expand(const double* x, double* out) const {
    double u[3] = {0.0, 0.0, 0.0};
    for (int j = 0; j < n_features_; ++j)
      u[j] = scale_[j] > 0.0 ? (x[j] - mean_[j]) / scale_[j] : 0.0;
    int c = 0;
    if (n_features_ == 1) {
      double p = 1.0;
      for (int d = 0; d <= degree_; ++d) {
        out[c++] = p;
        p *= u[0];
      }
      return;
    }
    double pu[kMaxDegree + 1], pw[kMaxDegree + 1], pv[kMaxDegree + 1];
    pu[0] = pw[0] = pv[0] = 1.0;
    for (int d = 1; d <= degree_; ++d) {
      pu[d] = pu[d - 1] * u[0];
      pw[d] = pw[d - 1] * u[1];
      pv[d] = pv[d - 1] * u[2];
    }
    if (n_features_ == 2) {
      for (int total = 0; total <= degree_; ++total)
        for (int j = 0; j <= total; ++j) out[c++] = pu[total - j] * pw[j];
      return;
    }
    for (int total = 0; total <= degree_; ++total)
      for (int j = 0; j <= total; ++j)
        for (int k = 0; k <= total - j; ++k)
          out[c++] = pu[total - j - k] * pw[j] * pv[k];
  }

 private:
  int n_features_, degree_;
  std::vector<double> mean_, scale_;
};

}  // namespace detail

// Least-squares fit of targets on all monomials of the (standardized)
// features up to a total degree, with optional ridge penalty.
//
// The factorization is computed once; any number of targets can then be
// fitted against it. With ridge == 0 a rank-deficient design is an error.
class RidgeRegression {
 public:
  // features: n x n_features, row-major.
  RidgeRegression(const double* features, int n, int n_features, int degree,
                  double ridge)
      : n_(n),
        n_features_(n_features),
        expander_(features, n, n_features, degree) {
    const int m = expander_.n_basis();
    require(n >= m || ridge > 0.0,
            "regression: fewer samples than basis functions");
    const int rows = ridge > 0.0 ? n + m : n;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, m);
    std::vector<double> row(m);
    for (int i = 0; i < n; ++i) {
      expander_.expand(features + i * n_features, row.data());
      for (int c = 0; c < m; ++c) A(i, c) = row[c];
    }
    if (ridge > 0.0) {
      const double lam = std::sqrt(ridge);
      for (int c = 0; c < m; ++c) A(n + c, c) = lam;
    }
    qr_.compute(A);
    if (ridge == 0.0 && qr_.rank() < m)
      throw solver_error("regression design matrix is rank deficient (rank " +
                         std::to_string(qr_.rank()) + " of " + std::to_string(m) +
                         ")");
    m_ = m;
  }

  int n_samples() const { return n_; }
  int n_basis() const { return m_; }

  // Fits one target vector; returns the fitted coefficient vector.
  std::vector<double> fit(const std::vector<double>& target) const {
    require(static_cast<int>(target.size()) == n_, "regression: target size");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(qr_.rows());
    for (int i = 0; i < n_; ++i) b(i) = target[i];
    Eigen::VectorXd beta = qr_.solve(b);
    return std::vector<double>(beta.data(), beta.data() + m_);
  }

  // Evaluates a fitted coefficient vector at one feature point.
  double predict(const std::vector<double>& beta, const double* feature_point) const {
    std::vector<double> row(m_);
    expander_.expand(feature_point, row.data());
    double v = 0;
    for (int c = 0; c < m_; ++c) v += beta[c] * row[c];
    return v;
  }

  // Convenience: fit and evaluate at every design point.
  std::vector<double> fit_predict(const std::vector<double>& target,
                                  const double* features) const {
    const auto beta = fit(target);
    std::vector<double> out(n_);
    std::vector<double> row(m_);
    for (int i = 0; i < n_; ++i) {
      expander_.expand(features + i * n_features_, row.data());
      double v = 0;
      for (int c = 0; c < m_; ++c) v += beta[c] * row[c];
      out[i] = v;
    }
    return out;
  }

 private:
  int n_, n_features_, m_ = 0;
  detail::BasisExpander expander_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

// Fitted values of a joint fit: the part explained by the features alone and
// the coefficient of the increment, both evaluated at every design point.
struct LevelSlopeFit {
  std::vector<double> level;
  std::vector<double> slope;
};

// Joint least-squares fit of a target on [phi, inc * phi], where phi is the
// monomial basis of the features and inc a per-sample stochastic increment.
// For a target of the form a(state) + b(state) * inc + noise the level block
// recovers a and the slope block recovers b.
//
// Estimating b this way instead of through the moment ratio
// E[target * inc] / E[inc^2] matters: the state-explained part of the target
// is removed before the increment correlation is read off, so samples that
// share an increment value still average their noise away.
class IncrementRegression {
 public:
  IncrementRegression(const double* features, int n, int n_features, int degree,
                      double ridge, const double* increment)
      : n_(n), expander_(features, n, n_features, degree) {
    const int m = expander_.n_basis();
    m_ = m;
    double ss = 0;
    for (int i = 0; i < n; ++i) ss += increment[i] * increment[i];
    inc_scale_ = std::sqrt(ss / n);
    // a vanishing increment leaves the slope unidentified; fall back to a
    // plain fit with zero slope
    degenerate_ = inc_scale_ <= 1e-300;
    const int cols = degenerate_ ? m : 2 * m;
    require(n >= cols || ridge > 0.0,
            "regression: fewer samples than basis functions");
    const int rows = ridge > 0.0 ? n + cols : n;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, cols);
    phi_.resize(static_cast<size_t>(n) * m);
    for (int i = 0; i < n; ++i) {
      double* row = phi_.data() + static_cast<size_t>(i) * m;
      expander_.expand(features + i * n_features, row);
      for (int c = 0; c < m; ++c) A(i, c) = row[c];
      if (!degenerate_) {
        const double w = increment[i] / inc_scale_;
        for (int c = 0; c < m; ++c) A(i, m + c) = row[c] * w;
      }
    }
    if (ridge > 0.0) {
      const double lam = std::sqrt(ridge);
      for (int c = 0; c < cols; ++c) A(n + c, c) = lam;
    }
    qr_.compute(A);
    if (ridge == 0.0 && qr_.rank() < cols)
      throw solver_error("regression design matrix is rank deficient (rank " +
                         std::to_string(qr_.rank()) + " of " +
                         std::to_string(cols) + ")");
  }

  LevelSlopeFit fit(const std::vector<double>& target) const {
    require(static_cast<int>(target.size()) == n_, "regression: target size");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(qr_.rows());
    for (int i = 0; i < n_; ++i) b(i) = target[i];
    const Eigen::VectorXd beta = qr_.solve(b);
    LevelSlopeFit out;
    out.level.assign(n_, 0.0);
    out.slope.assign(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      const double* row = phi_.data() + static_cast<size_t>(i) * m_;
      double lv = 0, sv = 0;
      for (int c = 0; c < m_; ++c) {
        lv += beta(c) * row[c];
        if (!degenerate_) sv += beta(m_ + c) * row[c];
      }
      out.level[i] = lv;
      if (!degenerate_) out.slope[i] = sv / inc_scale_;
    }
    return out;
  }

 private:
  int n_, m_ = 0;
  bool degenerate_ = false;
  double inc_scale_ = 0.0;
  detail::BasisExpander expander_;
  std::vector<double> phi_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

}  // namespace fbdsde
