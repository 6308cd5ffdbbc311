#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "flunow/error.hpp"

namespace flunow {

struct LassoOptions {
  double lambda = 1.0;
  bool intercept = true;
  /// Stop when every scaled coordinate step |d beta_j| * ||x_j|| falls
  /// below tolerance * max(1, ||y_centered||).
  double tolerance = 1e-12;
  int max_sweeps = 200000;
};

struct LassoModel {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  double lambda = 0.0;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(beta) + intercept; }
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& X) const {
    return (X * beta).array() + intercept;
  }
};

/// ||y - X beta - intercept||^2 + lambda * ||beta||_1
inline double lasso_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                              double intercept, double lambda) {
  const Eigen::VectorXd r = y - X * beta - Eigen::VectorXd::Constant(y.size(), intercept);
  return r.squaredNorm() + lambda * beta.lpNorm<1>();
}

inline double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

namespace detail {

/// Homotopy (LARS with the lasso modification) on the Gram form. With
/// gamma = lambda / 2, the solution path is piecewise linear in gamma:
/// on active set A with signs s, beta_A = G_AA^-1 (c_A - gamma s_A).
/// Starting from gamma = max |c_j| and beta = 0, it walks down to the
/// target, adding a coordinate when its correlation reaches gamma and
/// dropping one when its coefficient crosses zero. Returns false if an
/// active block becomes singular or the step budget runs out; `beta` then
/// holds the last breakpoint, which is still a good warm start.
inline bool lasso_homotopy(const Eigen::MatrixXd& gram, const Eigen::VectorXd& corr, double target,
                           Eigen::VectorXd& beta) {
  const Eigen::Index p = corr.size();
  beta.setZero(p);
  std::vector<int> sign(static_cast<std::size_t>(p), 0);  // 0 = inactive
  double gamma = 0.0;
  Eigen::Index first = -1;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (gram(j, j) > 0.0 && std::abs(corr(j)) > gamma) {
      gamma = std::abs(corr(j));
      first = j;
    }
  }
  if (first < 0 || gamma <= target) return true;
  sign[static_cast<std::size_t>(first)] = corr(first) > 0.0 ? 1 : -1;
  // A coordinate that just changed state sits exactly on its event
  // boundary; rounding must not let it cross straight back.
  Eigen::Index just_entered = first, just_left = -1;

  const long budget = 20 * p + 100;
  for (long step = 0; step < budget; ++step) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (sign[static_cast<std::size_t>(j)] != 0) active.push_back(j);
    }
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd g(k, k);
    Eigen::VectorXd s(k), c(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index l = 0; l < k; ++l) g(i, l) = gram(active[i], active[l]);
      s(i) = sign[static_cast<std::size_t>(active[i])];
      c(i) = corr(active[i]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14) return false;
    // Decreasing gamma by t moves beta_A by t * d.
    const Eigen::VectorXd d = ldlt.solve(s);
    const Eigen::VectorXd base = ldlt.solve(c - gamma * s);
    Eigen::VectorXd full_d = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < k; ++i) {
      beta(active[i]) = base(i);
      full_d(active[i]) = d(i);
    }
    const Eigen::VectorXd resid_corr = corr - gram * beta;
    const Eigen::VectorXd slope = gram * full_d;

    double t = gamma - target;
    Eigen::Index enter = -1, leave = -1;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (sign[static_cast<std::size_t>(j)] != 0 || gram(j, j) <= 0.0 || j == just_left) continue;
      // c_j - t a_j = +-(gamma - t)
      for (const double sg : {1.0, -1.0}) {
        const double denom = 1.0 - sg * slope(j);
        if (denom <= 0.0) continue;
        const double tj = (gamma - sg * resid_corr(j)) / denom;
        if (tj > 0.0 && tj < t) {
          t = tj;
          enter = j;
          leave = -1;
        }
      }
    }
    for (Eigen::Index i = 0; i < k; ++i) {
      if (d(i) == 0.0 || active[i] == just_entered) continue;
      const double ti = -base(i) / d(i);
      if (ti > 0.0 && ti < t) {
        t = ti;
        leave = active[i];
        enter = -1;
      }
    }
    for (Eigen::Index i = 0; i < k; ++i) beta(active[i]) = base(i) + t * d(i);
    gamma -= t;
    just_entered = enter;
    just_left = leave;
    if (enter >= 0) {
      sign[static_cast<std::size_t>(enter)] = resid_corr(enter) - t * slope(enter) > 0.0 ? 1 : -1;
    } else if (leave >= 0) {
      sign[static_cast<std::size_t>(leave)] = 0;
      beta(leave) = 0.0;
    } else {
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Exact path-following (see detail::lasso_homotopy) with cyclic coordinate
/// descent as the finishing pass. The intercept is unpenalized, which is
/// the same as solving on centered data. Coordinate descent alone is very
/// slow on strongly correlated columns such as adjacent lags.
inline LassoModel fit_lasso(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LassoOptions& options = {}) {
  if (X.rows() < 1 || y.size() != X.rows()) throw Error(ErrorKind::NoData, "lasso needs at least one row");
  if (options.lambda < 0.0) throw Error(ErrorKind::InvalidArgument, "lasso lambda must be non-negative");
  const Eigen::Index p = X.cols();

  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(p);
  double y_mean = 0.0;
  if (options.intercept) {
    x_mean = X.colwise().mean();
    y_mean = y.mean();
  }
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  const Eigen::MatrixXd gram = Xc.transpose() * Xc;
  const Eigen::VectorXd corr = Xc.transpose() * yc;
  const double half_lambda = 0.5 * options.lambda;
  Eigen::VectorXd beta;
  detail::lasso_homotopy(gram, corr, half_lambda, beta);
  // grad(j) = x_j' (y - X beta)
  Eigen::VectorXd grad = corr - gram * beta;
  const double stop = options.tolerance * std::max(1.0, yc.norm());

  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    double max_step = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double norm2 = gram(j, j);
      if (norm2 <= 0.0) continue;
      const double old = beta(j);
      const double updated = soft_threshold(grad(j) + norm2 * old, half_lambda) / norm2;
      const double delta = updated - old;
      if (delta == 0.0) continue;
      beta(j) = updated;
      grad.noalias() -= gram.col(j) * delta;
      max_step = std::max(max_step, std::abs(delta) * std::sqrt(norm2));
    }
    if (max_step <= stop) break;
  }

  LassoModel model;
  model.beta = std::move(beta);
  model.lambda = options.lambda;
  model.intercept = options.intercept ? y_mean - x_mean.dot(model.beta) : 0.0;
  return model;
}

}  // namespace flunow
