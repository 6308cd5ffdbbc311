#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "flunow/error.hpp"

namespace flunow {

struct SvrOptions {
  double c_penalty = 1.0;
  double epsilon = 0.1;
  /// Maximal KKT violation accepted at termination.
  double tolerance = 1e-4;
  long max_iterations = 10'000'000;
};

struct SvrModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double c_penalty = 1.0;
  double epsilon = 0.1;
  Eigen::VectorXd alpha;       // multiplier of the upper tube constraint per training point
  Eigen::VectorXd alpha_star;  // multiplier of the lower tube constraint
  bool converged = true;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(weights) + bias; }
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& X) const { return (X * weights).array() + bias; }
};

/// epsilon-insensitive SVR with a linear kernel, solved in the dual by SMO
/// with second-order working set selection. The 2n dual variables are
/// (alpha_1..alpha_n, alpha*_1..alpha*_n) with labels +1 / -1:
///
///   min  1/2 a'Qa + p'a   s.t.  s'a = 0,  0 <= a <= C
///   Q_tu = s_t s_u <x_t, x_u>,  p = (eps - y, eps + y)
inline SvrModel fit_svr_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SvrOptions& options = {}) {
  if (X.rows() < 1 || y.size() != X.rows()) throw Error(ErrorKind::NoData, "svr needs at least one row");
  if (!(options.c_penalty > 0.0)) throw Error(ErrorKind::InvalidArgument, "svr C must be positive");
  if (options.epsilon < 0.0) throw Error(ErrorKind::InvalidArgument, "svr epsilon must be non-negative");

  const Eigen::Index n = X.rows();
  const Eigen::Index m = 2 * n;
  const double C = options.c_penalty;
  constexpr double kTau = 1e-12;

  const Eigen::MatrixXd kernel = X * X.transpose();
  const auto idx = [n](Eigen::Index t) { return t < n ? t : t - n; };
  std::vector<double> sign(static_cast<std::size_t>(m));
  std::vector<double> alpha(static_cast<std::size_t>(m), 0.0);
  std::vector<double> grad(static_cast<std::size_t>(m));
  for (Eigen::Index t = 0; t < m; ++t) {
    const auto st = static_cast<std::size_t>(t);
    sign[st] = t < n ? 1.0 : -1.0;
    grad[st] = options.epsilon - sign[st] * y(idx(t));
  }
  const auto q = [&](Eigen::Index t, Eigen::Index u) {
    return sign[static_cast<std::size_t>(t)] * sign[static_cast<std::size_t>(u)] * kernel(idx(t), idx(u));
  };
  const auto diag = [&](Eigen::Index t) { return kernel(idx(t), idx(t)); };
  const auto at_upper = [&](std::size_t t) { return alpha[t] >= C; };
  const auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  bool converged = false;
  for (long iter = 0; iter < options.max_iterations; ++iter) {
    // First index: maximal violating pair, first half.
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < m; ++t) {
      const auto st = static_cast<std::size_t>(t);
      if (sign[st] > 0 ? !at_upper(st) : !at_lower(st)) {
        const double v = -sign[st] * grad[st];
        if (v >= gmax) {
          gmax = v;
          i = t;
        }
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < m; ++t) {
      const auto st = static_cast<std::size_t>(t);
      if (sign[st] > 0 ? at_lower(st) : at_upper(st)) continue;
      const double v = sign[st] * grad[st];
      gmax2 = std::max(gmax2, v);
      if (i < 0) continue;
      const double grad_diff = gmax + v;
      if (grad_diff > 0.0) {
        double quad = diag(i) + diag(t) - 2.0 * sign[static_cast<std::size_t>(i)] * sign[st] * q(i, t);
        if (quad <= 0.0) quad = kTau;
        const double obj = -(grad_diff * grad_diff) / quad;
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < options.tolerance) {
      converged = true;
      break;
    }

    const auto si = static_cast<std::size_t>(i);
    const auto sj = static_cast<std::size_t>(j);
    const double old_i = alpha[si];
    const double old_j = alpha[sj];
    const double qij = q(i, j);
    if (sign[si] != sign[sj]) {
      double quad = diag(i) + diag(j) + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[si] - grad[sj]) / quad;
      const double diff = alpha[si] - alpha[sj];
      alpha[si] += delta;
      alpha[sj] += delta;
      if (diff > 0.0) {
        if (alpha[sj] < 0.0) {
          alpha[sj] = 0.0;
          alpha[si] = diff;
        }
      } else if (alpha[si] < 0.0) {
        alpha[si] = 0.0;
        alpha[sj] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[si] > C) {
          alpha[si] = C;
          alpha[sj] = C - diff;
        }
      } else if (alpha[sj] > C) {
        alpha[sj] = C;
        alpha[si] = C + diff;
      }
    } else {
      double quad = diag(i) + diag(j) - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[si] - grad[sj]) / quad;
      const double sum = alpha[si] + alpha[sj];
      alpha[si] -= delta;
      alpha[sj] += delta;
      if (sum > C) {
        if (alpha[si] > C) {
          alpha[si] = C;
          alpha[sj] = sum - C;
        }
      } else if (alpha[sj] < 0.0) {
        alpha[sj] = 0.0;
        alpha[si] = sum;
      }
      if (sum > C) {
        if (alpha[sj] > C) {
          alpha[sj] = C;
          alpha[si] = sum - C;
        }
      } else if (alpha[si] < 0.0) {
        alpha[si] = 0.0;
        alpha[sj] = sum;
      }
    }
    const double di = alpha[si] - old_i;
    const double dj = alpha[sj] - old_j;
    for (Eigen::Index t = 0; t < m; ++t) {
      grad[static_cast<std::size_t>(t)] += q(i, t) * di + q(j, t) * dj;
    }
  }

  // Bias from free variables, or the midpoint of the feasible interval.
  double upper = std::numeric_limits<double>::infinity();
  double lower = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  long free_count = 0;
  for (std::size_t t = 0; t < static_cast<std::size_t>(m); ++t) {
    const double yg = sign[t] * grad[t];
    if (at_upper(t)) {
      if (sign[t] < 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else if (at_lower(t)) {
      if (sign[t] > 0) upper = std::min(upper, yg);
      else lower = std::max(lower, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (upper + lower);

  SvrModel model;
  model.c_penalty = C;
  model.epsilon = options.epsilon;
  model.bias = -rho;
  model.converged = converged;
  model.alpha.resize(n);
  model.alpha_star.resize(n);
  Eigen::VectorXd coef(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    // Only the difference enters the solution; splitting it this way keeps
    // alpha * alpha_star = 0 and never raises the dual objective.
    const double d = alpha[static_cast<std::size_t>(t)] - alpha[static_cast<std::size_t>(t + n)];
    coef(t) = d;
    model.alpha(t) = std::max(d, 0.0);
    model.alpha_star(t) = std::max(-d, 0.0);
  }
  model.weights = X.transpose() * coef;
  return model;
}

}  // namespace flunow
