#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flunow/error.hpp"

namespace flunow {

struct ArimaOrder {
  int p = 3;
  int d = 1;
  int q = 2;

  friend bool operator==(const ArimaOrder&, const ArimaOrder&) = default;
};

struct ArimaOptions {
  /// Nelder-Mead stops once the simplex objective spread is below
  /// tolerance * (|f_best| + tolerance).
  double tolerance = 1e-8;
  int max_evaluations = 100000;
};

/// z_t = c + sum_k ar_k z_{t-k} + sum_k ma_k e_{t-k} + e_t on the d-times
/// differenced series z. The constant c is only estimated when d = 0.
struct ArimaModel {
  ArimaOrder order;
  Eigen::VectorXd ar;
  Eigen::VectorXd ma;
  double intercept = 0.0;
  double noise_variance = 0.0;
};

inline std::vector<double> difference(std::span<const double> x, int d) {
  std::vector<double> z(x.begin(), x.end());
  for (int k = 0; k < d; ++k) {
    if (z.empty()) break;
    for (std::size_t i = 0; i + 1 < z.size(); ++i) z[i] = z[i + 1] - z[i];
    z.pop_back();
  }
  return z;
}

/// Conditional residuals: e_t = 0 for t < p, then the ARMA recursion.
inline std::vector<double> arima_residuals(std::span<const double> z, const Eigen::VectorXd& ar,
                                           const Eigen::VectorXd& ma, double intercept) {
  const auto p = static_cast<std::size_t>(ar.size());
  const auto q = static_cast<std::size_t>(ma.size());
  std::vector<double> e(z.size(), 0.0);
  for (std::size_t t = p; t < z.size(); ++t) {
    double pred = intercept;
    for (std::size_t k = 1; k <= p; ++k) pred += ar(static_cast<Eigen::Index>(k - 1)) * z[t - k];
    for (std::size_t k = 1; k <= q && k <= t; ++k) pred += ma(static_cast<Eigen::Index>(k - 1)) * e[t - k];
    e[t] = z[t] - pred;
  }
  return e;
}

inline double css_objective(std::span<const double> z, const Eigen::VectorXd& ar, const Eigen::VectorXd& ma,
                            double intercept) {
  const auto e = arima_residuals(z, ar, ma, intercept);
  double ss = 0.0;
  for (std::size_t t = static_cast<std::size_t>(ar.size()); t < e.size(); ++t) ss += e[t] * e[t];
  return std::isfinite(ss) ? ss : std::numeric_limits<double>::infinity();
}

namespace detail {

/// Downhill simplex. Returns the best vertex found.
template <typename F>
Eigen::VectorXd nelder_mead(F&& f, Eigen::VectorXd start, double tolerance, int max_evals, bool& converged) {
  const Eigen::Index k = start.size();
  converged = false;
  if (k == 0) {
    converged = true;
    return start;
  }
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(k + 1), start);
  std::vector<double> values(static_cast<std::size_t>(k + 1));
  for (Eigen::Index i = 0; i < k; ++i) {
    auto& v = simplex[static_cast<std::size_t>(i + 1)];
    v(i) += std::abs(v(i)) > 1e-3 ? 0.1 * v(i) : 0.05;
  }
  int evals = 0;
  for (std::size_t i = 0; i < simplex.size(); ++i) {
    values[i] = f(simplex[i]);
    ++evals;
  }
  std::vector<std::size_t> order(simplex.size());
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(values[worst] - values[best]) <= tolerance * (std::abs(values[best]) + tolerance)) {
      converged = true;
      return simplex[best];
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(k);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = f(reflected);
    ++evals;
    if (fr < values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = f(expanded);
      ++evals;
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
    } else if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
    } else {
      const bool outside = fr < values[worst];
      const Eigen::VectorXd contracted =
          outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
      const double fc = f(contracted);
      ++evals;
      if (fc < (outside ? fr : values[worst])) {
        simplex[worst] = contracted;
        values[worst] = fc;
      } else {
        for (std::size_t i = 0; i < simplex.size(); ++i) {
          if (i == best) continue;
          simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
          values[i] = f(simplex[i]);
          ++evals;
        }
      }
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  return simplex[static_cast<std::size_t>(it - values.begin())];
}

/// Hannan-Rissanen start: long AR for innovations, then least squares on
/// lagged z and lagged innovations.
inline Eigen::VectorXd hannan_rissanen(const std::vector<double>& z, int p, int q, bool intercept) {
  const int n = static_cast<int>(z.size());
  const int k = p + q + (intercept ? 1 : 0);
  Eigen::VectorXd start = Eigen::VectorXd::Zero(k);
  std::vector<double> innov(z.size(), 0.0);
  int skip = p;
  if (q > 0) {
    const int m = std::clamp(n / 4, p + q, std::max(p + q, 12));
    if (n - m < 2 * m) return start;
    Eigen::MatrixXd A(n - m, m + 1);
    Eigen::VectorXd b(n - m);
    for (int t = m; t < n; ++t) {
      for (int j = 1; j <= m; ++j) A(t - m, j - 1) = z[static_cast<std::size_t>(t - j)];
      A(t - m, m) = 1.0;
      b(t - m) = z[static_cast<std::size_t>(t)];
    }
    const Eigen::VectorXd phi = A.colPivHouseholderQr().solve(b);
    const Eigen::VectorXd fitted = A * phi;
    for (int t = m; t < n; ++t) innov[static_cast<std::size_t>(t)] = b(t - m) - fitted(t - m);
    skip = m + q;
  }
  skip = std::max(skip, p);
  if (k == 0 || n - skip <= k) return start;
  Eigen::MatrixXd A(n - skip, k);
  Eigen::VectorXd b(n - skip);
  for (int t = skip; t < n; ++t) {
    int col = 0;
    if (intercept) A(t - skip, col++) = 1.0;
    for (int j = 1; j <= p; ++j) A(t - skip, col++) = z[static_cast<std::size_t>(t - j)];
    for (int j = 1; j <= q; ++j) A(t - skip, col++) = innov[static_cast<std::size_t>(t - j)];
    b(t - skip) = z[static_cast<std::size_t>(t)];
  }
  Eigen::VectorXd sol = A.colPivHouseholderQr().solve(b);
  if (!sol.allFinite()) return start;
  // Keep the start inside the invertible region, where CSS is well behaved.
  for (Eigen::Index i = (intercept ? 1 : 0); i < k; ++i) sol(i) = std::clamp(sol(i), -0.95, 0.95);
  return sol;
}

}  // namespace detail

/// Differences d times, then minimizes the conditional sum of squares
/// over (c, ar, ma) with Nelder-Mead, restarting from the optimum until a
/// restart no longer improves the objective.
inline ArimaModel fit_arima(std::span<const double> series, ArimaOrder order = {}, const ArimaOptions& options = {}) {
  if (order.p < 0 || order.d < 0 || order.q < 0) throw Error(ErrorKind::InvalidArgument, "ARIMA orders must be >= 0");
  const bool intercept = order.d == 0;
  const int n_params = order.p + order.q + (intercept ? 1 : 0);
  if (n_params == 0) {
    if (series.size() < static_cast<std::size_t>(order.d + 1)) {
      throw Error(ErrorKind::SeriesTooShort, "series shorter than the differencing order");
    }
  } else if (series.size() <= static_cast<std::size_t>(order.p + order.d + order.q + 10)) {
    throw Error(ErrorKind::SeriesTooShort, "series needs more than p + d + q + 10 observations");
  }

  const std::vector<double> z = difference(series, order.d);
  const auto unpack = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& ar, Eigen::VectorXd& ma, double& c) {
    Eigen::Index at = 0;
    c = intercept ? theta(at++) : 0.0;
    ar = theta.segment(at, order.p);
    ma = theta.segment(at + order.p, order.q);
  };
  const auto objective = [&](const Eigen::VectorXd& theta) {
    Eigen::VectorXd ar, ma;
    double c = 0.0;
    unpack(theta, ar, ma, c);
    return css_objective(z, ar, ma, c);
  };

  Eigen::VectorXd theta = detail::hannan_rissanen(z, order.p, order.q, intercept);
  double value = objective(theta);
  if (n_params > 0) {
    int budget = options.max_evaluations;
    for (int restart = 0; restart < 20 && budget > 0; ++restart) {
      bool converged = false;
      Eigen::VectorXd next = detail::nelder_mead(objective, theta, options.tolerance, budget / 4, converged);
      const double next_value = objective(next);
      budget -= budget / 4;
      const bool improved = next_value < value - options.tolerance * (std::abs(value) + options.tolerance);
      if (next_value <= value) {
        theta = next;
        value = next_value;
      }
      if (converged && !improved) break;
      if (budget <= 0) throw Error(ErrorKind::NonConvergence, "ARIMA optimizer exhausted its evaluation budget");
    }
    if (!std::isfinite(value)) throw Error(ErrorKind::NonConvergence, "ARIMA objective is not finite");
  }

  ArimaModel model;
  model.order = order;
  unpack(theta, model.ar, model.ma, model.intercept);
  const std::size_t used = z.size() > static_cast<std::size_t>(order.p) ? z.size() - static_cast<std::size_t>(order.p) : 0;
  model.noise_variance = used > 0 ? css_objective(z, model.ar, model.ma, model.intercept) / static_cast<double>(used) : 0.0;
  return model;
}

/// Iterated h-step forecast after the last element of `history`, with
/// future innovations set to zero, integrated back d times.
inline std::vector<double> forecast_arima(const ArimaModel& model, std::span<const double> history, int horizon) {
  if (horizon < 1) throw Error(ErrorKind::InvalidArgument, "forecast horizon must be >= 1");
  const auto& order = model.order;
  if (history.size() < static_cast<std::size_t>(std::max(1, order.p + order.d))) {
    throw Error(ErrorKind::InsufficientHistory, "forecast needs at least p + d trailing observations");
  }
  // levels[k] is the k-times differenced history.
  std::vector<std::vector<double>> levels;
  levels.emplace_back(history.begin(), history.end());
  for (int k = 0; k < order.d; ++k) levels.push_back(difference(levels.back(), 1));

  std::vector<double> z = levels.back();
  std::vector<double> e = arima_residuals(z, model.ar, model.ma, model.intercept);
  for (int h = 0; h < horizon; ++h) {
    const std::size_t t = z.size();
    double pred = model.intercept;
    for (int k = 1; k <= order.p; ++k) pred += model.ar(k - 1) * z[t - static_cast<std::size_t>(k)];
    for (int k = 1; k <= order.q; ++k) {
      if (static_cast<std::size_t>(k) <= t) pred += model.ma(k - 1) * e[t - static_cast<std::size_t>(k)];
    }
    z.push_back(pred);
    e.push_back(0.0);
  }
  std::vector<double> ahead(z.end() - horizon, z.end());
  for (int k = order.d - 1; k >= 0; --k) {
    double last = levels[static_cast<std::size_t>(k)].back();
    for (double& v : ahead) {
      last += v;
      v = last;
    }
  }
  return ahead;
}

}  // namespace flunow
