#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "flunow/error.hpp"

namespace flunow {

/// Two scalings of the same loss. `Full` is a^2 inside the band and
/// 2*delta*|a| - delta^2 outside (2|a| - 1 at delta = 1); `Canonical` is
/// exactly half of it. Both give the same minimizer.
enum class HuberBranch { Full, Canonical };

inline double huber_loss(double a, double delta, HuberBranch branch = HuberBranch::Full) {
  const double abs_a = std::abs(a);
  const double full = abs_a <= delta ? a * a : 2.0 * delta * abs_a - delta * delta;
  return branch == HuberBranch::Full ? full : 0.5 * full;
}

/// d loss / d a
inline double huber_psi(double a, double delta, HuberBranch branch = HuberBranch::Full) {
  const double full = std::abs(a) <= delta ? 2.0 * a : 2.0 * delta * (a > 0 ? 1.0 : -1.0);
  return branch == HuberBranch::Full ? full : 0.5 * full;
}

struct HuberParams {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  double sigma = 1.0;
};

/// Sum over samples of L((y_i - x_i beta - intercept) / sigma).
inline double huber_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const HuberParams& params,
                              double delta, HuberBranch branch = HuberBranch::Full) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double r = y(i) - X.row(i).dot(params.beta) - params.intercept;
    total += huber_loss(r / params.sigma, delta, branch);
  }
  return total;
}

/// Gradient of huber_objective, ordered (beta..., intercept, sigma).
inline Eigen::VectorXd huber_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const HuberParams& params,
                                      double delta, HuberBranch branch = HuberBranch::Full) {
  const Eigen::Index p = X.cols();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p + 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double r = y(i) - X.row(i).dot(params.beta) - params.intercept;
    const double a = r / params.sigma;
    const double psi = huber_psi(a, delta, branch);
    grad.head(p) -= (psi / params.sigma) * X.row(i).transpose();
    grad(p) -= psi / params.sigma;
    grad(p + 1) -= psi * a / params.sigma;
  }
  return grad;
}

struct HuberOptions {
  double delta = 1.0;
  HuberBranch branch = HuberBranch::Full;
  bool intercept = true;
  /// When set, sigma is held at this value instead of being re-estimated.
  std::optional<double> fixed_sigma;
  double tolerance = 1e-8;
  int max_iterations = 2000;
};

struct HuberModel {
  Eigen::VectorXd beta;
  double intercept = 0.0;
  double sigma = 1.0;
  double delta = 1.0;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(beta) + intercept; }
  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& X) const { return (X * beta).array() + intercept; }
};

namespace detail {

inline double median_of(std::vector<double> values) {
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// 1.4826 * median |r - median(r)|, consistent for Gaussian noise.
inline double mad_scale(const Eigen::VectorXd& residuals) {
  std::vector<double> r(residuals.data(), residuals.data() + residuals.size());
  const double med = median_of(r);
  for (double& v : r) v = std::abs(v - med);
  return 1.4826 * median_of(std::move(r));
}

/// E[min(|Z|, delta)^2] for standard normal Z.
inline double clipped_normal_second_moment(double delta) {
  const double tail = 0.5 * std::erfc(delta / std::sqrt(2.0));
  const double density = std::exp(-0.5 * delta * delta) / std::sqrt(2.0 * 3.14159265358979323846);
  return (1.0 - 2.0 * tail) - 2.0 * delta * density + 2.0 * delta * delta * tail;
}

/// Huber's proposal 2 scale update:
/// sigma'^2 = sigma^2 * sum clip(r_i / sigma, delta)^2 / ((n - k) * kappa).
/// Unlike the MAD it is continuous in the residuals, so the alternation
/// with the coefficient step settles instead of hopping between medians.
inline double proposal2_scale(const Eigen::VectorXd& residuals, double sigma, double delta, Eigen::Index k) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    const double a = std::clamp(residuals(i) / sigma, -delta, delta);
    sum += a * a;
  }
  const double dof = static_cast<double>(std::max<Eigen::Index>(residuals.size() - k, 1));
  return sigma * std::sqrt(sum / (dof * clipped_normal_second_moment(delta)));
}

inline Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-13) return ldlt.solve(b);
  return A.completeOrthogonalDecomposition().solve(b);
}

}  // namespace detail

/// Alternates an iteratively-reweighted least-squares step for the
/// coefficients at the current scale with a proposal 2 re-estimate of the
/// scale from the new residuals, until neither moves by more than the
/// tolerance. The scale starts from the MAD of the least-squares residuals.
inline HuberModel fit_huber(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const HuberOptions& options = {}) {
  if (X.rows() < 2 || y.size() != X.rows()) throw Error(ErrorKind::NoData, "huber regression needs at least two rows");
  if (!(options.delta > 0.0)) throw Error(ErrorKind::InvalidArgument, "huber delta must be positive");
  if (options.fixed_sigma && !(*options.fixed_sigma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "huber sigma must be positive");
  }
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const Eigen::Index k = options.intercept ? p + 1 : p;

  Eigen::MatrixXd design(n, k);
  design.leftCols(p) = X;
  if (options.intercept) design.col(p).setOnes();

  // Least-squares start.
  Eigen::VectorXd theta = detail::solve_normal_equations(design.transpose() * design, design.transpose() * y);
  Eigen::VectorXd residuals = y - design * theta;

  const double sigma_floor = 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff());
  double sigma = options.fixed_sigma ? *options.fixed_sigma : std::max(detail::mad_scale(residuals), sigma_floor);
  const auto estimate_sigma = [&](const Eigen::VectorXd& r) {
    if (options.fixed_sigma) return *options.fixed_sigma;
    return std::max(detail::proposal2_scale(r, sigma, options.delta, k), sigma_floor);
  };

  // IRLS weights psi(a)/a; the branch scaling cancels in the solve but is
  // kept so both loss forms go through the same arithmetic path.
  const double inner_weight = huber_psi(options.delta, options.delta, options.branch) / options.delta;
  Eigen::VectorXd weights(n);
  bool converged = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = residuals(i) / sigma;
      weights(i) = std::abs(a) <= options.delta ? inner_weight : huber_psi(a, options.delta, options.branch) / a;
    }
    const Eigen::MatrixXd weighted = design.transpose() * weights.asDiagonal();
    const Eigen::VectorXd next = detail::solve_normal_equations(weighted * design, weighted * y);
    residuals = y - design * next;
    const double next_sigma = estimate_sigma(residuals);

    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    const double step = (next - theta).cwiseAbs().maxCoeff();
    const double sigma_step = std::abs(next_sigma - sigma) / std::max(1.0, next_sigma);
    theta = next;
    sigma = next_sigma;
    if (step <= options.tolerance * scale && sigma_step <= options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorKind::NonConvergence, "huber regression did not converge");

  HuberModel model;
  model.beta = theta.head(p);
  model.intercept = options.intercept ? theta(p) : 0.0;
  model.sigma = sigma;
  model.delta = options.delta;
  return model;
}

}  // namespace flunow
