#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "flunow/error.hpp"
#include "flunow/rng.hpp"
#include "flunow/series.hpp"

namespace flunow {

struct BcpConfig {
  int iterations = 500;
  int burn_in = 50;
  double p0 = 0.1;  // upper bound of the uniform prior on the change probability
  double w0 = 0.1;  // upper bound of the uniform prior on the signal-to-noise ratio
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1 || burn_in < 0 || burn_in >= iterations) {
      throw Error(ErrorKind::InvalidArgument, "change-point sampler needs 0 <= burn_in < iterations");
    }
    if (!(p0 > 0.0 && p0 <= 1.0) || !(w0 > 0.0 && w0 <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "p0 and w0 must lie in (0, 1]");
    }
  }
};

/// A partition of n points into contiguous blocks. u[i] = 1 places a block
/// boundary between points i and i + 1.
struct PartitionState {
  std::vector<std::uint8_t> u;
  double within = 0.0;   // W: sum of squares around block means
  double between = 0.0;  // B: sum over blocks of n_k (block mean - overall mean)^2
  int blocks = 1;

  /// Direct evaluation, used to audit incremental bookkeeping.
  static PartitionState from_scratch(std::span<const double> x, std::vector<std::uint8_t> u) {
    PartitionState state;
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    std::size_t begin = 0;
    for (std::size_t end = 0; end < x.size(); ++end) {
      if (end + 1 < x.size() && u[end] == 0) continue;
      double block_mean = 0.0;
      for (std::size_t k = begin; k <= end; ++k) block_mean += x[k];
      const double len = static_cast<double>(end - begin + 1);
      block_mean /= len;
      for (std::size_t k = begin; k <= end; ++k) state.within += (x[k] - block_mean) * (x[k] - block_mean);
      state.between += len * (block_mean - mean) * (block_mean - mean);
      begin = end + 1;
    }
    state.blocks = 1 + static_cast<int>(std::count(u.begin(), u.end(), std::uint8_t{1}));
    state.u = std::move(u);
    return state;
  }
};

namespace detail {

/// log of the integral of exp(log_f) over [0, upper]. The integrand is
/// rescaled by its maximum (attained at `peak`) before adaptive
/// Gauss-Kronrod quadrature, so the result neither overflows nor
/// underflows.
template <typename F>
double log_integral(F&& log_f, double upper, double peak) {
  const double log_max = log_f(peak);
  auto scaled = [&](double s) {
    const double v = log_f(s) - log_max;
    return v < -745.0 ? 0.0 : std::exp(v);
  };
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(scaled, 0.0, upper, 15, 1e-10);
  return log_max + std::log(value);
}

}  // namespace detail

/// log of the integral over p in [0, p0] of p^a (1 - p)^c.
inline double log_partition_integral(double a, double c, double p0) {
  const auto log_f = [a, c](double p) {
    const double lp = a > 0.0 ? a * std::log(p) : 0.0;
    const double lq = c > 0.0 ? c * std::log1p(-p) : 0.0;
    return lp + lq;
  };
  const double mode = a + c > 0.0 ? a / (a + c) : 0.0;
  return detail::log_integral(log_f, p0, std::min(mode, p0));
}

/// log of the integral over w in [0, w0] of w^a / (W + B w)^m. With
/// t = B w / (W + B w) this is W^(a-m+1) B^(-a-1) times an incomplete beta
/// integral, which is used whenever it is defined and representable.
/// Otherwise falls back to quadrature in s = sqrt(w), where the integrand
/// is smooth at the origin.
inline double log_likelihood_integral(double a, double m, double within, double between, double w0) {
  if (between > 0.0 && within > 0.0 && m - a - 1.0 > 0.0) {
    const double t0 = between * w0 / (within + between * w0);
    const double regularized = boost::math::ibeta(a + 1.0, m - a - 1.0, t0);
    if (regularized > 0.0 && std::isfinite(regularized)) {
      const double log_beta = boost::math::lgamma(a + 1.0) + boost::math::lgamma(m - a - 1.0) - boost::math::lgamma(m);
      return (a - m + 1.0) * std::log(within) - (a + 1.0) * std::log(between) + log_beta + std::log(regularized);
    }
  }
  const double upper = std::sqrt(w0);
  const double power = 2.0 * a + 1.0;
  const auto log_f = [=](double s) {
    const double ls = power > 0.0 ? power * std::log(s) : 0.0;
    return std::log(2.0) + ls - m * std::log(within + between * s * s);
  };
  double peak = upper;
  if (between > 0.0 && 2.0 * m > power) {
    peak = std::min(upper, std::sqrt(power * within / (between * (2.0 * m - power))));
  }
  return detail::log_integral(log_f, upper, peak);
}

struct PosteriorResult {
  std::vector<double> probabilities;  // length n - 1
  bool degenerate = false;            // zero-variance input, nothing sampled
};

/// Gibbs sampler over block boundaries of a product-partition model. For
/// position i, with b the block count when u_i = 0 and (W1, B1) / (W0, B0)
/// the sums for u_i = 1 / u_i = 0:
///
///   p_i / (1 - p_i) =
///     [int_0^p0 p^b (1-p)^(n-b-1) dp] [int_0^w0 w^(b/2) / (W1 + B1 w)^((n-1)/2) dw]
///   / [int_0^p0 p^(b-1) (1-p)^(n-b) dp] [int_0^w0 w^((b-1)/2) / (W0 + B0 w)^((n-1)/2) dw]
class ProductPartitionSampler {
 public:
  ProductPartitionSampler(std::span<const double> x, const BcpConfig& config)
      : x_(x.begin(), x.end()), config_(config) {
    const std::size_t n = x_.size();
    if (n < 3) throw Error(ErrorKind::InvalidArgument, "change-point analysis needs at least 3 points");
    prefix_.assign(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix_[i + 1] = prefix_[i] + x_[i];
    const double mean = prefix_[n] / static_cast<double>(n);
    for (double v : x_) total_ += (v - mean) * (v - mean);
    offset_ = static_cast<double>(n) * mean * mean;
    u_.assign(n - 1, 0);
    q_ = block_q(0, n - 1);
    blocks_ = 1;
    log_prior_.resize(n + 1, std::numeric_limits<double>::quiet_NaN());
  }

  std::size_t size() const { return x_.size(); }

  /// Incrementally maintained partition state.
  PartitionState state() const {
    PartitionState s;
    s.u = u_;
    s.between = q_ - offset_;
    s.within = total_ - s.between;
    s.blocks = blocks_;
    return s;
  }

  /// Log odds of u_i = 1 against u_i = 0 given all other boundaries.
  double log_odds(std::size_t i) const {
    const auto [left, right] = block_bounds(i);
    const double q_current = u_[i] ? block_q(left, i) + block_q(i + 1, right) : block_q(left, right);
    const double q_rest = q_ - q_current;
    const double q_split = q_rest + block_q(left, i) + block_q(i + 1, right);
    const double q_merged = q_rest + block_q(left, right);
    const int b = blocks_ - (u_[i] ? 1 : 0);
    return log_odds_from_sums(b, q_split, q_merged);
  }

  /// One systematic-scan sweep over all positions.
  void sweep(Rng& rng) {
    const std::size_t positions = u_.size();
    // Positions right of i are untouched during the sweep until visited, so
    // the next boundary to the right can be precomputed.
    next_boundary_.assign(positions + 1, positions);
    for (std::size_t k = positions; k-- > 0;) next_boundary_[k] = u_[k] ? k : next_boundary_[k + 1];
    left_start_ = 0;
    for (std::size_t i = 0; i < positions; ++i) {
      const double lo = log_odds(i);
      const double prob = 1.0 / (1.0 + std::exp(-lo));
      const std::uint8_t draw = rng.uniform() < prob ? 1 : 0;
      if (draw != u_[i]) {
        const auto [left, right] = block_bounds(i);
        const double split = block_q(left, i) + block_q(i + 1, right);
        const double merged = block_q(left, right);
        q_ += draw ? split - merged : merged - split;
        blocks_ += draw ? 1 : -1;
        u_[i] = draw;
      }
      if (u_[i]) left_start_ = i + 1;
    }
    next_boundary_.clear();
  }

  const std::vector<std::uint8_t>& boundaries() const { return u_; }

 private:
  /// Block containing points i and i + 1 if u_i were 0: [left, right].
  std::pair<std::size_t, std::size_t> block_bounds(std::size_t i) const {
    std::size_t left = 0;
    if (!next_boundary_.empty()) {
      left = left_start_;
    } else {
      for (std::size_t k = i; k-- > 0;) {
        if (u_[k]) {
          left = k + 1;
          break;
        }
      }
    }
    std::size_t right = x_.size() - 1;
    if (!next_boundary_.empty()) {
      const std::size_t nb = next_boundary_[i + 1];
      if (nb < u_.size()) right = nb;
    } else {
      for (std::size_t k = i + 1; k < u_.size(); ++k) {
        if (u_[k]) {
          right = k;
          break;
        }
      }
    }
    return {left, right};
  }

  /// S^2 / len for points [first, last].
  double block_q(std::size_t first, std::size_t last) const {
    const double s = prefix_[last + 1] - prefix_[first];
    return s * s / static_cast<double>(last - first + 1);
  }

  double log_prior_ratio(int b) const {
    auto& cached = log_prior_[static_cast<std::size_t>(b)];
    if (std::isnan(cached)) {
      const double n = static_cast<double>(x_.size());
      const double bb = static_cast<double>(b);
      cached = log_partition_integral(bb, n - bb - 1.0, config_.p0) -
               log_partition_integral(bb - 1.0, n - bb, config_.p0);
    }
    return cached;
  }

  double log_odds_from_sums(int b, double q_split, double q_merged) const {
    const double n = static_cast<double>(x_.size());
    const double m = 0.5 * (n - 1.0);
    const double floor = 1e-12 * std::max(total_, 1e-300);
    const double b_split = std::max(q_split - offset_, 0.0);
    const double b_merged = std::max(q_merged - offset_, 0.0);
    const double w_split = std::max(total_ - b_split, floor);
    const double w_merged = std::max(total_ - b_merged, floor);
    const double bb = static_cast<double>(b);
    return log_prior_ratio(b) + log_likelihood_integral(0.5 * bb, m, w_split, b_split, config_.w0) -
           log_likelihood_integral(0.5 * (bb - 1.0), m, w_merged, b_merged, config_.w0);
  }

  std::vector<double> x_;
  BcpConfig config_;
  std::vector<double> prefix_;
  double total_ = 0.0;
  double offset_ = 0.0;  // n * mean^2
  std::vector<std::uint8_t> u_;
  double q_ = 0.0;  // sum over blocks of S_k^2 / n_k
  int blocks_ = 1;
  std::vector<std::size_t> next_boundary_;
  std::size_t left_start_ = 0;
  mutable std::vector<double> log_prior_;
};

/// Posterior probability of a boundary after each of the first n - 1
/// points. The series is standardized first; a constant series yields all
/// zeros without sampling.
inline PosteriorResult bcp_posterior(std::span<const double> series, const BcpConfig& config) {
  config.validate();
  if (series.size() < 3) throw Error(ErrorKind::InvalidArgument, "change-point analysis needs at least 3 points");
  if (!std::all_of(series.begin(), series.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorKind::InvalidArgument, "change-point input must be finite");
  }
  PosteriorResult result;
  result.probabilities.assign(series.size() - 1, 0.0);
  if (is_constant(series)) {
    result.degenerate = true;
    return result;
  }
  const double n = static_cast<double>(series.size());
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> z(series.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (series[i] - mean) / sd;

  ProductPartitionSampler sampler(z, config);
  Rng rng(config.seed);
  std::vector<int> counts(series.size() - 1, 0);
  for (int iter = 0; iter < config.iterations; ++iter) {
    sampler.sweep(rng);
    if (iter < config.burn_in) continue;
    const auto& u = sampler.boundaries();
    for (std::size_t i = 0; i < u.size(); ++i) counts[i] += u[i];
  }
  const double kept = static_cast<double>(config.iterations - config.burn_in);
  for (std::size_t i = 0; i < counts.size(); ++i) result.probabilities[i] = counts[i] / kept;
  return result;
}

/// Positions whose probability strictly exceeds the threshold.
inline std::vector<std::size_t> detect(std::span<const double> probabilities, double threshold = 0.5) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] > threshold) out.push_back(i);
  }
  return out;
}

/// Sensitivity and PPV are percentages; NaN marks a zero denominator.
struct MatchReport {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  double sensitivity = std::numeric_limits<double>::quiet_NaN();
  double ppv = std::numeric_limits<double>::quiet_NaN();

  void finalize() {
    const auto tp = static_cast<double>(true_positive);
    sensitivity = true_positive + false_negative > 0
                      ? 100.0 * tp / static_cast<double>(true_positive + false_negative)
                      : std::numeric_limits<double>::quiet_NaN();
    ppv = true_positive + false_positive > 0 ? 100.0 * tp / static_cast<double>(true_positive + false_positive)
                                             : std::numeric_limits<double>::quiet_NaN();
  }
};

/// One-to-one matching of resource change points to flu change points
/// within +-window. Candidate pairs are taken nearest first; equal
/// distances go leftmost first, which keeps the result symmetric in the
/// two lists.
inline MatchReport match(std::span<const std::size_t> flu_cps, std::span<const std::size_t> resource_cps,
                         std::size_t window = 1) {
  const auto ascending = [](std::span<const std::size_t> v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>{}) == v.end();
  };
  if (!ascending(flu_cps) || !ascending(resource_cps)) {
    throw Error(ErrorKind::InvalidArgument, "change-point lists must be strictly ascending");
  }
  struct Pair {
    std::size_t distance, low, high, flu, resource;
  };
  std::vector<Pair> pairs;
  for (std::size_t f = 0; f < flu_cps.size(); ++f) {
    for (std::size_t r = 0; r < resource_cps.size(); ++r) {
      const std::size_t a = flu_cps[f], b = resource_cps[r];
      const std::size_t distance = a > b ? a - b : b - a;
      if (distance <= window) pairs.push_back({distance, std::min(a, b), std::max(a, b), f, r});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return std::tie(x.distance, x.low, x.high, x.flu, x.resource) <
           std::tie(y.distance, y.low, y.high, y.flu, y.resource);
  });
  std::vector<bool> flu_used(flu_cps.size(), false), resource_used(resource_cps.size(), false);
  MatchReport report;
  for (const auto& pair : pairs) {
    if (flu_used[pair.flu] || resource_used[pair.resource]) continue;
    flu_used[pair.flu] = resource_used[pair.resource] = true;
    ++report.true_positive;
  }
  report.false_negative = flu_cps.size() - report.true_positive;
  report.false_positive = resource_cps.size() - report.true_positive;
  report.finalize();
  return report;
}

struct QueryChangeScore {
  std::string term;
  double r = 0.0;
  PosteriorResult posterior;
  std::vector<std::size_t> detected;
  MatchReport report;
};

struct ResourceChangeScore {
  PosteriorResult flu_posterior;
  std::vector<std::size_t> flu_detected;
  std::vector<QueryChangeScore> queries;
  MatchReport pooled;
};

struct ScoreOptions {
  std::size_t top_k = 3;
  double threshold = 0.5;
  std::size_t window = 1;
};

/// Picks the top_k queries by correlation with `target`, runs the sampler
/// on the flu series and on each query, and matches each query's change
/// points against the flu ones. Series k uses seed derive_seed(seed, k),
/// with the flu series as k = 0 and queries numbered by rank from 1.
inline ResourceChangeScore score_resource(const WeeklySeries& flu, const std::vector<WeeklySeries>& queries,
                                          const WeeklySeries& target, const BcpConfig& config,
                                          const ScoreOptions& options = {}) {
  std::vector<std::pair<double, const WeeklySeries*>> ranked;
  for (const auto& q : queries) {
    if (!q.same_range(flu) || !q.same_range(target)) {
      throw Error(ErrorKind::AlignmentError, "query '" + q.name() + "' is not aligned with the flu series");
    }
    if (is_constant(q.values())) continue;
    ranked.emplace_back(pearson(q.values(), target.values()), &q);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second->name() < b.second->name();
  });
  if (ranked.size() > options.top_k) ranked.resize(options.top_k);

  ResourceChangeScore score;
  BcpConfig flu_config = config;
  flu_config.seed = derive_seed(config.seed, 0);
  score.flu_posterior = bcp_posterior(flu.values(), flu_config);
  score.flu_detected = detect(score.flu_posterior.probabilities, options.threshold);
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    QueryChangeScore qs;
    qs.term = ranked[k].second->name();
    qs.r = ranked[k].first;
    BcpConfig qc = config;
    qc.seed = derive_seed(config.seed, k + 1);
    qs.posterior = bcp_posterior(ranked[k].second->values(), qc);
    qs.detected = detect(qs.posterior.probabilities, options.threshold);
    qs.report = match(score.flu_detected, qs.detected, options.window);
    score.pooled.true_positive += qs.report.true_positive;
    score.pooled.false_positive += qs.report.false_positive;
    score.pooled.false_negative += qs.report.false_negative;
    score.queries.push_back(std::move(qs));
  }
  score.pooled.finalize();
  return score;
}

}  // namespace flunow
