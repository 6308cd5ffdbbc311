#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "flunow/error.hpp"
#include "flunow/features.hpp"
#include "flunow/models/model.hpp"
#include "flunow/rng.hpp"
#include "flunow/series.hpp"

namespace flunow {

// ---------------------------------------------------------------- metrics

namespace detail {
inline void check_lengths(std::span<const double> predicted, std::span<const double> actual, std::size_t min) {
  if (predicted.size() != actual.size()) throw Error(ErrorKind::ShapeMismatch, "metric inputs differ in length");
  if (actual.size() < min) throw Error(ErrorKind::NoData, "metric needs at least " + std::to_string(min) + " points");
}
}  // namespace detail

/// Coefficient of determination, 1 - SS_res / SS_tot.
inline double r2(std::span<const double> predicted, std::span<const double> actual) {
  detail::check_lengths(predicted, actual, 2);
  if (is_constant(actual)) throw Error(ErrorKind::DegenerateActuals, "R^2 is undefined for constant actuals");
  double mean = 0.0;
  for (double a : actual) mean += a;
  mean /= static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) {
    ss_res += (predicted[t] - actual[t]) * (predicted[t] - actual[t]);
    ss_tot += (actual[t] - mean) * (actual[t] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

inline double mae(std::span<const double> predicted, std::span<const double> actual) {
  detail::check_lengths(predicted, actual, 1);
  double sum = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) sum += std::abs(predicted[t] - actual[t]);
  return sum / static_cast<double>(actual.size());
}

struct MapeResult {
  double value = 0.0;  // percent
  std::size_t skipped_zero_actuals = 0;
};

/// Mean of |(F - A) / A| * 100 over points with A != 0.
inline MapeResult mape_detail(std::span<const double> predicted, std::span<const double> actual) {
  detail::check_lengths(predicted, actual, 1);
  MapeResult out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t t = 0; t < actual.size(); ++t) {
    if (actual[t] == 0.0) {
      ++out.skipped_zero_actuals;
      continue;
    }
    sum += std::abs((predicted[t] - actual[t]) / actual[t]);
    ++used;
  }
  if (used == 0) throw Error(ErrorKind::AllActualsZero, "MAPE is undefined when every actual is zero");
  out.value = 100.0 * sum / static_cast<double>(used);
  return out;
}

inline double mape(std::span<const double> predicted, std::span<const double> actual) {
  return mape_detail(predicted, actual).value;
}

struct MetricReport {
  double r2 = 0.0;
  double mae = 0.0;
  double mape = 0.0;
  std::size_t n = 0;
  std::size_t skipped_zero_actuals = 0;
};

inline MetricReport compute_metrics(std::span<const double> predicted, std::span<const double> actual) {
  MetricReport m;
  m.r2 = r2(predicted, actual);
  m.mae = mae(predicted, actual);
  const auto mp = mape_detail(predicted, actual);
  m.mape = mp.value;
  m.skipped_zero_actuals = mp.skipped_zero_actuals;
  m.n = actual.size();
  return m;
}

// ---------------------------------------------------------------- models

enum class ModelKind { Lasso, Huber, Svr, Forest, Arima };

inline constexpr std::array<ModelKind, 5> kAllModels = {ModelKind::Lasso, ModelKind::Huber, ModelKind::Svr,
                                                        ModelKind::Forest, ModelKind::Arima};

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Lasso: return "lasso";
    case ModelKind::Huber: return "huber";
    case ModelKind::Svr: return "svr";
    case ModelKind::Forest: return "forest";
    case ModelKind::Arima: return "arima";
  }
  return "unknown";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view name) {
  for (ModelKind kind : kAllModels) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

struct ModelSpec {
  ModelKind kind = ModelKind::Huber;
  LassoOptions lasso;
  HuberOptions huber;
  SvrOptions svr;
  ForestOptions forest;
  ArimaOrder arima;
};

/// Fits one of the four regression models. `seed` only matters for the
/// forest.
inline RegressionModel fit_regression(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      std::uint64_t seed) {
  switch (spec.kind) {
    case ModelKind::Lasso: return fit_lasso(X, y, spec.lasso);
    case ModelKind::Huber: return fit_huber(X, y, spec.huber);
    case ModelKind::Svr: return fit_svr_linear(X, y, spec.svr);
    case ModelKind::Forest: {
      ForestOptions options = spec.forest;
      options.seed = seed;
      return fit_forest(X, y, options);
    }
    case ModelKind::Arima: break;
  }
  throw Error(ErrorKind::InvalidArgument, "ARIMA is not a feature regression model");
}

// ---------------------------------------------------------------- backtest

struct Prediction {
  WeekIndex week;
  double actual = 0.0;
  double predicted = 0.0;
};

struct BacktestResult {
  WeekRange window;
  ModelKind model = ModelKind::Huber;
  std::vector<Prediction> predictions;
  MetricReport metrics;

  MetricReport recompute_metrics() const {
    std::vector<double> f, a;
    for (const auto& p : predictions) {
      f.push_back(p.predicted);
      a.push_back(p.actual);
    }
    return compute_metrics(f, a);
  }
};

struct BacktestOptions {
  FeatureOptions features;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

namespace detail {

/// Runs task(k) for k in [0, count) on up to `threads` workers. Results
/// are written by index, so output never depends on scheduling. The
/// exception of the lowest failing index is rethrown.
template <typename Task>
void parallel_for(std::size_t count, unsigned threads, Task&& task) {
  std::vector<std::exception_ptr> errors(count);
  const auto run = [&](std::size_t k) {
    try {
      task(k);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) run(k);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < count; k += workers) run(k);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline double predict_arima(const WeeklySeries& flu, WeekIndex train_start, WeekIndex target, int min_lag,
                            const ArimaOrder& order) {
  const WeekIndex first = std::max(train_start, flu.start());
  const WeekIndex last = target - min_lag;
  if (last < first) throw Error(ErrorKind::EmptyTrain, "no flu history before " + target.to_string());
  const WeeklySeries history = flu.slice(first, last);
  const ArimaModel model = fit_arima(history.values(), order);
  return forecast_arima(model, history.values(), min_lag).back();
}

}  // namespace detail

/// Expanding-window backtest: one fit per test week, one result per
/// evaluation window. Rows start at the first week with full history.
inline std::vector<BacktestResult> backtest(const SignalPanel& panel, const QuerySelectionMap& selected,
                                            const ModelSpec& spec, const SplitPlan& plan,
                                            const BacktestOptions& options = {}) {
  const FeatureOptions& fo = options.features;
  const QuerySelectionMap no_queries;
  const SupervisedDataset ds = build_dataset(panel, spec.kind == ModelKind::Arima ? no_queries : selected, fo,
                                             first_buildable_week(panel, fo), panel.last());
  const std::vector<Split> splits = expanding_splits(ds, plan);

  std::vector<double> predicted(splits.size());
  detail::parallel_for(splits.size(), options.threads, [&](std::size_t k) {
    const Split& split = splits[k];
    if (spec.kind == ModelKind::Arima) {
      predicted[k] = detail::predict_arima(panel.flu(), plan.train_start, ds.weeks[split.test_row],
                                           fo.lags.min_lag, spec.arima);
      return;
    }
    const MaterializedSplit m = materialize(ds, split);
    const RegressionModel model = fit_regression(spec, m.x_train, m.y_train, derive_seed(options.seed, k));
    predicted[k] = predict(model, m.x_test);
  });

  std::vector<BacktestResult> results(plan.eval_windows.size());
  for (std::size_t w = 0; w < results.size(); ++w) {
    results[w].window = plan.eval_windows[w];
    results[w].model = spec.kind;
  }
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const auto row = splits[k].test_row;
    results[splits[k].window].predictions.push_back(
        {ds.weeks[row], ds.y(static_cast<Eigen::Index>(row)), predicted[k]});
  }
  for (auto& r : results) r.metrics = r.recompute_metrics();
  return results;
}

// ---------------------------------------------------------------- ablation

/// Feature block removed in an ablation run.
enum class DropBlock { None, Past, Search, Social, Shopping, Qa };

inline constexpr std::array<DropBlock, 6> kAblationRows = {DropBlock::None,   DropBlock::Past,     DropBlock::Search,
                                                           DropBlock::Social, DropBlock::Shopping, DropBlock::Qa};

inline std::string_view to_string(DropBlock drop) {
  switch (drop) {
    case DropBlock::None: return "none";
    case DropBlock::Past: return "past";
    case DropBlock::Search: return "search";
    case DropBlock::Social: return "social";
    case DropBlock::Shopping: return "shopping";
    case DropBlock::Qa: return "qa";
  }
  return "unknown";
}

inline std::optional<DropBlock> parse_drop_block(std::string_view name) {
  for (DropBlock d : kAblationRows) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

inline std::optional<ResourceKind> dropped_resource(DropBlock drop) {
  switch (drop) {
    case DropBlock::Search: return ResourceKind::SearchQuery;
    case DropBlock::Social: return ResourceKind::SocialMedia;
    case DropBlock::Shopping: return ResourceKind::Shopping;
    case DropBlock::Qa: return ResourceKind::QaService;
    default: return std::nullopt;
  }
}

struct AblationResult {
  DropBlock dropped = DropBlock::None;
  std::vector<BacktestResult> windows;
};

/// Reruns the backtest without one feature block. Dropping `Past` removes
/// every lag feature; dropping a resource removes its query features.
inline AblationResult ablate(const SignalPanel& panel, const QuerySelectionMap& selected, const ModelSpec& spec,
                             const SplitPlan& plan, DropBlock drop, const BacktestOptions& options = {}) {
  QuerySelectionMap kept = selected;
  BacktestOptions run = options;
  if (drop == DropBlock::Past) run.features.include_lags = false;
  if (const auto resource = dropped_resource(drop)) kept.erase(*resource);
  return {drop, backtest(panel, kept, spec, plan, run)};
}

// ---------------------------------------------------------------- reports

inline nlohmann::json to_json(const MetricReport& m) {
  return {{"r2", m.r2}, {"mae", m.mae}, {"mape", m.mape}, {"n", m.n}, {"skipped_zero_actuals", m.skipped_zero_actuals}};
}

inline nlohmann::json to_json(const BacktestResult& r) {
  nlohmann::json predictions = nlohmann::json::array();
  for (const auto& p : r.predictions) {
    predictions.push_back({{"date", p.week.to_string()}, {"actual", p.actual}, {"predicted", p.predicted}});
  }
  return {{"window", {{"start", r.window.start.to_string()}, {"end", r.window.end.to_string()}}},
          {"model", std::string(to_string(r.model))},
          {"r2", r.metrics.r2},
          {"mae", r.metrics.mae},
          {"mape", r.metrics.mape},
          {"n", r.metrics.n},
          {"skipped_zero_actuals", r.metrics.skipped_zero_actuals},
          {"predictions", std::move(predictions)}};
}

/// Plot-ready `date,actual,predicted` rows for one window.
inline void write_plot_csv(std::ostream& out, const BacktestResult& r) {
  out << "date,actual,predicted\n";
  for (const auto& p : r.predictions) {
    out << p.week.to_string() << ',' << format_number(p.actual) << ',' << format_number(p.predicted) << '\n';
  }
}

/// `count` consecutive 52-week windows ending at `last`.
inline std::vector<WeekRange> trailing_windows(WeekIndex last, int count, int weeks = 52) {
  std::vector<WeekRange> out;
  for (int k = count - 1; k >= 0; --k) {
    const WeekIndex end = last - static_cast<std::int64_t>(k) * weeks;
    out.push_back({end - (weeks - 1), end});
  }
  return out;
}

}  // namespace flunow
