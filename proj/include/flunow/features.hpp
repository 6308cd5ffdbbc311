#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flunow/error.hpp"
#include "flunow/series.hpp"

namespace flunow {

/// Lags min_lag..max_lag weeks before the target week, inclusive.
struct LagSpec {
  int min_lag = 2;
  int max_lag = 53;

  std::size_t count() const { return static_cast<std::size_t>(max_lag - min_lag + 1); }

  void validate() const {
    if (min_lag < 1 || max_lag < min_lag) throw Error(ErrorKind::InvalidArgument, "lag spec needs 1 <= min <= max");
  }
};

/// Selected query terms per resource. Iteration order (resource enum, then
/// list order) fixes the exogenous feature order.
using QuerySelectionMap = std::map<ResourceKind, std::vector<std::string>>;

struct FeatureOptions {
  LagSpec lags;
  bool include_lags = true;
  int signal_lag = 2;
};

struct WeekRange {
  WeekIndex start;
  WeekIndex end;  // inclusive

  std::size_t weeks() const { return static_cast<std::size_t>(weeks_between(start, end) + 1); }
};

struct SupervisedDataset {
  std::vector<WeekIndex> weeks;  // target week per row, ascending
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::optional<StandardizationParams> standardization;

  std::size_t rows() const { return weeks.size(); }
  std::size_t features() const { return feature_names.size(); }
};

/// Element j is the flu count at week t - (min_lag + j).
inline std::vector<double> lag_features(const WeeklySeries& flu, const LagSpec& spec, WeekIndex t) {
  spec.validate();
  const WeekIndex oldest = t - spec.max_lag;
  if (!flu.contains(oldest) || !flu.contains(t - spec.min_lag)) {
    throw Error(ErrorKind::InsufficientHistory, "flu history does not reach week " + oldest.to_string());
  }
  std::vector<double> out;
  out.reserve(spec.count());
  for (int lag = spec.min_lag; lag <= spec.max_lag; ++lag) out.push_back(flu.at(t - lag));
  return out;
}

inline const WeeklySeries& find_query(const SignalPanel& panel, ResourceKind resource, const std::string& term) {
  const WeeklySeries* s = panel.find(term);
  if (s == nullptr || s->resource() != resource) {
    throw Error(ErrorKind::InvalidArgument,
                "panel has no " + std::string(to_string(resource)) + " series named '" + term + "'");
  }
  return *s;
}

/// One value per selected query, taken at week t - signal_lag.
inline std::vector<double> exogenous_features(const SignalPanel& panel, const QuerySelectionMap& selected,
                                              WeekIndex t, int signal_lag) {
  if (signal_lag < 0) throw Error(ErrorKind::InvalidArgument, "signal lag must be non-negative");
  const WeekIndex source = t - signal_lag;
  std::vector<double> out;
  for (const auto& [resource, terms] : selected) {
    for (const auto& term : terms) {
      const WeeklySeries& s = find_query(panel, resource, term);
      if (!s.contains(source)) {
        throw Error(ErrorKind::InsufficientHistory, "'" + term + "' has no value for week " + source.to_string());
      }
      out.push_back(s.at(source));
    }
  }
  return out;
}

inline std::vector<std::string> feature_names(const QuerySelectionMap& selected, const FeatureOptions& options) {
  std::vector<std::string> names;
  if (options.include_lags) {
    for (int lag = options.lags.min_lag; lag <= options.lags.max_lag; ++lag) {
      names.push_back("flu_lag_" + std::to_string(lag));
    }
  }
  for (const auto& [resource, terms] : selected) {
    for (const auto& term : terms) names.push_back(std::string(to_string(resource)) + ":" + term);
  }
  return names;
}

/// First week whose row can be built from the panel. Lag history is always
/// reserved, even when lags are excluded, so ablated datasets cover the
/// same rows as the full one.
inline WeekIndex first_buildable_week(const SignalPanel& panel, const FeatureOptions& options) {
  return panel.start() + std::max(options.lags.max_lag, options.signal_lag);
}

/// Rows for every week in [first, last]; lag block then exogenous block.
/// Values are raw; standardization is fit per split.
inline SupervisedDataset build_dataset(const SignalPanel& panel, const QuerySelectionMap& selected,
                                       const FeatureOptions& options, WeekIndex first, WeekIndex last) {
  options.lags.validate();
  if (first > last) throw Error(ErrorKind::InvalidArgument, "dataset range is empty");
  const WeeklySeries& flu = panel.flu();
  SupervisedDataset ds;
  ds.feature_names = feature_names(selected, options);
  const auto n = static_cast<std::size_t>(weeks_between(first, last) + 1);
  ds.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ds.feature_names.size()));
  ds.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const WeekIndex t = first + static_cast<std::int64_t>(i);
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::Index col = 0;
    // Lag history is required even when the block is dropped.
    const auto lags = lag_features(flu, options.lags, t);
    if (options.include_lags) {
      for (double v : lags) ds.X(row, col++) = v;
    }
    for (double v : exogenous_features(panel, selected, t, options.signal_lag)) ds.X(row, col++) = v;
    ds.y(row) = flu.at(t);
    ds.weeks.push_back(t);
  }
  return ds;
}

inline void write_dataset_csv(std::ostream& out, const SupervisedDataset& ds) {
  out << "target_date,y";
  for (const auto& name : ds.feature_names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    out << ds.weeks[i].to_string() << ',' << format_number(ds.y(row));
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) out << ',' << format_number(ds.X(row, j));
    out << '\n';
  }
}

struct SplitPlan {
  WeekIndex train_start;
  std::vector<WeekRange> eval_windows;

  void validate() const {
    for (std::size_t w = 0; w < eval_windows.size(); ++w) {
      const auto& win = eval_windows[w];
      if (win.start > win.end) throw Error(ErrorKind::InvalidArgument, "evaluation window ends before it starts");
      if (win.start <= train_start) {
        throw Error(ErrorKind::InvalidArgument, "evaluation window must start after the training start");
      }
      if (w > 0 && win.start <= eval_windows[w - 1].end) {
        throw Error(ErrorKind::InvalidArgument, "evaluation windows must be disjoint and ascending");
      }
    }
  }
};

/// Training rows are [train_begin, train_end); the test row is train_end
/// or later only when the dataset starts after train_start.
struct Split {
  std::size_t window = 0;
  std::size_t test_row = 0;
  std::size_t train_begin = 0;
  std::size_t train_end = 0;

  std::size_t train_size() const { return train_end - train_begin; }
};

/// One split per test week: train on every row with
/// train_start <= week < test week.
inline std::vector<Split> expanding_splits(const SupervisedDataset& ds, const SplitPlan& plan) {
  plan.validate();
  if (ds.rows() == 0) throw Error(ErrorKind::NoData, "dataset has no rows");
  const auto row_of = [&](WeekIndex week) -> std::optional<std::size_t> {
    const auto offset = weeks_between(ds.weeks.front(), week);
    if (offset < 0 || static_cast<std::size_t>(offset) >= ds.rows()) return std::nullopt;
    return static_cast<std::size_t>(offset);
  };
  std::size_t train_begin = 0;
  while (train_begin < ds.rows() && ds.weeks[train_begin] < plan.train_start) ++train_begin;

  std::vector<Split> splits;
  for (std::size_t w = 0; w < plan.eval_windows.size(); ++w) {
    const auto& win = plan.eval_windows[w];
    const auto lo = row_of(win.start);
    const auto hi = row_of(win.end);
    if (!lo || !hi) {
      throw Error(ErrorKind::InsufficientHistory, "evaluation window " + win.start.to_string() + ".." +
                                                      win.end.to_string() + " lies outside the dataset rows");
    }
    for (std::size_t row = *lo; row <= *hi; ++row) {
      if (row <= train_begin) {
        throw Error(ErrorKind::EmptyTrain, "no training rows precede week " + ds.weeks[row].to_string());
      }
      splits.push_back({w, row, train_begin, row});
    }
  }
  return splits;
}

struct MaterializedSplit {
  Eigen::MatrixXd x_train;
  Eigen::VectorXd y_train;
  Eigen::RowVectorXd x_test;
  double y_test = 0.0;
  StandardizationParams standardization;
};

/// Fits standardization on the split's training rows only and applies it
/// to both sides.
inline MaterializedSplit materialize(const SupervisedDataset& ds, const Split& split) {
  const auto begin = static_cast<Eigen::Index>(split.train_begin);
  const auto count = static_cast<Eigen::Index>(split.train_size());
  const auto test = static_cast<Eigen::Index>(split.test_row);
  MaterializedSplit out;
  const Eigen::MatrixXd raw_train = ds.X.middleRows(begin, count);
  out.standardization = standardize_fit(raw_train);
  out.x_train = standardize_apply(raw_train, out.standardization);
  out.y_train = ds.y.segment(begin, count);
  out.x_test = standardize_apply(ds.X.row(test), out.standardization).row(0);
  out.y_test = ds.y(test);
  return out;
}

}  // namespace flunow
