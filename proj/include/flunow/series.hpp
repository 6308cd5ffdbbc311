#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "flunow/error.hpp"

namespace flunow {

/// Monday of an ISO week. Successive weeks are exactly seven days apart.
class WeekIndex {
 public:
  WeekIndex() = default;

  explicit WeekIndex(std::chrono::sys_days monday) : day_(monday) {
    if (std::chrono::weekday{monday} != std::chrono::Monday) {
      throw Error(ErrorKind::InvalidArgument, "week start " + format(monday) + " is not a Monday");
    }
  }

  static WeekIndex from_ymd(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw Error(ErrorKind::InvalidArgument, "invalid calendar date");
    return WeekIndex(std::chrono::sys_days{ymd});
  }

  /// Parses YYYY-MM-DD; the date must be a Monday.
  static WeekIndex parse(std::string_view text) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_uint(text.substr(0, 4), y) ||
        !parse_uint(text.substr(5, 2), m) || !parse_uint(text.substr(8, 2), d)) {
      throw Error(ErrorKind::ParseError, "expected YYYY-MM-DD, got '" + std::string(text) + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw Error(ErrorKind::ParseError, "invalid calendar date '" + std::string(text) + "'");
    if (std::chrono::weekday{std::chrono::sys_days{ymd}} != std::chrono::Monday) {
      throw Error(ErrorKind::ParseError, "'" + std::string(text) + "' is not a Monday");
    }
    return WeekIndex(std::chrono::sys_days{ymd});
  }

  /// Monday of the ISO week containing `day`.
  static WeekIndex containing(std::chrono::sys_days day) {
    const unsigned iso = std::chrono::weekday{day}.iso_encoding();  // Monday = 1
    return WeekIndex(day - std::chrono::days{iso - 1});
  }

  std::chrono::sys_days date() const { return day_; }
  std::string to_string() const { return format(day_); }

  WeekIndex operator+(std::int64_t weeks) const { return WeekIndex(day_ + std::chrono::days{7 * weeks}); }
  WeekIndex operator-(std::int64_t weeks) const { return WeekIndex(day_ - std::chrono::days{7 * weeks}); }
  WeekIndex next() const { return *this + 1; }

  /// Signed number of weeks from `from` to `to`.
  friend std::int64_t weeks_between(WeekIndex from, WeekIndex to) {
    return (to.day_ - from.day_).count() / 7;
  }

  friend auto operator<=>(const WeekIndex&, const WeekIndex&) = default;
  friend bool operator==(const WeekIndex&, const WeekIndex&) = default;

 private:
  template <typename T>
  static bool parse_uint(std::string_view s, T& out) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
  }

  static std::string format(std::chrono::sys_days day) {
    const std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
  }

  // 1970-01-05 was a Monday.
  std::chrono::sys_days day_{std::chrono::days{4}};
};

enum class ResourceKind { FluPatients, SearchQuery, SocialMedia, Shopping, QaService };

inline constexpr std::array<ResourceKind, 5> kAllResources = {
    ResourceKind::FluPatients, ResourceKind::SearchQuery, ResourceKind::SocialMedia, ResourceKind::Shopping,
    ResourceKind::QaService};

inline constexpr std::array<ResourceKind, 4> kUgcResources = {ResourceKind::SearchQuery, ResourceKind::SocialMedia,
                                                              ResourceKind::Shopping, ResourceKind::QaService};

inline std::string_view to_string(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::FluPatients: return "flu";
    case ResourceKind::SearchQuery: return "search";
    case ResourceKind::SocialMedia: return "social";
    case ResourceKind::Shopping: return "shopping";
    case ResourceKind::QaService: return "qa";
  }
  return "unknown";
}

inline std::optional<ResourceKind> parse_resource(std::string_view name) {
  for (ResourceKind kind : kAllResources) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_number(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

/// Contiguous weekly values starting at `start`; week i is start + i.
class WeeklySeries {
 public:
  WeeklySeries() = default;

  WeeklySeries(std::string name, ResourceKind resource, WeekIndex start, std::vector<double> values)
      : name_(std::move(name)), resource_(resource), start_(start), values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorKind::InvalidArgument, "series '" + name_ + "' is empty");
  }

  const std::string& name() const { return name_; }
  ResourceKind resource() const { return resource_; }
  WeekIndex start() const { return start_; }
  WeekIndex last() const { return start_ + static_cast<std::int64_t>(values_.size()) - 1; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  WeekIndex week_at(std::size_t i) const { return start_ + static_cast<std::int64_t>(i); }

  bool contains(WeekIndex week) const { return week >= start_ && week <= last(); }

  std::optional<std::size_t> index_of(WeekIndex week) const {
    if (!contains(week)) return std::nullopt;
    return static_cast<std::size_t>(weeks_between(start_, week));
  }

  double at(WeekIndex week) const {
    auto idx = index_of(week);
    if (!idx) {
      throw Error(ErrorKind::InsufficientHistory,
                  "series '" + name_ + "' has no value for week " + week.to_string());
    }
    return values_[*idx];
  }

  /// Inclusive sub-range [first, last].
  WeeklySeries slice(WeekIndex first, WeekIndex last_week) const {
    if (first > last_week || !contains(first) || !contains(last_week)) {
      throw Error(ErrorKind::InvalidArgument, "slice outside series '" + name_ + "'");
    }
    const auto lo = *index_of(first);
    const auto hi = *index_of(last_week);
    return WeeklySeries(name_, resource_, first,
                        std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(lo),
                                            values_.begin() + static_cast<std::ptrdiff_t>(hi) + 1));
  }

  WeeklySeries renamed(std::string name) const {
    WeeklySeries copy = *this;
    copy.name_ = std::move(name);
    return copy;
  }

  bool same_range(const WeeklySeries& other) const { return start_ == other.start_ && size() == other.size(); }

 private:
  std::string name_;
  ResourceKind resource_ = ResourceKind::FluPatients;
  WeekIndex start_;
  std::vector<double> values_;
};

/// Named series sharing one common week range.
class SignalPanel {
 public:
  explicit SignalPanel(std::vector<WeeklySeries> series) : series_(std::move(series)) {
    if (series_.empty()) throw Error(ErrorKind::InvalidArgument, "panel needs at least one series");
    for (std::size_t i = 0; i < series_.size(); ++i) {
      if (!series_[i].same_range(series_[0])) {
        throw Error(ErrorKind::AlignmentError, "series '" + series_[i].name() + "' does not cover the panel range");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (series_[j].name() == series_[i].name()) {
          throw Error(ErrorKind::InvalidArgument, "duplicate series name '" + series_[i].name() + "'");
        }
      }
    }
  }

  const std::vector<WeeklySeries>& series() const { return series_; }
  WeekIndex start() const { return series_.front().start(); }
  WeekIndex last() const { return series_.front().last(); }
  std::size_t length() const { return series_.front().size(); }

  const WeeklySeries* find(std::string_view name) const {
    for (const auto& s : series_) {
      if (s.name() == name) return &s;
    }
    return nullptr;
  }

  const WeeklySeries& get(std::string_view name) const {
    if (const auto* s = find(name)) return *s;
    throw Error(ErrorKind::InvalidArgument, "panel has no series named '" + std::string(name) + "'");
  }

  /// The first series tagged FluPatients.
  const WeeklySeries& flu() const {
    for (const auto& s : series_) {
      if (s.resource() == ResourceKind::FluPatients) return s;
    }
    throw Error(ErrorKind::InvalidArgument, "panel has no flu patient series");
  }

 private:
  std::vector<WeeklySeries> series_;
};

/// Trims every series to the intersection of their week ranges.
inline SignalPanel align(std::span<const WeeklySeries> series) {
  if (series.empty()) throw Error(ErrorKind::InvalidArgument, "align needs at least one series");
  WeekIndex first = series.front().start();
  WeekIndex last = series.front().last();
  for (const auto& s : series) {
    first = std::max(first, s.start());
    last = std::min(last, s.last());
  }
  if (first > last) throw Error(ErrorKind::EmptyIntersection, "series week ranges do not overlap");
  std::vector<WeeklySeries> trimmed;
  trimmed.reserve(series.size());
  for (const auto& s : series) trimmed.push_back(s.slice(first, last));
  return SignalPanel(std::move(trimmed));
}

inline bool is_constant(std::span<const double> xs) {
  return std::adjacent_find(xs.begin(), xs.end(), std::not_equal_to<>{}) == xs.end();
}

/// Pearson product-moment correlation, two-pass.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::ShapeMismatch, "pearson inputs differ in length");
  if (x.size() < 2) throw Error(ErrorKind::InvalidArgument, "pearson needs at least two points");
  if (is_constant(x) || is_constant(y)) throw Error(ErrorKind::DegenerateInput, "pearson input has zero variance");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson(const WeeklySeries& x, const WeeklySeries& y) {
  if (!x.same_range(y)) {
    throw Error(ErrorKind::AlignmentError, "series '" + x.name() + "' and '" + y.name() + "' cover different weeks");
  }
  return pearson(x.values(), y.values());
}

/// Per-column mean and population standard deviation. A column whose
/// values are all identical gets scale 0 and is treated as degenerate.
struct StandardizationParams {
  std::vector<double> mean;
  std::vector<double> scale;

  std::size_t size() const { return mean.size(); }
  bool degenerate(std::size_t column) const { return scale[column] == 0.0; }
};

inline StandardizationParams standardize_fit(const Eigen::MatrixXd& columns) {
  if (columns.rows() < 1) throw Error(ErrorKind::InvalidArgument, "standardize_fit needs at least one row");
  StandardizationParams params;
  params.mean.resize(static_cast<std::size_t>(columns.cols()));
  params.scale.resize(static_cast<std::size_t>(columns.cols()));
  const double n = static_cast<double>(columns.rows());
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    const auto col = columns.col(j);
    const double mean = col.sum() / n;
    const bool constant = col.minCoeff() == col.maxCoeff();
    params.mean[static_cast<std::size_t>(j)] = constant ? col(0) : mean;
    params.scale[static_cast<std::size_t>(j)] =
        constant ? 0.0 : std::sqrt((col.array() - mean).square().sum() / n);
  }
  return params;
}

inline Eigen::MatrixXd standardize_apply(const Eigen::MatrixXd& columns, const StandardizationParams& params) {
  if (static_cast<std::size_t>(columns.cols()) != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "column count does not match standardization params");
  }
  Eigen::MatrixXd out(columns.rows(), columns.cols());
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (params.degenerate(k)) {
      out.col(j).setZero();
    } else {
      out.col(j) = (columns.col(j).array() - params.mean[k]) / params.scale[k];
    }
  }
  return out;
}

// CSV: header `date,value`, one Monday per row, ascending, no gaps.

inline WeeklySeries read_series_csv(std::istream& in, std::string name, ResourceKind resource) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "'" + name + "': empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,value") throw Error(ErrorKind::ParseError, "'" + name + "': header must be exactly date,value");

  std::optional<WeekIndex> start;
  WeekIndex expected;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw Error(ErrorKind::ParseError, "'" + name + "' line " + std::to_string(lineno) + ": expected two fields");
    }
    const WeekIndex week = WeekIndex::parse(std::string_view(line).substr(0, comma));
    const std::string_view text = std::string_view(line).substr(comma + 1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
      throw Error(ErrorKind::ParseError, "'" + name + "' line " + std::to_string(lineno) + ": bad value");
    }
    if (!start) {
      start = week;
    } else if (week != expected) {
      throw Error(week < expected ? ErrorKind::ParseError : ErrorKind::MissingWeek,
                  "'" + name + "' line " + std::to_string(lineno) + ": expected week " + expected.to_string() +
                      ", got " + week.to_string());
    }
    values.push_back(value);
    expected = week.next();
  }
  if (!start) throw Error(ErrorKind::ParseError, "'" + name + "': no data rows");
  return WeeklySeries(std::move(name), resource, *start, std::move(values));
}

inline WeeklySeries read_series_csv(const std::string& path, std::string name, ResourceKind resource) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
  return read_series_csv(in, std::move(name), resource);
}

inline void write_series_csv(std::ostream& out, const WeeklySeries& series) {
  out << "date,value\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << series.week_at(i).to_string() << ',' << format_number(series[i]) << '\n';
  }
}

}  // namespace flunow
