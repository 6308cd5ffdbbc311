#pragma once

#include <string>
#include <vector>

#include "flunow/series.hpp"

namespace test {

inline flunow::WeekIndex week0() { return flunow::WeekIndex::from_ymd(2020, 1, 6); }

inline flunow::WeeklySeries series(std::vector<double> values, std::string name = "s",
                                   flunow::ResourceKind kind = flunow::ResourceKind::SearchQuery, int offset = 0) {
  return flunow::WeeklySeries(std::move(name), kind, week0() + offset, std::move(values));
}

inline flunow::WeeklySeries flu(std::vector<double> values, int offset = 0) {
  return series(std::move(values), "flu", flunow::ResourceKind::FluPatients, offset);
}

}  // namespace test
