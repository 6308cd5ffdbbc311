#include <catch_amalgamated.hpp>

#include <numeric>
#include <sstream>

#include "flunow/features.hpp"
#include "helpers.hpp"

using namespace flunow;

namespace {

std::vector<double> ramp(std::size_t n, double offset = 0.0) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), offset);
  return v;
}

// Flu ramp (value at week k is k) plus queries with the Table 1 counts.
struct Fixture {
  std::vector<WeeklySeries> series;
  QuerySelectionMap selected;

  explicit Fixture(std::size_t weeks = 80) {
    series.push_back(test::flu(ramp(weeks)));
    const std::vector<std::pair<ResourceKind, int>> counts{{ResourceKind::SearchQuery, 13},
                                                           {ResourceKind::SocialMedia, 18},
                                                           {ResourceKind::Shopping, 10},
                                                           {ResourceKind::QaService, 9}};
    int id = 0;
    for (const auto& [kind, count] : counts) {
      for (int k = 0; k < count; ++k, ++id) {
        const std::string name = "q" + std::to_string(id);
        series.push_back(test::series(ramp(weeks, 1000.0 * (id + 1)), name, kind));
        selected[kind].push_back(name);
      }
    }
  }

  SignalPanel panel() const { return SignalPanel(series); }
};

}  // namespace

TEST_CASE("lag features on a ramp") {
  const auto flu = test::flu(ramp(100));
  const auto lags = lag_features(flu, {}, test::week0() + 55);
  REQUIRE(lags.size() == 52);
  CHECK(lags.front() == 53.0);
  CHECK(lags.back() == 2.0);
  try {
    lag_features(flu, {}, test::week0() + 52);
    FAIL("expected InsufficientHistory");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientHistory);
  }
  const auto single = lag_features(flu, {2, 2}, test::week0() + 10);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == 8.0);
  CHECK_THROWS_AS(lag_features(flu, {5, 3}, test::week0() + 10), Error);
}

TEST_CASE("exogenous features") {
  std::vector<WeeklySeries> s{test::flu(ramp(10)), test::series({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, "q")};
  const SignalPanel panel(s);
  const QuerySelectionMap one{{ResourceKind::SearchQuery, {"q"}}};
  CHECK(exogenous_features(panel, one, test::week0() + 7, 0) == std::vector<double>{7.0});
  CHECK(exogenous_features(panel, one, test::week0() + 7, 2) == std::vector<double>{5.0});
  CHECK_THROWS_AS(exogenous_features(panel, {{ResourceKind::SocialMedia, {"q"}}}, test::week0() + 7, 0), Error);

  const Fixture f;
  CHECK(exogenous_features(f.panel(), f.selected, test::week0() + 60, 2).size() == 50);
}

TEST_CASE("build dataset shapes") {
  const Fixture f;
  const auto panel = f.panel();
  const FeatureOptions options;
  const WeekIndex first = test::week0() + 60;
  const auto ds = build_dataset(panel, f.selected, options, first, first + 9);
  CHECK(ds.rows() == 10);
  CHECK(ds.X.rows() == 10);
  CHECK(ds.X.cols() == 102);
  CHECK(ds.features() == 102);
  CHECK(ds.feature_names.front() == "flu_lag_2");
  CHECK(ds.feature_names[52] == "search:q0");
  CHECK(ds.y(0) == 60.0);
  CHECK(ds.X(0, 0) == 58.0);

  const auto lag_only = build_dataset(panel, {}, options, first, first + 9);
  CHECK(lag_only.X.cols() == 52);

  FeatureOptions no_lags;
  no_lags.include_lags = false;
  CHECK(build_dataset(panel, f.selected, no_lags, first, first + 9).X.cols() == 50);

  CHECK_THROWS_AS(build_dataset(panel, f.selected, options, test::week0() + 52, first), Error);
  CHECK(first_buildable_week(panel, options) == test::week0() + 53);

  const auto again = build_dataset(panel, f.selected, options, first, first + 9);
  CHECK(again.X == ds.X);
  CHECK(again.y == ds.y);

  std::ostringstream csv;
  write_dataset_csv(csv, lag_only);
  CHECK(csv.str().rfind("target_date,y,flu_lag_2,", 0) == 0);
}

TEST_CASE("features never look at weeks after t - 2") {
  const Fixture f;
  const FeatureOptions options;
  const WeekIndex t = test::week0() + 70;
  const auto base = build_dataset(f.panel(), f.selected, options, t, t);
  // Overwrite every value from t - 1 onwards with garbage.
  std::vector<WeeklySeries> tampered;
  for (const auto& s : f.series) {
    std::vector<double> v(s.values().begin(), s.values().end());
    for (std::size_t i = 69; i < v.size(); ++i) v[i] = -1e9;
    tampered.push_back(WeeklySeries(s.name(), s.resource(), s.start(), v));
  }
  const auto after = build_dataset(SignalPanel(tampered), f.selected, options, t, t);
  CHECK(after.X == base.X);
}

TEST_CASE("expanding splits") {
  std::vector<WeeklySeries> s{test::flu(ramp(60))};
  const SignalPanel panel(s);
  const FeatureOptions options;
  const WeekIndex first = first_buildable_week(panel, options);
  const auto ds = build_dataset(panel, {}, options, first, first + 4);
  REQUIRE(ds.rows() == 5);

  SECTION("last two rows") {
    const auto splits = expanding_splits(ds, {panel.start(), {{first + 3, first + 4}}});
    REQUIRE(splits.size() == 2);
    CHECK(splits[0].train_size() == 3);
    CHECK(splits[1].train_size() == 4);
    CHECK(splits[1].test_row == 4);
  }
  SECTION("first row has nothing to train on") {
    try {
      expanding_splits(ds, {panel.start(), {{first, first}}});
      FAIL("expected EmptyTrain");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyTrain);
    }
  }
  SECTION("window outside the rows") {
    try {
      expanding_splits(ds, {panel.start(), {{first + 3, first + 8}}});
      FAIL("expected InsufficientHistory");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InsufficientHistory);
    }
  }
  SECTION("train start trims the training rows") {
    const auto splits = expanding_splits(ds, {first + 1, {{first + 3, first + 4}}});
    CHECK(splits[0].train_begin == 1);
    CHECK(splits[0].train_size() == 2);
  }
}

TEST_CASE("three year-long windows give one split per week") {
  std::vector<WeeklySeries> s{test::flu(ramp(53 + 52 * 4))};
  const SignalPanel panel(s);
  const FeatureOptions options;
  const auto ds = build_dataset(panel, {}, options, first_buildable_week(panel, options), panel.last());
  SplitPlan plan{panel.start(), {}};
  const WeekIndex w1 = first_buildable_week(panel, options) + 52;
  for (int k = 0; k < 3; ++k) plan.eval_windows.push_back({w1 + 52 * k, w1 + 52 * k + 51});
  const auto splits = expanding_splits(ds, plan);
  CHECK(splits.size() == 3 * 52);
  for (std::size_t w = 0; w < 3; ++w) {
    const auto n = std::count_if(splits.begin(), splits.end(), [&](const Split& sp) { return sp.window == w; });
    CHECK(static_cast<std::size_t>(n) == plan.eval_windows[w].weeks());
  }
  for (const auto& sp : splits) {
    CHECK(sp.train_end == sp.test_row);
    CHECK(ds.weeks[sp.train_end - 1] < ds.weeks[sp.test_row]);
  }
}

TEST_CASE("materialize standardizes with training rows only") {
  std::vector<WeeklySeries> s{test::flu(ramp(60))};
  const SignalPanel panel(s);
  const FeatureOptions options;
  const WeekIndex first = first_buildable_week(panel, options);
  const auto ds = build_dataset(panel, {}, options, first, first + 6);
  const auto splits = expanding_splits(ds, {panel.start(), {{first + 5, first + 6}}});
  const auto m = materialize(ds, splits[0]);
  CHECK(m.x_train.rows() == 5);
  // Training columns are 0..4 shifted, so mean 2 and test value 5 gives (5 - 2) / sqrt(2).
  CHECK(std::abs(m.x_train.col(0).mean()) < 1e-12);
  CHECK(std::abs(m.x_test(0) - 3.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(m.y_test == ds.y(5));
}
