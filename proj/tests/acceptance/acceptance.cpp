// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if
// any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../oracles.hpp"
#include "flunow/flunow.hpp"

using namespace flunow;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& text) {
    if (!detail.empty()) detail += "; ";
    detail += text;
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = rng.normal();
  }
  return X;
}

// ------------------------------------------------------------------ CLI

const fs::path& work_dir() {
  static const fs::path dir = fs::current_path() / "acceptance_work";
  return dir;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FLUNOW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

std::string path(const std::string& leaf) { return (work_dir() / leaf).string(); }

// Every regular file under `a` has a byte-identical twin under `b`, and
// the two trees hold the same file names.
bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::map<std::string, std::string> left, right;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) left[fs::relative(e.path(), a).string()] = slurp(e.path());
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) right[fs::relative(e.path(), b).string()] = slurp(e.path());
  }
  files = left.size();
  return !left.empty() && left == right;
}

double mean_r2(const json& results, const std::string& model) {
  double sum = 0.0;
  int count = 0;
  for (const auto& r : results) {
    if (r.at("model") == model) {
      sum += r.at("r2").get<double>();
      ++count;
    }
  }
  return count > 0 ? sum / count : std::nan("");
}

json proxies_json(std::uint64_t seed, double noise) {
  json out = json::array();
  for (std::size_t i = 0; i < kUgcResources.size(); ++i) {
    ProxyConfig p;
    p.resource = kUgcResources[i];
    p.name = std::string(to_string(p.resource)) + "_q" + std::to_string(i);
    p.lead_weeks = 2;
    p.gain = 0.05;
    p.noise_sd = noise;
    p.seed = derive_seed(seed, 100 + i);
    out.push_back(to_json(p));
  }
  return out;
}

void write_json(const std::string& file, const json& j) { std::ofstream(file) << j.dump(2) << "\n"; }

// ------------------------------------------------------------------ criteria

Outcome metrics() {
  Outcome o;
  const std::vector<double> actual{1, 2, 3};
  const double half = r2(std::vector<double>{1, 2, 4}, actual);
  const double two_thirds = mae(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 5});
  const double ten = mape(std::vector<double>{110, 90}, std::vector<double>{100, 100});
  o.require(std::abs(half - 0.5) <= 1e-12, "r2 = 0.5 example");
  o.require(std::abs(two_thirds - 2.0 / 3.0) <= 1e-12, "mae = 2/3 example");
  o.require(std::abs(ten - 10.0) <= 1e-12, "mape = 10% example");
  o.require(r2(actual, actual) == 1.0, "r2(perfect) == 1");
  o.require(r2(std::vector<double>{2, 2, 2}, actual) == 0.0, "r2(mean) == 0");
  o.note("r2=" + fmt(half, 17) + " mae=" + fmt(two_thirds, 17) + " mape=" + fmt(ten, 17));
  return o;
}

Outcome lasso() {
  Outcome o;
  Rng rng(2);
  double worst_kkt = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.below(26));
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.below(8));
    const Eigen::MatrixXd X = random_matrix(rng, n, p);
    Eigen::VectorXd truth(p);
    for (Eigen::Index j = 0; j < p; ++j) truth(j) = rng.below(2) == 0 ? 0.0 : 3.0 * rng.normal();
    Eigen::VectorXd y = X * truth;
    for (Eigen::Index i = 0; i < n; ++i) y(i) += 0.5 * rng.normal() + 1.0;
    const double lambda = 10.0 * rng.uniform();
    const bool intercept = trial % 2 == 0;
    const auto m = fit_lasso(X, y, {.lambda = lambda, .intercept = intercept});
    worst_kkt = std::max(worst_kkt, oracle::lasso_kkt_violation(X, y, m.beta, m.intercept, lambda, intercept));
  }
  o.require(worst_kkt < 1e-4, "stationarity within 1e-4");

  // ||y - x b||^2 + lambda |b| with x = (1, -1), y = (3, -3): b = 3 - lambda/4.
  double worst_grid = 0.0;
  Eigen::MatrixXd X(2, 1);
  X << 1, -1;
  Eigen::VectorXd y(2);
  y << 3, -3;
  for (double lambda : {0.0, 0.5, 1.0, 2.0, 4.0, 7.5, 11.0}) {
    const auto m = fit_lasso(X, y, {.lambda = lambda, .intercept = false});
    const double grid = oracle::grid_minimize(
        [&](double b) { return lasso_objective(X, y, Eigen::VectorXd::Constant(1, b), 0.0, lambda); }, -10.0, 10.0);
    worst_grid = std::max({worst_grid, std::abs(m.beta(0) - grid), std::abs(m.beta(0) - (3.0 - lambda / 4.0))});
  }
  o.require(worst_grid < 1e-4, "3 - lambda/4 construction within 1e-4");
  o.note("max KKT violation " + fmt(worst_kkt) + ", max grid gap " + fmt(worst_grid));
  return o;
}

Outcome huber_correctness() {
  Outcome o;
  Rng rng(3);
  const Eigen::MatrixXd X = random_matrix(rng, 25, 3);
  Eigen::VectorXd y(25);
  for (Eigen::Index i = 0; i < 25; ++i) y(i) = X(i, 0) + 3.0 * rng.normal();
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    Eigen::VectorXd theta(5);
    for (Eigen::Index k = 0; k < 4; ++k) theta(k) = rng.normal();
    theta(4) = 0.5 + 2.0 * rng.uniform();
    const auto unpack = [](const Eigen::VectorXd& t) { return HuberParams{t.head(3), t(3), t(4)}; };
    const Eigen::VectorXd analytic = huber_gradient(X, y, unpack(theta), 1.0);
    const Eigen::VectorXd numeric = oracle::central_difference(
        [&](const Eigen::VectorXd& t) { return huber_objective(X, y, unpack(t), 1.0); }, theta);
    worst = std::max(worst, (analytic - numeric).cwiseAbs().maxCoeff() / numeric.cwiseAbs().maxCoeff());
  }
  o.require(worst < 1e-5, "gradient relative error < 1e-5");

  // y = 1 + 2x + N(0, 1), with 10% of points pushed up by 20-40.
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng data(1000 + static_cast<std::uint64_t>(trial));
    const Eigen::Index n = 60;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = data.normal();
      target(i) = 1.0 + 2.0 * x(i, 0) + data.normal();
    }
    for (Eigen::Index i = 0; i < n / 10; ++i) {
      const auto at = static_cast<Eigen::Index>(data.below(static_cast<std::uint64_t>(n)));
      target(at) += 20.0 + 20.0 * data.uniform();
    }
    const double huber_error = std::abs(fit_huber(x, target).beta(0) - 2.0);
    const double ols_error = std::abs(oracle::ols(x, target)(1) - 2.0);
    if (huber_error < ols_error) ++wins;
  }
  o.require(wins >= 95, "Huber slope beats OLS in >= 95 of 100");
  o.note("max gradient rel error " + fmt(worst) + ", Huber wins " + std::to_string(wins) + "/100");
  return o;
}

Outcome huber_branches() {
  Outcome o;
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd X = random_matrix(rng, 40, 3);
    Eigen::VectorXd y(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
      y(i) = 2.0 * X(i, 0) - X(i, 1) + rng.normal();
      if (rng.uniform() < 0.1) y(i) += 30.0;
    }
    HuberOptions full, canonical;
    canonical.branch = HuberBranch::Canonical;
    const auto a = fit_huber(X, y, full);
    const auto b = fit_huber(X, y, canonical);
    worst = std::max({worst, (a.beta - b.beta).cwiseAbs().maxCoeff(), std::abs(a.intercept - b.intercept)});
  }
  o.require(worst < 1e-6, "branches agree within 1e-6");
  o.note("max coefficient gap " + fmt(worst));
  return o;
}

Outcome svr() {
  Outcome o;
  Rng rng(5);
  double worst_gap = 0.0, worst_product = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng.below(20));
    const Eigen::MatrixXd X = random_matrix(rng, n, 3);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = X(i, 0) - 0.5 * X(i, 2) + 0.3 * rng.normal();
    const double C = 0.5 + 5.0 * rng.uniform();
    const double eps = 0.05 + 0.2 * rng.uniform();
    const auto m = fit_svr_linear(X, y, {.c_penalty = C, .epsilon = eps});
    const double primal = oracle::svr_primal(X, y, m.weights, m.bias, C, eps);
    const double dual = oracle::svr_dual(X, y, m.alpha, m.alpha_star, eps);
    worst_gap = std::max(worst_gap, (primal - dual) / primal);
    worst_product = std::max(worst_product, (m.alpha.array() * m.alpha_star.array()).maxCoeff());
  }
  o.require(worst_gap < 1e-3, "relative duality gap < 1e-3");
  o.require(worst_product <= 1e-6, "alpha * alpha* <= 1e-6");

  Eigen::MatrixXd X(10, 1);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = i;
    y(i) = 2.0 * i + 1.0;
  }
  const auto line = fit_svr_linear(X, y, {.c_penalty = 10.0, .epsilon = 0.5});
  const double worst_residual = (line.predict_batch(X) - y).cwiseAbs().maxCoeff();
  o.require(worst_residual <= 0.5 + 1e-3, "y = 2x + 1 fits inside the 0.5 tube");
  o.note("max rel gap " + fmt(worst_gap) + ", max alpha*alpha* " + fmt(worst_product) + ", line residual " +
         fmt(worst_residual));
  return o;
}

Outcome forest() {
  Outcome o;
  Rng rng(6);
  bool memorized = true, identical = true, bounded = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd X = random_matrix(rng, 40, 4);
    Eigen::VectorXd y(40);
    for (Eigen::Index i = 0; i < 40; ++i) y(i) = std::sin(X(i, 0)) + X(i, 1) * X(i, 2) + 0.1 * rng.normal();

    const auto single = fit_forest(
        X, y, {.n_trees = 1, .max_depth = 0, .min_leaf = 1, .bootstrap = false, .max_features = 0, .seed = 1});
    memorized = memorized && single.predict_batch(X) == y;

    const ForestOptions options{.n_trees = 30, .seed = 50 + static_cast<std::uint64_t>(trial)};
    const auto a = fit_forest(X, y, options);
    const auto b = fit_forest(X, y, options);
    const Eigen::MatrixXd probe = 3.0 * random_matrix(rng, 25, 4);
    const Eigen::VectorXd pa = a.predict_batch(probe);
    const Eigen::VectorXd pb = b.predict_batch(probe);
    identical = identical && std::memcmp(pa.data(), pb.data(), sizeof(double) * pa.size()) == 0;
    bounded = bounded && pa.maxCoeff() <= y.maxCoeff() && pa.minCoeff() >= y.minCoeff();
  }
  o.require(memorized, "memorization reproduces targets exactly");
  o.require(identical, "same seed gives bitwise-identical predictions");
  o.require(bounded, "predictions within the training target range");
  o.note("20 datasets");
  return o;
}

Outcome arima() {
  Outcome o;
  Rng rng(7);
  std::vector<double> x;
  double prev = 0.0;
  for (int t = 0; t < 700; ++t) {
    prev = 0.8 * prev + rng.normal();
    if (t >= 200) x.push_back(prev);
  }
  const double phi = fit_arima(x, {1, 0, 0}).ar(0);
  const double yw = oracle::yule_walker_ar1(x);
  o.require(std::abs(phi - 0.8) < 0.1, "|phi - 0.8| < 0.1");
  o.require(std::abs(yw - 0.8) < 0.1 && std::abs(phi - yw) < 0.05, "agreement with Yule-Walker");

  const std::vector<double> walk{1, 2, 3, 5};
  const auto rw = fit_arima(walk, {0, 1, 0});
  o.require(forecast_arima(rw, walk, 3) == std::vector<double>{5, 5, 5}, "(0,1,0) repeats the last value");

  std::vector<double> level(150);
  double e_prev = 0.0, d_prev = 0.0;
  for (std::size_t t = 0; t < level.size(); ++t) {
    const double e = rng.normal();
    const double d = 0.5 * d_prev + e + 0.3 * e_prev;
    level[t] = (t > 0 ? level[t - 1] : 0.0) + d;
    d_prev = d;
    e_prev = e;
  }
  std::vector<double> shifted = level;
  for (double& v : shifted) v += 250.0;
  const auto fa = forecast_arima(fit_arima(level, {3, 1, 2}), level, 4);
  const auto fb = forecast_arima(fit_arima(shifted, {3, 1, 2}), shifted, 4);
  double worst = 0.0;
  for (std::size_t h = 0; h < fa.size(); ++h) worst = std::max(worst, std::abs(fb[h] - fa[h] - 250.0));
  o.require(worst < 1e-8, "translation invariance within 1e-8");
  o.note("phi=" + fmt(phi) + " yule-walker=" + fmt(yw) + " shift error " + fmt(worst));
  return o;
}

Outcome changepoint() {
  Outcome o;
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng data(derive_seed(80, seed));
    std::vector<double> x(60);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i < 30 ? 0.0 : 10.0) + 0.1 * data.normal();
    const auto found = detect(bcp_posterior(x, {.seed = seed}).probabilities);
    // The step sits between points 29 and 30, i.e. boundary 29.
    const bool hit = std::any_of(found.begin(), found.end(), [](std::size_t i) { return i >= 28 && i <= 30; });
    hits += hit ? 1 : 0;
  }
  o.require(hits >= 19, "step detected within +-1 in >= 19/20");

  double rate = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng data(derive_seed(81, seed));
    std::vector<double> x(60);
    for (double& v : x) v = data.normal();
    const auto probs = bcp_posterior(x, {.seed = seed}).probabilities;
    rate += static_cast<double>(detect(probs).size()) / static_cast<double>(probs.size()) / 20.0;
  }
  o.require(rate < 0.05, "pure noise detects < 5% of positions");

  Rng data(82);
  std::vector<double> x(80);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 40 < 20 ? 0.0 : 3.0) + data.normal();
  const auto a = bcp_posterior(x, {.seed = 7}).probabilities;
  const auto b = bcp_posterior(x, {.seed = 7}).probabilities;
  o.require(a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0,
            "fixed seed gives bitwise-identical posteriors");
  o.note("step hits " + std::to_string(hits) + "/20, noise detection rate " + fmt(100.0 * rate) + "%");
  return o;
}

Outcome matching() {
  Outcome o;
  const std::vector<std::size_t> flu{10, 20}, res{11, 35};
  const auto m = match(flu, res);
  o.require(m.true_positive == 1 && m.false_positive == 1 && m.false_negative == 1, "TP = FP = FN = 1");
  o.require(m.sensitivity == 50.0 && m.ppv == 50.0, "sensitivity = ppv = 50%");
  o.note("TP=" + std::to_string(m.true_positive) + " FP=" + std::to_string(m.false_positive) +
         " FN=" + std::to_string(m.false_negative) + " sens=" + fmt(m.sensitivity) + " ppv=" + fmt(m.ppv));
  return o;
}

Outcome end_to_end() {
  Outcome o;
  // (a) and (b): informative but noisy proxies.
  write_json(path("e2e.json"), {{"seed", 2024}, {"synth", {{"years", 5}}}, {"proxies", proxies_json(2024, 1000.0)}});
  o.require(cli("synth --config " + path("e2e.json") + " --out " + path("e2e")) == 0, "synth");
  o.require(cli("backtest --config " + path("e2e/manifest.json") + " --model huber --out " + path("e2e_bt")) == 0,
            "backtest");
  o.require(cli("ablate --config " + path("e2e/manifest.json") + " --model huber --drop past --out " +
                path("e2e_ab")) == 0,
            "ablate");
  if (!o.pass) return o;
  const json bt = load(path("e2e_bt/backtest.json"));
  double worst = 1.0;
  for (const auto& r : bt.at("results")) worst = std::min(worst, r.at("r2").get<double>());
  const double full = mean_r2(bt.at("results"), "huber");
  const json ab = load(path("e2e_ab/ablation.json"));
  const double past = mean_r2(ab.at("rows").at(0).at("results"), "huber");
  o.require(bt.at("results").size() >= 2, "at least two evaluation seasons");
  o.require(worst >= 0.85, "(a) Huber R2 >= 0.85 in every season");
  o.require(full - past >= 0.2, "(b) dropping past lags costs >= 0.2 R2");
  o.note("(a) min season R2 " + fmt(worst) + "; (b) R2 " + fmt(full) + " -> " + fmt(past));

  // (c): flu reports hit by gross outliers.
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::string tag = "e2e_c" + std::to_string(seed);
    write_json(path(tag + ".json"),
               {{"seed", seed},
                {"synth", {{"years", 5}, {"outlier_count", 10}, {"outlier_size", 20000.0}}},
                {"proxies", proxies_json(seed, 200.0)}});
    bool ok = cli("synth --config " + path(tag + ".json") + " --out " + path(tag)) == 0;
    ok = ok && cli("backtest --config " + path(tag + "/manifest.json") + " --model huber --out " +
                   path(tag + "_huber")) == 0;
    ok = ok && cli("backtest --config " + path(tag + "/manifest.json") + " --model lasso --out " +
                   path(tag + "_lasso")) == 0;
    o.require(ok, "contaminated run " + std::to_string(seed));
    if (!ok) continue;
    const double h = mean_r2(load(path(tag + "_huber/backtest.json")).at("results"), "huber");
    const double l = mean_r2(load(path(tag + "_lasso/backtest.json")).at("results"), "lasso");
    if (h >= l) ++wins;
  }
  o.require(wins >= 16, "(c) Huber >= Lasso in >= 80% of 20 seeds");
  o.note("(c) Huber >= Lasso in " + std::to_string(wins) + "/20");
  return o;
}

Outcome determinism() {
  Outcome o;
  std::size_t files = 0, total = 0;
  const auto twice = [&](const std::string& name, const std::string& a, const std::string& b) {
    o.require(cli(a + " --out " + path(name + "_1")) == 0 && cli(b + " --out " + path(name + "_2")) == 0,
              name + " ran");
    o.require(same_tree(path(name + "_1"), path(name + "_2"), files), name + " byte-identical");
    total += files;
  };
  twice("synth", "synth --years 5 --proxies 8 --seed 11", "synth --years 5 --proxies 8 --seed 11");
  const std::string manifest = path("synth_1/manifest.json");
  const std::string select = "select --config " + manifest;
  twice("select", select, select);
  const std::string backtest = "backtest --config " + manifest + " --model all --seed 5";
  twice("backtest", backtest + " --threads 1", backtest + " --threads 4");
  twice("backtest_par", backtest + " --threads 4", backtest + " --threads 4");
  const std::string ablate = "ablate --config " + manifest + " --model forest --seed 5";
  twice("ablate", ablate + " --threads 1", ablate + " --threads 3");
  const std::string cp = "changepoint --config " + manifest + " --seed 9";
  twice("changepoint", cp, cp);
  o.note(std::to_string(total) + " files compared across 6 command pairs");
  return o;
}

}  // namespace

int main() {
  fs::remove_all(work_dir());
  fs::create_directories(work_dir());

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double budget_s;
  };
  const std::vector<Criterion> criteria{
      {1, "metric exactness", metrics, 1.0},
      {2, "lasso oracle", lasso, 10.0},
      {3, "huber correctness", huber_correctness, 0.0},
      {4, "huber loss scalings", huber_branches, 0.0},
      {5, "svr", svr, 0.0},
      {6, "forest", forest, 0.0},
      {7, "arima", arima, 0.0},
      {8, "change point", changepoint, 60.0},
      {9, "match scoring", matching, 0.0},
      {10, "end-to-end synthetic", end_to_end, 300.0},
      {11, "determinism", determinism, 0.0},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0.0) o.require(seconds < c.budget_s, "runtime under " + fmt(c.budget_s) + " s");
    if (!o.pass) ++failed;
    std::printf("%s %2d %-22s %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
