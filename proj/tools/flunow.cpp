// flunow command-line front end.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 I/O failure,
// 3 alignment failure, 4 model failure (partial results written),
// 5 unknown ablation label, 6 degenerate change-point input.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flunow/flunow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flunow;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kIo = 2, kAlignment = 3, kModel = 4, kUnknownDrop = 5, kDegenerate = 6 };

/// Failure with an explicit exit code.
struct CommandError : std::runtime_error {
  CommandError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::ParseError:
    case ErrorKind::MissingWeek: return kIo;
    case ErrorKind::AlignmentError:
    case ErrorKind::EmptyIntersection: return kAlignment;
    case ErrorKind::NonConvergence:
    case ErrorKind::NoData:
    case ErrorKind::EmptyTrain:
    case ErrorKind::SeriesTooShort:
    case ErrorKind::DegenerateActuals:
    case ErrorKind::AllActualsZero: return kModel;
    case ErrorKind::DegenerateSeries: return kDegenerate;
    default: return kUsage;
  }
}

// ------------------------------------------------------------------ files

fs::path prepare_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw CommandError(kIo, "cannot create output directory '" + out + "'" + (ec ? ": " + ec.message() : ""));
  }
  return fs::path(out);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw CommandError(kIo, "cannot write '" + path.string() + "'");
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CommandError(kIo, "cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CommandError(kUsage, "invalid JSON in '" + path + "': " + e.what());
  }
}

WeeklySeries load_series(const std::string& path, ResourceKind resource) {
  return read_series_csv(path, fs::path(path).stem().string(), resource);
}

ResourceKind resource_from(const std::string& label) {
  const auto kind = parse_resource(label);
  if (!kind || *kind == ResourceKind::FluPatients) throw CommandError(kUsage, "unknown resource '" + label + "'");
  return *kind;
}

double default_threshold(ResourceKind kind) { return kind == ResourceKind::SocialMedia ? 0.75 : 0.70; }

// ------------------------------------------------------------- run config

/// Everything backtest, ablate, select and changepoint read from a config
/// file. Command-line flags are applied on top afterwards.
struct RunConfig {
  std::string flu;
  std::map<ResourceKind, std::vector<std::string>> files;
  std::map<ResourceKind, double> thresholds = {{ResourceKind::SearchQuery, 0.70},
                                               {ResourceKind::SocialMedia, 0.75}};
  FeatureOptions features;
  std::string model = "huber";
  ModelSpec spec;
  std::optional<WeekIndex> train_start;
  std::vector<WeekRange> windows;
  int window_count = 3;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out = "out";
};

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  const json j = read_json_file(path);
  const fs::path base = fs::path(path).parent_path();
  try {
    if (j.contains("flu")) c.flu = resolve(base, j.at("flu").get<std::string>());
    if (j.contains("resources")) {
      for (const auto& [label, list] : j.at("resources").items()) {
        for (const auto& f : list) c.files[resource_from(label)].push_back(resolve(base, f.get<std::string>()));
      }
    }
    if (j.contains("thresholds")) {
      for (const auto& [label, t] : j.at("thresholds").items()) {
        if (t.is_null()) {
          c.thresholds.erase(resource_from(label));
        } else {
          c.thresholds[resource_from(label)] = t.get<double>();
        }
      }
    }
    if (j.contains("lags")) {
      c.features.lags.min_lag = j.at("lags").value("min", c.features.lags.min_lag);
      c.features.lags.max_lag = j.at("lags").value("max", c.features.lags.max_lag);
    }
    c.features.signal_lag = j.value("signal_lag", c.features.signal_lag);
    c.model = j.value("model", c.model);
    if (j.contains("lasso")) {
      const auto& m = j.at("lasso");
      c.spec.lasso.lambda = m.value("lambda", c.spec.lasso.lambda);
      c.spec.lasso.intercept = m.value("intercept", c.spec.lasso.intercept);
    }
    if (j.contains("huber")) {
      const auto& m = j.at("huber");
      c.spec.huber.delta = m.value("delta", c.spec.huber.delta);
      c.spec.huber.intercept = m.value("intercept", c.spec.huber.intercept);
      const auto branch = m.value("branch", std::string("full"));
      if (branch != "full" && branch != "canonical") throw CommandError(kUsage, "huber branch must be full or canonical");
      c.spec.huber.branch = branch == "full" ? HuberBranch::Full : HuberBranch::Canonical;
    }
    if (j.contains("svr")) {
      const auto& m = j.at("svr");
      c.spec.svr.c_penalty = m.value("c", c.spec.svr.c_penalty);
      c.spec.svr.epsilon = m.value("epsilon", c.spec.svr.epsilon);
    }
    if (j.contains("forest")) {
      const auto& m = j.at("forest");
      c.spec.forest.n_trees = m.value("n_trees", c.spec.forest.n_trees);
      c.spec.forest.max_depth = m.value("max_depth", c.spec.forest.max_depth);
      c.spec.forest.min_leaf = m.value("min_leaf", c.spec.forest.min_leaf);
      c.spec.forest.bootstrap = m.value("bootstrap", c.spec.forest.bootstrap);
      c.spec.forest.max_features = m.value("max_features", c.spec.forest.max_features);
    }
    if (j.contains("arima")) {
      const auto& m = j.at("arima");
      c.spec.arima.p = m.value("p", c.spec.arima.p);
      c.spec.arima.d = m.value("d", c.spec.arima.d);
      c.spec.arima.q = m.value("q", c.spec.arima.q);
    }
    if (j.contains("train_start")) c.train_start = WeekIndex::parse(j.at("train_start").get<std::string>());
    if (j.contains("windows")) {
      for (const auto& w : j.at("windows")) {
        c.windows.push_back(
            {WeekIndex::parse(w.at("start").get<std::string>()), WeekIndex::parse(w.at("end").get<std::string>())});
      }
    }
    c.window_count = j.value("window_count", c.window_count);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("out")) c.out = resolve(base, j.at("out").get<std::string>());
  } catch (const json::exception& e) {
    throw CommandError(kUsage, "bad value in '" + path + "': " + e.what());
  }
  return c;
}

void check_thresholds(const RunConfig& c) {
  for (const auto& [kind, t] : c.thresholds) {
    if (!(t > 0.0 && t < 1.0)) {
      throw CommandError(kUsage, "threshold for " + std::string(to_string(kind)) + " must lie in (0, 1)");
    }
  }
}

/// Parses repeated `resource=path` flags into the file map.
void add_series_flags(RunConfig& c, const std::vector<std::string>& flags) {
  if (flags.empty()) return;
  c.files.clear();
  for (const auto& f : flags) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw CommandError(kUsage, "--series expects resource=path, got '" + f + "'");
    c.files[resource_from(f.substr(0, eq))].push_back(f.substr(eq + 1));
  }
}

SignalPanel load_panel(const RunConfig& c) {
  if (c.flu.empty()) throw CommandError(kUsage, "no flu series given (--flu or \"flu\" in the config)");
  std::vector<WeeklySeries> all{load_series(c.flu, ResourceKind::FluPatients)};
  for (const auto& [kind, list] : c.files) {
    for (const auto& f : list) all.push_back(load_series(f, kind));
  }
  return align(all);
}

/// Default windows: up to `count` trailing 52-week windows, keeping only
/// those preceded by at least one year of buildable rows.
std::vector<WeekRange> default_windows(const SignalPanel& panel, const FeatureOptions& features, int count) {
  const WeekIndex first = first_buildable_week(panel, features);
  std::vector<WeekRange> kept;
  for (const auto& w : trailing_windows(panel.last(), count)) {
    if (weeks_between(first, w.start) >= 52) kept.push_back(w);
  }
  if (kept.empty()) throw CommandError(kUsage, "series too short for a default evaluation window");
  return kept;
}

struct Selection {
  QuerySelectionMap selected;
  json report = json::object();
};

/// Correlation screening on the weeks before the first evaluation window.
/// Resources without a threshold keep every non-constant series.
Selection select_for_backtest(const SignalPanel& panel, const RunConfig& c, WeekIndex selection_end) {
  Selection s;
  const WeeklySeries target = panel.flu().slice(panel.start(), selection_end);
  for (const auto& [kind, list] : c.files) {
    std::vector<CandidateQuery> candidates;
    for (const auto& series : panel.series()) {
      if (series.resource() == kind) candidates.push_back({series.name(), series.slice(panel.start(), selection_end)});
    }
    json entries = json::array();
    auto& terms = s.selected[kind];
    const auto it = c.thresholds.find(kind);
    if (it != c.thresholds.end()) {
      for (const auto& q : select_queries(candidates, target, {it->second}).selected) {
        terms.push_back(q.term);
        entries.push_back({{"term", q.term}, {"r", q.r}});
      }
    } else {
      for (const auto& cand : candidates) {
        if (is_constant(cand.volume.values())) continue;
        terms.push_back(cand.term);
        entries.push_back({{"term", cand.term}, {"r", pearson(cand.volume.values(), target.values())}});
      }
    }
    s.report[std::string(to_string(kind))] = {
        {"threshold", it != c.thresholds.end() ? json(it->second) : json(nullptr)}, {"selected", entries}};
  }
  return s;
}

SplitPlan make_plan(const SignalPanel& panel, const RunConfig& c) {
  SplitPlan plan;
  plan.train_start = c.train_start.value_or(panel.start());
  plan.eval_windows = c.windows.empty() ? default_windows(panel, c.features, c.window_count) : c.windows;
  plan.validate();
  return plan;
}

std::vector<ModelKind> requested_models(const std::string& name) {
  if (name == "all") return {kAllModels.begin(), kAllModels.end()};
  const auto kind = parse_model_kind(name);
  if (!kind) throw CommandError(kUsage, "unknown model '" + name + "'");
  return {*kind};
}

json plan_json(const SplitPlan& plan) {
  json windows = json::array();
  for (const auto& w : plan.eval_windows) windows.push_back({{"start", w.start.to_string()}, {"end", w.end.to_string()}});
  return {{"train_start", plan.train_start.to_string()}, {"windows", windows}};
}

// ---------------------------------------------------------------- commands

struct SynthArgs {
  std::string config;
  int years = 5;
  int proxies = 4;
  std::uint64_t seed = 0;
  std::string out = "data";
};

int cmd_synth(const SynthArgs& a, const CLI::App& sub) {
  SynthConfig flu_config;
  std::vector<ProxyConfig> proxies;
  std::uint64_t seed = a.seed;
  std::string out = a.out;
  if (!a.config.empty()) {
    const json j = read_json_file(a.config);
    try {
      seed = j.value("seed", seed);
      if (j.contains("out")) out = resolve(fs::path(a.config).parent_path(), j.at("out").get<std::string>());
      if (j.contains("synth")) flu_config = synth_config_from_json(j.at("synth"), flu_config);
      if (j.contains("proxies")) {
        for (const auto& p : j.at("proxies")) proxies.push_back(proxy_config_from_json(p));
      }
    } catch (const json::exception& e) {
      throw CommandError(kUsage, std::string("bad synth config: ") + e.what());
    }
  }
  if (sub.count("--seed")) seed = a.seed;
  if (sub.count("--out")) out = a.out;
  if (sub.count("--years") || a.config.empty()) flu_config.years = a.years;
  flu_config.seed = derive_seed(seed, 0);
  if (proxies.empty() || sub.count("--proxies")) proxies = default_proxies(a.proxies, seed);

  const fs::path dir = prepare_out_dir(out);
  const WeeklySeries flu = gen_flu(flu_config);
  // Outliers are reporting errors; proxies follow the true curve.
  const WeeklySeries truth = gen_flu_truth(flu_config);
  json resources = json::object();
  json proxy_configs = json::array();
  std::ostringstream text;
  write_series_csv(text, flu);
  write_file(dir / "flu.csv", text.str());
  for (const auto& p : proxies) {
    const WeeklySeries proxy = gen_proxy(truth, p);
    std::ostringstream ptext;
    write_series_csv(ptext, proxy);
    const std::string file = p.name + ".csv";
    write_file(dir / file, ptext.str());
    resources[std::string(to_string(p.resource))].push_back(file);
    proxy_configs.push_back(to_json(p));
  }
  // The manifest doubles as a run config for the other commands.
  json manifest = {{"seed", seed},
                   {"flu", "flu.csv"},
                   {"resources", resources},
                   {"generator", {{"flu", to_json(flu_config)}, {"proxies", proxy_configs}}}};
  if (flu_config.outlier_count > 0) {
    std::ostringstream ttext;
    write_series_csv(ttext, truth);
    write_file(dir / "flu_truth.csv", ttext.str());
    manifest["truth"] = "flu_truth.csv";
  }
  write_file(dir / "manifest.json", dump(manifest));
  return kOk;
}

struct SelectArgs {
  std::string config;
  std::string target;
  std::vector<std::string> candidates;
  std::string resource = "search";
  std::optional<double> threshold;
  std::string start, end;
  std::string corpus;
  std::size_t tfidf_k = 50;
  std::size_t freq_k = 100;
  std::uint64_t seed = 0;
  std::string out = "out";
};

json ranked_json(const std::vector<RankedTerm>& terms) {
  json arr = json::array();
  for (const auto& t : terms) arr.push_back({{"term", t.term}, {"score", t.score}});
  return arr;
}

int cmd_select(const SelectArgs& a, const CLI::App& sub) {
  RunConfig c = load_run_config(a.config);
  if (sub.count("--out") || a.config.empty()) c.out = a.out;
  if (!a.target.empty()) c.flu = a.target;
  const ResourceKind resource = resource_from(a.resource);
  std::map<ResourceKind, std::vector<std::string>> files = c.files;
  if (!a.candidates.empty()) files = {{resource, a.candidates}};
  if (!a.config.empty() && a.candidates.empty() && sub.count("--resource")) {
    files = {{resource, c.files[resource]}};
  }
  if (a.threshold) c.thresholds[resource] = *a.threshold;
  check_thresholds(c);

  const fs::path dir = prepare_out_dir(c.out);
  if (!a.corpus.empty()) {
    std::ifstream in(a.corpus);
    if (!in) throw CommandError(kIo, "cannot open corpus '" + a.corpus + "'");
    const auto docs = read_corpus(in);
    write_file(dir / "candidates.json", dump({{"tfidf", ranked_json(rank_tfidf(docs, a.tfidf_k))},
                                              {"frequency", ranked_json(rank_frequency(docs, a.freq_k))}}));
    if (c.flu.empty()) return kOk;
  }
  if (c.flu.empty()) throw CommandError(kUsage, "select needs --target or a config with a flu series");

  WeeklySeries target = load_series(c.flu, ResourceKind::FluPatients);
  const WeekIndex first = a.start.empty() ? target.start() : WeekIndex::parse(a.start);
  const WeekIndex last = a.end.empty() ? target.last() : WeekIndex::parse(a.end);
  const auto window = [&](const WeeklySeries& s) {
    try {
      return s.slice(first, last);
    } catch (const Error& e) {
      throw CommandError(kAlignment, "'" + s.name() + "' does not cover the selection range: " + e.what());
    }
  };
  target = window(target);
  json report = json::object();
  for (const auto& [kind, list] : files) {
    std::vector<CandidateQuery> candidates;
    for (const auto& f : list) {
      const WeeklySeries s = load_series(f, kind);
      candidates.push_back({s.name(), (a.start.empty() && a.end.empty()) ? s : window(s)});
    }
    const auto it = c.thresholds.find(kind);
    const double threshold = it != c.thresholds.end() ? it->second : default_threshold(kind);
    const SelectionResult result = select_queries(candidates, target, {threshold});
    json selected = json::array();
    for (const auto& q : result.selected) selected.push_back({{"term", q.term}, {"r", q.r}});
    report[std::string(to_string(kind))] = {
        {"threshold", threshold}, {"selected", selected}, {"skipped_constant", result.skipped_constant}};
  }
  write_file(dir / "selection.json", dump(report));
  return kOk;
}

struct RunArgs {
  std::string config;
  std::string flu;
  std::vector<std::string> series;
  std::string model;
  std::vector<std::string> drop;
  std::string train_start;
  int window_count = 3;
  int min_lag = 2, max_lag = 53, signal_lag = 2;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out = "out";
};

RunConfig run_config_from(const RunArgs& a, const CLI::App& sub) {
  RunConfig c = load_run_config(a.config);
  if (!a.flu.empty()) c.flu = a.flu;
  add_series_flags(c, a.series);
  if (!a.model.empty()) c.model = a.model;
  if (!a.train_start.empty()) c.train_start = WeekIndex::parse(a.train_start);
  if (sub.count("--window-count")) {
    c.window_count = a.window_count;
    c.windows.clear();
  }
  if (sub.count("--min-lag")) c.features.lags.min_lag = a.min_lag;
  if (sub.count("--max-lag")) c.features.lags.max_lag = a.max_lag;
  if (sub.count("--signal-lag")) c.features.signal_lag = a.signal_lag;
  if (sub.count("--seed")) c.seed = a.seed;
  if (sub.count("--threads")) c.threads = a.threads;
  if (sub.count("--out") || a.config.empty()) c.out = a.out;
  c.features.lags.validate();
  check_thresholds(c);
  return c;
}

struct Prepared {
  SignalPanel panel;
  SplitPlan plan;
  Selection selection;
  BacktestOptions options;
};

Prepared prepare(const RunConfig& c) {
  SignalPanel panel = load_panel(c);
  SplitPlan plan = make_plan(panel, c);
  Selection selection = select_for_backtest(panel, c, plan.eval_windows.front().start - 1);
  BacktestOptions options{c.features, c.seed, std::max(1u, c.threads)};
  return {std::move(panel), std::move(plan), std::move(selection), options};
}

json failure_json(const std::string& what, const std::string& label, const std::string& error) {
  return {{what, label}, {"error", error}};
}

int cmd_backtest(const RunArgs& a, const CLI::App& sub) {
  const RunConfig c = run_config_from(a, sub);
  const auto models = requested_models(c.model);
  const fs::path dir = prepare_out_dir(c.out);
  const Prepared p = prepare(c);

  json results = json::array();
  json failures = json::array();
  for (ModelKind kind : models) {
    ModelSpec spec = c.spec;
    spec.kind = kind;
    try {
      for (const auto& r : backtest(p.panel, p.selection.selected, spec, p.plan, p.options)) {
        results.push_back(to_json(r));
        std::ostringstream csv;
        write_plot_csv(csv, r);
        write_file(dir / ("plot_" + std::string(to_string(kind)) + "_" + r.window.start.to_string() + ".csv"),
                   csv.str());
      }
    } catch (const Error& e) {
      if (exit_code(e.kind()) != kModel) throw;
      std::cerr << "flunow: " << to_string(kind) << " failed: " << e.what() << "\n";
      failures.push_back(failure_json("model", std::string(to_string(kind)), e.what()));
    }
  }
  write_file(dir / "backtest.json", dump({{"seed", c.seed},
                                          {"plan", plan_json(p.plan)},
                                          {"selection", p.selection.report},
                                          {"results", results},
                                          {"failures", failures}}));
  return failures.empty() ? kOk : kModel;
}

int cmd_ablate(const RunArgs& a, const CLI::App& sub) {
  std::vector<DropBlock> rows;
  for (const auto& label : a.drop) {
    const auto drop = parse_drop_block(label);
    if (!drop) {
      std::cerr << "flunow: unknown drop label '" << label << "' (expected none, past, search, social, shopping, qa)\n"
                << sub.help();
      return kUnknownDrop;
    }
    rows.push_back(*drop);
  }
  if (rows.empty()) rows.assign(kAblationRows.begin(), kAblationRows.end());

  const RunConfig c = run_config_from(a, sub);
  const auto models = requested_models(c.model);
  if (models.size() != 1) throw CommandError(kUsage, "ablate runs a single model");
  const fs::path dir = prepare_out_dir(c.out);
  const Prepared p = prepare(c);
  ModelSpec spec = c.spec;
  spec.kind = models.front();

  json out_rows = json::array();
  json failures = json::array();
  for (DropBlock drop : rows) {
    try {
      const AblationResult r = ablate(p.panel, p.selection.selected, spec, p.plan, drop, p.options);
      json windows = json::array();
      for (const auto& w : r.windows) windows.push_back(to_json(w));
      out_rows.push_back({{"dropped", std::string(to_string(drop))}, {"results", windows}});
    } catch (const Error& e) {
      if (exit_code(e.kind()) != kModel) throw;
      std::cerr << "flunow: ablation '" << to_string(drop) << "' failed: " << e.what() << "\n";
      failures.push_back(failure_json("dropped", std::string(to_string(drop)), e.what()));
    }
  }
  write_file(dir / "ablation.json", dump({{"model", std::string(to_string(spec.kind))},
                                          {"seed", c.seed},
                                          {"plan", plan_json(p.plan)},
                                          {"selection", p.selection.report},
                                          {"rows", out_rows},
                                          {"failures", failures}}));
  return failures.empty() ? kOk : kModel;
}

struct ChangepointArgs {
  std::string config;
  std::string flu;
  std::vector<std::string> queries;
  std::string resource = "search";
  std::string start, end;
  int iterations = 500;
  int burn_in = 50;
  double p0 = 0.1, w0 = 0.1;
  double threshold = 0.5;
  std::size_t window = 1;
  std::size_t top_k = 3;
  std::uint64_t seed = 0;
  std::string out = "out";
};

json match_json(const MatchReport& m) {
  return {{"tp", m.true_positive},
          {"fp", m.false_positive},
          {"fn", m.false_negative},
          {"sensitivity", m.sensitivity},
          {"ppv", m.ppv}};
}

int cmd_changepoint(const ChangepointArgs& a, const CLI::App& sub) {
  RunConfig c = load_run_config(a.config);
  if (!a.flu.empty()) c.flu = a.flu;
  if (sub.count("--seed")) c.seed = a.seed;
  if (sub.count("--out") || a.config.empty()) c.out = a.out;
  const ResourceKind resource = resource_from(a.resource);
  const std::vector<std::string> files = a.queries.empty() ? c.files[resource] : a.queries;
  if (c.flu.empty()) throw CommandError(kUsage, "changepoint needs --flu or a config with a flu series");
  if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw CommandError(kUsage, "threshold must lie in [0, 1]");

  BcpConfig bcp{a.iterations, a.burn_in, a.p0, a.w0, c.seed};
  bcp.validate();
  const ScoreOptions options{a.top_k, a.threshold, a.window};

  WeeklySeries flu = load_series(c.flu, ResourceKind::FluPatients);
  std::vector<WeeklySeries> queries;
  for (const auto& f : files) queries.push_back(load_series(f, resource));
  if (!a.start.empty() || !a.end.empty()) {
    const WeekIndex first = a.start.empty() ? flu.start() : WeekIndex::parse(a.start);
    const WeekIndex last = a.end.empty() ? flu.last() : WeekIndex::parse(a.end);
    try {
      flu = flu.slice(first, last);
      for (auto& q : queries) q = q.slice(first, last);
    } catch (const Error& e) {
      throw CommandError(kAlignment, std::string("series do not cover the requested range: ") + e.what());
    }
  }
  if (flu.size() < 2 || is_constant(flu.values())) {
    throw CommandError(kDegenerate, "flu series is constant or too short for change-point analysis");
  }
  const fs::path dir = prepare_out_dir(c.out);
  const ResourceChangeScore score = score_resource(flu, queries, flu, bcp, options);

  const auto dates = [&](const std::vector<std::size_t>& idx) {
    json arr = json::array();
    for (auto i : idx) arr.push_back(flu.week_at(i).to_string());
    return arr;
  };
  json per_query = json::array();
  for (const auto& q : score.queries) {
    per_query.push_back({{"term", q.term},
                         {"r", q.r},
                         {"probabilities", q.posterior.probabilities},
                         {"detected", q.detected},
                         {"matches", match_json(q.report)}});
  }
  const json report = {{"start", flu.start().to_string()},
                       {"probabilities", score.flu_posterior.probabilities},
                       {"detected", score.flu_detected},
                       {"detected_dates", dates(score.flu_detected)},
                       {"matches", match_json(score.pooled)},
                       {"queries", per_query},
                       {"config",
                        {{"iterations", bcp.iterations},
                         {"burn_in", bcp.burn_in},
                         {"p0", bcp.p0},
                         {"w0", bcp.w0},
                         {"threshold", options.threshold},
                         {"window", options.window},
                         {"top_k", options.top_k},
                         {"seed", bcp.seed}}}};
  write_file(dir / "changepoint.json", dump(report));
  return kOk;
}

void add_run_flags(CLI::App& sub, RunArgs& a) {
  sub.add_option("--config", a.config, "JSON run config");
  sub.add_option("--flu", a.flu, "Flu patient CSV");
  sub.add_option("--series", a.series, "Signal CSV as resource=path (repeatable)");
  sub.add_option("--model", a.model, "lasso, huber, svr, forest, arima or all");
  sub.add_option("--train-start", a.train_start, "First training week (YYYY-MM-DD)");
  sub.add_option("--window-count", a.window_count, "Trailing 52-week evaluation windows");
  sub.add_option("--min-lag", a.min_lag, "Smallest flu lag");
  sub.add_option("--max-lag", a.max_lag, "Largest flu lag");
  sub.add_option("--signal-lag", a.signal_lag, "Weeks between a signal reading and the target week");
  sub.add_option("--seed", a.seed, "Seed");
  sub.add_option("--threads", a.threads, "Worker threads")->check(CLI::PositiveNumber);
  sub.add_option("--out", a.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Influenza nowcasting from multiple weekly signals"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic panel");
  synth_cmd->add_option("--config", synth.config, "JSON with \"synth\" and \"proxies\" sections");
  synth_cmd->add_option("--years", synth.years, "Seasons to generate")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--proxies", synth.proxies, "Number of proxy series")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed, "Seed");
  synth_cmd->add_option("--out", synth.out, "Output directory");

  SelectArgs select;
  auto* select_cmd = app.add_subcommand("select", "Screen candidate queries by correlation with the target");
  select_cmd->add_option("--config", select.config, "JSON run config");
  select_cmd->add_option("--target", select.target, "Target CSV");
  select_cmd->add_option("--candidates", select.candidates, "Candidate CSVs");
  select_cmd->add_option("--resource", select.resource, "Resource of the candidates");
  select_cmd->add_option("--threshold", select.threshold, "Keep candidates with r strictly above this");
  select_cmd->add_option("--start", select.start, "First week of the correlation range");
  select_cmd->add_option("--end", select.end, "Last week of the correlation range");
  select_cmd->add_option("--corpus", select.corpus, "Tokenized corpus, one document per line");
  select_cmd->add_option("--tfidf-k", select.tfidf_k, "Terms kept by tf-idf ranking");
  select_cmd->add_option("--freq-k", select.freq_k, "Terms kept by frequency ranking");
  select_cmd->add_option("--seed", select.seed, "Seed (unused, accepted for uniformity)");
  select_cmd->add_option("--out", select.out, "Output directory");

  RunArgs backtest_args;
  auto* backtest_cmd = app.add_subcommand("backtest", "Expanding-window backtest");
  add_run_flags(*backtest_cmd, backtest_args);

  RunArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Leave-one-block-out ablation");
  add_run_flags(*ablate_cmd, ablate_args);
  ablate_cmd->add_option("--drop", ablate_args.drop, "Only these rows: none, past, search, social, shopping, qa");

  ChangepointArgs cp;
  auto* cp_cmd = app.add_subcommand("changepoint", "Bayesian change-point analysis and match scoring");
  cp_cmd->add_option("--config", cp.config, "JSON run config");
  cp_cmd->add_option("--flu", cp.flu, "Flu patient CSV");
  cp_cmd->add_option("--queries", cp.queries, "Query CSVs");
  cp_cmd->add_option("--resource", cp.resource, "Resource of the queries");
  cp_cmd->add_option("--start", cp.start, "First week analysed");
  cp_cmd->add_option("--end", cp.end, "Last week analysed");
  cp_cmd->add_option("--iterations", cp.iterations, "MCMC iterations");
  cp_cmd->add_option("--burn-in", cp.burn_in, "Discarded iterations");
  cp_cmd->add_option("--p0", cp.p0, "Prior bound on the change probability");
  cp_cmd->add_option("--w0", cp.w0, "Prior bound on the signal-to-noise ratio");
  cp_cmd->add_option("--threshold", cp.threshold, "Detect where the posterior exceeds this");
  cp_cmd->add_option("--window", cp.window, "Match tolerance in weeks");
  cp_cmd->add_option("--top-k", cp.top_k, "Queries analysed per resource");
  cp_cmd->add_option("--seed", cp.seed, "Seed");
  cp_cmd->add_option("--out", cp.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, *synth_cmd);
    if (*select_cmd) return cmd_select(select, *select_cmd);
    if (*backtest_cmd) return cmd_backtest(backtest_args, *backtest_cmd);
    if (*ablate_cmd) return cmd_ablate(ablate_args, *ablate_cmd);
    if (*cp_cmd) return cmd_changepoint(cp, *cp_cmd);
  } catch (const CommandError& e) {
    std::cerr << "flunow: " << e.what() << "\n";
    return e.code;
  } catch (const Error& e) {
    std::cerr << "flunow: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "flunow: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
