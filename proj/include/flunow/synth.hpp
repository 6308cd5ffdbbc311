#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flunow/error.hpp"
#include "flunow/rng.hpp"
#include "flunow/series.hpp"

namespace flunow {

inline constexpr int kWeeksPerSeason = 52;

/// Weekly flu counts: baseline plus one Gaussian bump per 52-week season
/// plus Gaussian noise and optional outliers, clipped at zero.
struct SynthConfig {
  int years = 5;
  double baseline = 1000.0;
  double peak_scale = 40000.0;
  double peak_week_mean = 20.0;  // weeks after the season start
  int peak_week_jitter = 3;      // uniform integer offset in [-jitter, jitter]
  double peak_width = 4.0;       // standard deviation of the bump, weeks
  double noise_sd = 100.0;
  int outlier_count = 0;  // weeks hit by an additive reporting outlier
  double outlier_size = 0.0;
  std::uint64_t seed = 0;
  WeekIndex start = WeekIndex::from_ymd(2013, 9, 30);

  void validate() const {
    if (years < 1) throw Error(ErrorKind::InvalidArgument, "synthetic data needs at least one year");
    if (!(baseline > 0.0) || peak_scale < 0.0 || noise_sd < 0.0 || !(peak_width > 0.0) || peak_week_jitter < 0 ||
        outlier_count < 0 || outlier_count > kWeeksPerSeason * years) {
      throw Error(ErrorKind::InvalidArgument, "invalid synthetic flu configuration");
    }
  }
};

struct Dropout {
  int start = 0;  // offset in weeks from the series start
  int length = 0;
};

/// A proxy signal following the flu curve: gain * flu(t + lead) + noise,
/// with optional additive spikes and a zeroed dropout window.
struct ProxyConfig {
  std::string name = "proxy";
  ResourceKind resource = ResourceKind::SearchQuery;
  int lead_weeks = 0;
  double noise_sd = 0.0;
  double gain = 1.0;
  std::optional<Dropout> dropout;
  int spike_count = 0;
  double spike_size = 0.0;
  std::uint64_t seed = 0;
};

/// Draw order: one jitter per season, one noise draw per week, then
/// outlier_count outlier positions.
inline WeeklySeries gen_flu(const SynthConfig& config) {
  config.validate();
  const int weeks = kWeeksPerSeason * config.years;
  Rng rng(config.seed);
  std::vector<double> peaks;
  for (int s = 0; s < config.years; ++s) {
    const auto span = static_cast<std::uint64_t>(2 * config.peak_week_jitter + 1);
    const int jitter = static_cast<int>(rng.below(span)) - config.peak_week_jitter;
    peaks.push_back(s * kWeeksPerSeason + config.peak_week_mean + jitter);
  }
  std::vector<double> values(static_cast<std::size_t>(weeks));
  for (int t = 0; t < weeks; ++t) {
    double v = config.baseline;
    for (double peak : peaks) {
      const double z = (t - peak) / config.peak_width;
      v += config.peak_scale * std::exp(-0.5 * z * z);
    }
    if (config.noise_sd > 0.0) v += config.noise_sd * rng.normal();
    values[static_cast<std::size_t>(t)] = v;
  }
  std::vector<bool> hit(values.size(), false);
  for (int k = 0; k < config.outlier_count; ++k) {
    auto at = static_cast<std::size_t>(rng.below(values.size()));
    while (hit[at]) at = (at + 1) % values.size();
    hit[at] = true;
    values[at] += config.outlier_size;
  }
  for (double& v : values) v = std::max(v, 0.0);
  return WeeklySeries("flu", ResourceKind::FluPatients, config.start, std::move(values));
}

/// The flu curve without its outliers. Outliers are drawn last, so this
/// matches gen_flu everywhere except the outlier weeks.
inline WeeklySeries gen_flu_truth(SynthConfig config) {
  config.outlier_count = 0;
  return gen_flu(config);
}

/// Draw order: one noise draw per week, then spike_count spike positions.
/// Weeks whose shifted source falls outside the flu range copy the
/// nearest available flu value.
inline WeeklySeries gen_proxy(const WeeklySeries& flu, const ProxyConfig& config) {
  const auto n = static_cast<int>(flu.size());
  if (config.dropout && (config.dropout->start < 0 || config.dropout->length < 0 ||
                         config.dropout->start + config.dropout->length > n)) {
    throw Error(ErrorKind::InvalidArgument, "dropout window lies outside the generated range");
  }
  if (config.noise_sd < 0.0 || config.spike_count < 0 || config.spike_count > n) {
    throw Error(ErrorKind::InvalidArgument, "invalid proxy configuration");
  }
  Rng rng(config.seed);
  std::vector<double> values(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const int src = std::clamp(t + config.lead_weeks, 0, n - 1);
    double v = config.gain * flu[static_cast<std::size_t>(src)];
    if (config.noise_sd > 0.0) v += config.noise_sd * rng.normal();
    values[static_cast<std::size_t>(t)] = v;
  }
  std::vector<bool> spiked(static_cast<std::size_t>(n), false);
  for (int k = 0; k < config.spike_count; ++k) {
    auto at = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)));
    while (spiked[at]) at = (at + 1) % static_cast<std::size_t>(n);
    spiked[at] = true;
    values[at] += config.spike_size;
  }
  if (config.dropout) {
    for (int t = config.dropout->start; t < config.dropout->start + config.dropout->length; ++t) {
      values[static_cast<std::size_t>(t)] = 0.0;
    }
  }
  for (double& v : values) v = std::max(v, 0.0);
  return WeeklySeries(config.name, config.resource, flu.start(), std::move(values));
}

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"years", c.years},
          {"baseline", c.baseline},
          {"peak_scale", c.peak_scale},
          {"peak_week_mean", c.peak_week_mean},
          {"peak_week_jitter", c.peak_week_jitter},
          {"peak_width", c.peak_width},
          {"noise_sd", c.noise_sd},
          {"outlier_count", c.outlier_count},
          {"outlier_size", c.outlier_size},
          {"seed", c.seed},
          {"start", c.start.to_string()}};
}

inline nlohmann::json to_json(const ProxyConfig& c) {
  nlohmann::json j = {{"name", c.name},
                      {"resource", std::string(to_string(c.resource))},
                      {"lead_weeks", c.lead_weeks},
                      {"noise_sd", c.noise_sd},
                      {"gain", c.gain},
                      {"spike_count", c.spike_count},
                      {"spike_size", c.spike_size},
                      {"seed", c.seed}};
  j["dropout"] = c.dropout ? nlohmann::json{{"start", c.dropout->start}, {"length", c.dropout->length}}
                           : nlohmann::json(nullptr);
  return j;
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c = {}) {
  c.years = j.value("years", c.years);
  c.baseline = j.value("baseline", c.baseline);
  c.peak_scale = j.value("peak_scale", c.peak_scale);
  c.peak_week_mean = j.value("peak_week_mean", c.peak_week_mean);
  c.peak_week_jitter = j.value("peak_week_jitter", c.peak_week_jitter);
  c.peak_width = j.value("peak_width", c.peak_width);
  c.noise_sd = j.value("noise_sd", c.noise_sd);
  c.outlier_count = j.value("outlier_count", c.outlier_count);
  c.outlier_size = j.value("outlier_size", c.outlier_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("start")) c.start = WeekIndex::parse(j.at("start").get<std::string>());
  return c;
}

inline ProxyConfig proxy_config_from_json(const nlohmann::json& j, ProxyConfig c = {}) {
  c.name = j.value("name", c.name);
  if (j.contains("resource")) {
    const auto name = j.at("resource").get<std::string>();
    const auto kind = parse_resource(name);
    if (!kind || *kind == ResourceKind::FluPatients) {
      throw Error(ErrorKind::InvalidArgument, "unknown proxy resource '" + name + "'");
    }
    c.resource = *kind;
  }
  c.lead_weeks = j.value("lead_weeks", c.lead_weeks);
  c.noise_sd = j.value("noise_sd", c.noise_sd);
  c.gain = j.value("gain", c.gain);
  c.spike_count = j.value("spike_count", c.spike_count);
  c.spike_size = j.value("spike_size", c.spike_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("dropout") && !j.at("dropout").is_null()) {
    c.dropout = Dropout{j.at("dropout").at("start").get<int>(), j.at("dropout").at("length").get<int>()};
  }
  return c;
}

/// Default proxy set for `count` proxies: resources cycle through search,
/// social, shopping, Q&A; each leads flu by two weeks, and noise grows
/// with every full cycle.
inline std::vector<ProxyConfig> default_proxies(int count, std::uint64_t seed) {
  std::vector<ProxyConfig> out;
  for (int i = 0; i < count; ++i) {
    ProxyConfig p;
    p.resource = kUgcResources[static_cast<std::size_t>(i) % kUgcResources.size()];
    p.name = std::string(to_string(p.resource)) + "_q" + std::to_string(i);
    p.lead_weeks = 2;
    p.gain = 0.05;
    p.noise_sd = 25.0 * (1 + i / 4);
    p.seed = derive_seed(seed, static_cast<std::uint64_t>(i) + 1);
    out.push_back(p);
  }
  return out;
}

}  // namespace flunow
