#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bssad/anomaly.hpp"
#include "bssad/filters.hpp"
#include "bssad/synth.hpp"
#include "bssad/training.hpp"

namespace bssad {

/// Flat run configuration; merge order is defaults < file < flags.
struct RunConfig {
  int tau = 12;
  int latent_dim = 8;
  int hidden_dim = 64;
  int epochs = 100;
  double lr = 1e-3;
  int batch_size = 64;
  double alpha1 = 0.45, alpha2 = 0.45, alpha3 = 0.45;
  double validation_fraction = 0.25;
  FilterKind filter = FilterKind::Enkf;
  int n_sigma = 20;
  int n_particles = 1000;
  double alpha_init = 100.0;
  double alpha_small = 0.01;
  double sigma_rbf = 1.0;
  double nt_fraction = 0.1;
  double nrs_percent = 1.0;
  std::uint64_t seed = 1;
  ScoreSource score_source = ScoreSource::Predicted;
  Metric metric = Metric::F1;
  bool rejuvenate_every_step = false;

  int synth_latent_dim = 3;
  int synth_sensors = 8;
  long synth_length = 10000;
  double synth_noise_scale = 0.1;
  std::vector<AnomalySegment> synth_segments;
};

namespace detail {

inline long parse_long(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' expects an integer, got '" +
                       value + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  if (!parse_double(value, v)) {
    throw config_error("config: key '" + key + "' expects a number, got '" +
                       value + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error("config: key '" + key + "' expects true/false, got '" +
                     value + "'");
}

inline std::vector<AnomalySegment> parse_segments(const std::string& value) {
  std::vector<AnomalySegment> segments;
  if (detail::trim(value).empty()) return segments;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::stringstream part(item);
    std::string start, length, kind;
    if (!std::getline(part, start, ':') || !std::getline(part, length, ':') ||
        !std::getline(part, kind)) {
      throw config_error("config: segment '" + item +
                         "' must be start:length:kind");
    }
    AnomalySegment seg;
    seg.start = parse_long("synth_segments", detail::trim(start));
    seg.length = parse_long("synth_segments", detail::trim(length));
    const std::string k = detail::trim(kind);
    if (k == "spike") {
      seg.kind = AnomalyKind::Spike;
    } else if (k == "mean_shift") {
      seg.kind = AnomalyKind::MeanShift;
    } else {
      throw config_error("config: segment kind '" + k +
                         "' must be spike or mean_shift");
    }
    segments.push_back(seg);
  }
  return segments;
}

inline std::string segments_to_string(const std::vector<AnomalySegment>& segs) {
  std::string out;
  for (const auto& s : segs) {
    if (!out.empty()) out += ",";
    out += std::to_string(s.start) + ":" + std::to_string(s.length) + ":" +
           (s.kind == AnomalyKind::Spike ? "spike" : "mean_shift");
  }
  return out;
}

}  // namespace detail

/// Apply one key=value entry; throws config_error for unknown keys or
/// malformed values.
inline void apply_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
  using detail::parse_bool;
  using detail::parse_long;
  using detail::parse_real;
  if (key == "tau") {
    cfg.tau = int(parse_long(key, value));
  } else if (key == "latent_dim") {
    cfg.latent_dim = int(parse_long(key, value));
  } else if (key == "hidden_dim") {
    cfg.hidden_dim = int(parse_long(key, value));
  } else if (key == "epochs") {
    cfg.epochs = int(parse_long(key, value));
  } else if (key == "lr") {
    cfg.lr = parse_real(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = int(parse_long(key, value));
  } else if (key == "alpha1") {
    cfg.alpha1 = parse_real(key, value);
  } else if (key == "alpha2") {
    cfg.alpha2 = parse_real(key, value);
  } else if (key == "alpha3") {
    cfg.alpha3 = parse_real(key, value);
  } else if (key == "validation_fraction") {
    cfg.validation_fraction = parse_real(key, value);
  } else if (key == "filter") {
    if (value == "enkf") {
      cfg.filter = FilterKind::Enkf;
    } else if (value == "pf") {
      cfg.filter = FilterKind::Pf;
    } else {
      throw config_error("config: filter must be enkf or pf, got '" + value +
                         "'");
    }
  } else if (key == "n_sigma") {
    cfg.n_sigma = int(parse_long(key, value));
  } else if (key == "n_particles") {
    cfg.n_particles = int(parse_long(key, value));
  } else if (key == "alpha_init") {
    cfg.alpha_init = parse_real(key, value);
  } else if (key == "alpha_small") {
    cfg.alpha_small = parse_real(key, value);
  } else if (key == "sigma_rbf") {
    cfg.sigma_rbf = parse_real(key, value);
  } else if (key == "nt_fraction") {
    cfg.nt_fraction = parse_real(key, value);
  } else if (key == "nrs_percent") {
    cfg.nrs_percent = parse_real(key, value);
  } else if (key == "seed") {
    cfg.seed = std::uint64_t(parse_long(key, value));
  } else if (key == "score_source") {
    if (value == "predicted") {
      cfg.score_source = ScoreSource::Predicted;
    } else if (value == "updated") {
      cfg.score_source = ScoreSource::Updated;
    } else {
      throw config_error(
          "config: score_source must be predicted or updated, got '" + value +
          "'");
    }
  } else if (key == "metric") {
    if (value == "f1") {
      cfg.metric = Metric::F1;
    } else if (value == "mcc") {
      cfg.metric = Metric::Mcc;
    } else {
      throw config_error("config: metric must be f1 or mcc, got '" + value +
                         "'");
    }
  } else if (key == "rejuvenate_every_step") {
    cfg.rejuvenate_every_step = parse_bool(key, value);
  } else if (key == "synth_latent_dim") {
    cfg.synth_latent_dim = int(parse_long(key, value));
  } else if (key == "synth_sensors") {
    cfg.synth_sensors = int(parse_long(key, value));
  } else if (key == "synth_length") {
    cfg.synth_length = parse_long(key, value);
  } else if (key == "synth_noise_scale") {
    cfg.synth_noise_scale = parse_real(key, value);
  } else if (key == "synth_segments") {
    cfg.synth_segments = detail::parse_segments(value);
  } else {
    throw config_error("config: unknown key '" + key + "'");
  }
}

inline void validate(const RunConfig& cfg) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw config_error("config: " + what);
  };
  require(cfg.tau >= 1, "tau must be positive");
  require(cfg.latent_dim >= 1, "latent_dim must be positive");
  require(cfg.hidden_dim >= 1, "hidden_dim must be positive");
  require(cfg.epochs >= 0, "epochs must be non-negative");
  require(cfg.lr > 0.0, "lr must be positive");
  require(cfg.batch_size >= 1, "batch_size must be positive");
  require(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0,
          "validation_fraction must be in (0,1)");
  require(cfg.n_sigma >= 2, "n_sigma must be at least 2");
  require(cfg.n_particles >= 2, "n_particles must be at least 2");
  require(cfg.alpha_init > 0.0, "alpha_init must be positive");
  require(cfg.alpha_small > 0.0, "alpha_small must be positive");
  require(cfg.sigma_rbf > 0.0, "sigma_rbf must be positive");
  require(cfg.nt_fraction >= 0.0 && cfg.nt_fraction <= 1.0,
          "nt_fraction must be in [0,1]");
  require(cfg.nrs_percent >= 0.0 && cfg.nrs_percent <= 100.0,
          "nrs_percent must be in [0,100]");
  require(cfg.synth_latent_dim >= 1, "synth_latent_dim must be positive");
  require(cfg.synth_sensors >= 1, "synth_sensors must be positive");
  require(cfg.synth_length >= 1, "synth_length must be positive");
  require(cfg.synth_noise_scale > 0.0, "synth_noise_scale must be positive");
}

/// Parse a flat key = value file; '#' starts a comment, blank lines are
/// skipped, duplicate and unknown keys are rejected.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  std::set<std::string> seen;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw config_error(path + ":" + std::to_string(lineno) +
                         ": expected key = value");
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw config_error(path + ":" + std::to_string(lineno) +
                         ": duplicate key '" + key + "'");
    }
    apply_entry(cfg, key, value);
  }
}

inline FilterParams filter_params(const RunConfig& cfg) {
  FilterParams p;
  p.kind = cfg.filter;
  p.tau = cfg.tau;
  p.n_sigma = cfg.n_sigma;
  p.n_particles = cfg.n_particles;
  p.alpha_init = cfg.alpha_init;
  p.alpha_small = cfg.alpha_small;
  p.sigma_rbf = cfg.sigma_rbf;
  p.nt_fraction = cfg.nt_fraction;
  p.nrs_percent = cfg.nrs_percent;
  p.rejuvenate_every_step = cfg.rejuvenate_every_step;
  p.score_source = cfg.score_source;
  return p;
}

inline TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions o;
  o.epochs = cfg.epochs;
  o.batch_size = cfg.batch_size;
  o.learning_rate = cfg.lr;
  o.latent_dim = cfg.latent_dim;
  o.hidden_dim = cfg.hidden_dim;
  o.window = cfg.tau;
  o.alpha1 = cfg.alpha1;
  o.alpha2 = cfg.alpha2;
  o.alpha3 = cfg.alpha3;
  return o;
}

inline SynthConfig synth_config(const RunConfig& cfg) {
  SynthConfig s;
  s.latent_dim = cfg.synth_latent_dim;
  s.num_sensors = cfg.synth_sensors;
  s.length = cfg.synth_length;
  s.noise_scale = cfg.synth_noise_scale;
  s.anomaly_segments = cfg.synth_segments;
  s.seed = cfg.seed;
  return s;
}

/// Canonical key/value view of the whole configuration, used for the report
/// echo so identical configs serialize identically.
inline std::vector<std::pair<std::string, std::string>> config_entries(
    const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&](const char* k, const std::string& v) { out.emplace_back(k, v); };
  add("tau", std::to_string(cfg.tau));
  add("latent_dim", std::to_string(cfg.latent_dim));
  add("hidden_dim", std::to_string(cfg.hidden_dim));
  add("epochs", std::to_string(cfg.epochs));
  add("lr", format_double(cfg.lr));
  add("batch_size", std::to_string(cfg.batch_size));
  add("alpha1", format_double(cfg.alpha1));
  add("alpha2", format_double(cfg.alpha2));
  add("alpha3", format_double(cfg.alpha3));
  add("validation_fraction", format_double(cfg.validation_fraction));
  add("filter", cfg.filter == FilterKind::Enkf ? "enkf" : "pf");
  add("n_sigma", std::to_string(cfg.n_sigma));
  add("n_particles", std::to_string(cfg.n_particles));
  add("alpha_init", format_double(cfg.alpha_init));
  add("alpha_small", format_double(cfg.alpha_small));
  add("sigma_rbf", format_double(cfg.sigma_rbf));
  add("nt_fraction", format_double(cfg.nt_fraction));
  add("nrs_percent", format_double(cfg.nrs_percent));
  add("seed", std::to_string(cfg.seed));
  add("score_source",
      cfg.score_source == ScoreSource::Predicted ? "predicted" : "updated");
  add("metric", cfg.metric == Metric::F1 ? "f1" : "mcc");
  add("rejuvenate_every_step", cfg.rejuvenate_every_step ? "true" : "false");
  add("synth_latent_dim", std::to_string(cfg.synth_latent_dim));
  add("synth_sensors", std::to_string(cfg.synth_sensors));
  add("synth_length", std::to_string(cfg.synth_length));
  add("synth_noise_scale", format_double(cfg.synth_noise_scale));
  add("synth_segments", detail::segments_to_string(cfg.synth_segments));
  return out;
}

}  // namespace bssad
