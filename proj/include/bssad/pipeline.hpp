#pragma once

#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bssad/anomaly.hpp"
#include "bssad/config.hpp"
#include "bssad/filters.hpp"
#include "bssad/model_io.hpp"
#include "bssad/synth.hpp"
#include "bssad/training.hpp"

namespace bssad {

/// Map failures onto the documented exit codes: 0 ok, 2 config/usage,
/// 3 data, 4 numerical.
template <typename Fn>
int run_cli_command(Fn&& fn, std::ostream& err) {
  try {
    fn();
    return 0;
  } catch (const config_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

namespace detail {

inline void check_schema(const ModelBundle& bundle, const Dataset& data) {
  if (data.cols() != Index(bundle.feature_names.size())) {
    throw data_error("schema mismatch: model expects " +
                     std::to_string(bundle.feature_names.size()) +
                     " features, data has " + std::to_string(data.cols()));
  }
  for (std::size_t j = 0; j < bundle.feature_names.size(); ++j) {
    if (data.feature_names[j] != bundle.feature_names[j]) {
      throw data_error("schema mismatch: feature " + std::to_string(j) +
                       " is '" + data.feature_names[j] + "', model expects '" +
                       bundle.feature_names[j] + "'");
    }
  }
}

inline std::vector<int> sliced_labels(const Dataset& data, int tau) {
  return std::vector<int>(data.labels->begin() + tau, data.labels->end());
}

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

inline nlohmann::ordered_json threshold_json(double threshold) {
  if (std::isinf(threshold)) return "inf";
  return threshold;
}

inline nlohmann::ordered_json search_json(const ThresholdSearchResult& r) {
  nlohmann::ordered_json j;
  j["metric_optimized"] = r.metric_optimized == Metric::F1 ? "f1" : "mcc";
  j["best_threshold"] = threshold_json(r.best_threshold);
  j["best_f1"] = r.best_f1;
  j["best_mcc"] = r.best_mcc;
  j["confusion"] = {{"tp", r.best_confusion.tp},
                    {"fp", r.best_confusion.fp},
                    {"fn", r.best_confusion.fn},
                    {"tn", r.best_confusion.tn}};
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  for (const auto& row : r.table) {
    table.push_back({{"threshold", threshold_json(row.threshold)},
                     {"f1", row.f1},
                     {"mcc", row.mcc}});
  }
  j["table"] = std::move(table);
  return j;
}

inline void write_json(const nlohmann::ordered_json& j,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write report file: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw data_error("failed writing report file: " + path);
}

inline void write_beliefs(const BeliefSequence& beliefs, Index obs_dim,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write beliefs file: " + path);
  out << "t";
  for (Index i = 0; i < obs_dim; ++i) out << ",mean_" << i + 1;
  for (Index i = 0; i < obs_dim; ++i) {
    for (Index j = 0; j < obs_dim; ++j) out << ",cov_" << i + 1 << "_" << j + 1;
  }
  out << "\n";
  for (std::size_t k = 0; k < beliefs.beliefs.size(); ++k) {
    const auto& b = beliefs.beliefs[k];
    out << beliefs.offset + Index(k);
    for (Index i = 0; i < obs_dim; ++i) out << "," << format_double(b.mean(i));
    for (Index i = 0; i < obs_dim; ++i) {
      for (Index j = 0; j < obs_dim; ++j) {
        out << "," << format_double(b.covariance(i, j));
      }
    }
    out << "\n";
  }
  if (!out) throw data_error("failed writing beliefs file: " + path);
}

/// Detection core shared by cmd_detect and cmd_sweep.
inline ScoreSeries detect_scores(const ModelBundle& bundle,
                                 const Dataset& normalized,
                                 const FilterParams& params,
                                 std::uint64_t seed,
                                 BeliefSequence* beliefs_out = nullptr) {
  const SystemModel system = make_neural_system(bundle.model, bundle.noise);
  BeliefSequence beliefs = run_filter(system, normalized, params, seed);
  ScoreSeries scores =
      score_series(normalized, beliefs.beliefs, params.tau);
  if (beliefs_out) *beliefs_out = std::move(beliefs);
  return scores;
}

}  // namespace detail

inline int cmd_synth(const RunConfig& cfg, const std::string& out_path,
                     std::ostream& log, std::ostream& err) {
  return run_cli_command(
      [&] {
        validate(cfg);
        const SynthConfig synth = synth_config(cfg);
        validate(synth);
        const Dataset data = synth_generate(synth);
        write_csv(data, out_path);
        const long anomalies =
            std::count(data.labels->begin(), data.labels->end(), 1);
        log << "wrote " << out_path << ": T=" << data.rows()
            << " M=" << data.cols() << " anomaly_fraction="
            << format_double(double(anomalies) / double(data.rows())) << "\n";
      },
      err);
}

inline int cmd_train(const std::string& train_csv, const RunConfig& cfg,
                     const std::string& model_out,
                     const std::optional<std::string>& label_column,
                     std::ostream& log, std::ostream& err) {
  return run_cli_command(
      [&] {
        validate(cfg);
        const Dataset data = load_csv(train_csv, label_column);
        if (data.labels) {
          for (std::size_t t = 0; t < data.labels->size(); ++t) {
            if ((*data.labels)[t] != 0) {
              throw config_error(
                  "training data must be normal-only; label 1 at row " +
                  std::to_string(t + 1));
            }
          }
        }
        const auto [train_part, val_part] =
            split(data, {cfg.validation_fraction, cfg.tau});
        const NormalizationStats stats = fit_normalizer(train_part, "train");
        const Dataset train_n = apply_normalizer(train_part, stats);
        const Dataset val_n = apply_normalizer(val_part, stats);
        TrainResult result = train(train_n, val_n, train_options(cfg), cfg.seed);
        ModelBundle bundle{std::move(result.model), std::move(result.noise),
                           data.feature_names, stats};
        save_bundle(bundle, model_out);
        log << "wrote " << model_out;
        if (!result.loss_history.empty()) {
          log << ": final_loss=" << format_double(result.loss_history.back());
        }
        log << " trace_Q=" << format_double(bundle.noise.process.trace())
            << " trace_R=" << format_double(bundle.noise.measurement.trace())
            << "\n";
      },
      err);
}

inline int cmd_detect(const std::string& test_csv,
                      const std::string& model_path, const RunConfig& cfg,
                      const std::string& scores_out,
                      const std::optional<std::string>& label_column,
                      const std::optional<std::string>& beliefs_out,
                      std::ostream& log, std::ostream& err) {
  return run_cli_command(
      [&] {
        validate(cfg);
        const ModelBundle bundle = load_bundle(model_path);
        const Dataset data = load_csv(test_csv, label_column);
        detail::check_schema(bundle, data);
        const Dataset normalized = apply_normalizer(data, bundle.norm);

        FilterParams params = filter_params(cfg);
        params.tau = bundle.model.window;  // the model fixes the window
        BeliefSequence beliefs;
        const ScoreSeries scores = detail::detect_scores(
            bundle, normalized, params, cfg.seed, &beliefs);

        std::optional<std::vector<int>> labels;
        if (data.labels) labels = detail::sliced_labels(data, params.tau);
        write_scores(scores, labels ? &*labels : nullptr, scores_out);
        if (beliefs_out) {
          detail::write_beliefs(beliefs, data.cols(), *beliefs_out);
        }
        log << "wrote " << scores_out << ": " << scores.scores.size()
            << " scores (filter="
            << (params.kind == FilterKind::Enkf ? "enkf" : "pf") << ")";
        if (!beliefs.underflow_steps.empty()) {
          log << " weight_underflow_steps=" << beliefs.underflow_steps.size();
        }
        log << "\n";
      },
      err);
}

inline int cmd_eval(const std::string& scores_csv, const RunConfig& cfg,
                    const std::string& report_out, std::ostream& log,
                    std::ostream& err) {
  return run_cli_command(
      [&] {
        validate(cfg);
        const ScoresFile file = read_scores(scores_csv);
        if (file.labels.empty()) {
          throw data_error(scores_csv +
                           ": no label column; evaluation needs labels");
        }
        const ThresholdSearchResult result =
            best_threshold_search(file.scores, file.labels, cfg.metric);
        nlohmann::ordered_json report = detail::search_json(result);
        report["config"] = detail::config_json(cfg);
        detail::write_json(report, report_out);
        log << "best_threshold="
            << (std::isinf(result.best_threshold)
                    ? std::string("inf")
                    : format_double(result.best_threshold))
            << " f1=" << format_double(result.best_f1)
            << " mcc=" << format_double(result.best_mcc) << " (tp="
            << result.best_confusion.tp << " fp=" << result.best_confusion.fp
            << " fn=" << result.best_confusion.fn << " tn="
            << result.best_confusion.tn << ")\n";
      },
      err);
}

struct SweepRow {
  std::uint64_t seed = 0;
  Index size = 0;
  bool failed = false;
  std::string error;
  double threshold = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

/// Detect+eval per (seed, size) pair; pairs run concurrently, each with its
/// own generator stream, and failures do not abort the remaining pairs.
inline int cmd_sweep(const std::string& test_csv,
                     const std::string& model_path, const RunConfig& cfg,
                     const std::vector<std::uint64_t>& seeds,
                     const std::vector<Index>& sizes,
                     const std::optional<std::string>& label_column,
                     const std::string& report_out, std::ostream& log,
                     std::ostream& err) {
  return run_cli_command(
      [&] {
        validate(cfg);
        if (seeds.empty() || sizes.empty()) {
          throw config_error("sweep: need at least one seed and one size");
        }
        const ModelBundle bundle = load_bundle(model_path);
        const Dataset data = load_csv(test_csv, label_column);
        detail::check_schema(bundle, data);
        if (!data.labels) {
          throw data_error(test_csv + ": sweep needs a label column");
        }
        const Dataset normalized = apply_normalizer(data, bundle.norm);

        FilterParams base = filter_params(cfg);
        base.tau = bundle.model.window;
        const std::vector<int> labels =
            detail::sliced_labels(data, base.tau);

        std::vector<std::pair<std::uint64_t, Index>> pairs;
        for (auto seed : seeds) {
          for (auto size : sizes) pairs.emplace_back(seed, size);
        }
        auto run_pair = [&](std::uint64_t seed, Index size) {
          SweepRow row;
          row.seed = seed;
          row.size = size;
          try {
            FilterParams params = base;
            if (params.kind == FilterKind::Enkf) {
              params.n_sigma = size;
            } else {
              params.n_particles = size;
            }
            const ScoreSeries scores =
                detail::detect_scores(bundle, normalized, params, seed);
            const ThresholdSearchResult search =
                best_threshold_search(scores, labels, cfg.metric);
            row.threshold = search.best_threshold;
            row.f1 = search.best_f1;
            row.mcc = search.best_mcc;
          } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
          }
          return row;
        };

        std::vector<std::future<SweepRow>> futures;
        futures.reserve(pairs.size());
        for (const auto& [seed, size] : pairs) {
          futures.push_back(std::async(std::launch::async, run_pair, seed, size));
        }
        std::vector<SweepRow> rows;
        rows.reserve(pairs.size());
        for (auto& f : futures) rows.push_back(f.get());

        const SweepRow* best = nullptr;
        for (const auto& row : rows) {
          if (row.failed) continue;
          const double value = cfg.metric == Metric::F1 ? row.f1 : row.mcc;
          if (!best ||
              value > (cfg.metric == Metric::F1 ? best->f1 : best->mcc)) {
            best = &row;
          }
        }

        nlohmann::ordered_json report;
        report["filter"] = cfg.filter == FilterKind::Enkf ? "enkf" : "pf";
        report["metric_optimized"] = cfg.metric == Metric::F1 ? "f1" : "mcc";
        nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
        nlohmann::ordered_json failures = nlohmann::ordered_json::array();
        for (const auto& row : rows) {
          if (row.failed) {
            failures.push_back({{"seed", row.seed},
                                {"size", row.size},
                                {"error", row.error}});
            continue;
          }
          rows_json.push_back({{"seed", row.seed},
                               {"size", row.size},
                               {"threshold", detail::threshold_json(row.threshold)},
                               {"f1", row.f1},
                               {"mcc", row.mcc}});
          log << "seed=" << row.seed << " size=" << row.size
              << " f1=" << format_double(row.f1)
              << " mcc=" << format_double(row.mcc) << "\n";
        }
        report["rows"] = std::move(rows_json);
        report["failures"] = std::move(failures);
        if (best) {
          report["best"] = {{"seed", best->seed},
                            {"size", best->size},
                            {"threshold", detail::threshold_json(best->threshold)},
                            {"f1", best->f1},
                            {"mcc", best->mcc}};
          log << "best: seed=" << best->seed << " size=" << best->size
              << " f1=" << format_double(best->f1)
              << " mcc=" << format_double(best->mcc) << "\n";
        }
        report["config"] = detail::config_json(cfg);
        detail::write_json(report, report_out);
      },
      err);
}

}  // namespace bssad
