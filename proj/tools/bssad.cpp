#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bssad/bssad.hpp"

namespace {

constexpr const char* kConfigKeys[] = {
    "tau",          "latent_dim",     "hidden_dim",
    "epochs",       "lr",             "batch_size",
    "alpha1",       "alpha2",         "alpha3",
    "validation_fraction",            "filter",
    "n_sigma",      "n_particles",    "alpha_init",
    "alpha_small",  "sigma_rbf",      "nt_fraction",
    "nrs_percent",  "seed",           "score_source",
    "metric",       "rejuvenate_every_step",
    "synth_latent_dim", "synth_sensors", "synth_length",
    "synth_noise_scale", "synth_segments"};

struct CommonOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  CLI::Option* config_opt = nullptr;
};

void add_config_options(CLI::App& cmd, CommonOptions& opts) {
  opts.config_opt =
      cmd.add_option("--config", opts.config_path, "flat key = value file");
  for (const char* key : kConfigKeys) {
    cmd.add_option_function<std::string>(
        std::string("--") + key,
        [&opts, key](const std::string& value) { opts.overrides[key] = value; },
        "config key override");
  }
}

/// defaults < file < flags
bssad::RunConfig resolve_config(const CommonOptions& opts) {
  bssad::RunConfig cfg;
  if (opts.config_opt && opts.config_opt->count() > 0) {
    bssad::apply_config_file(cfg, opts.config_path);
  }
  for (const auto& [key, value] : opts.overrides) {
    bssad::apply_entry(cfg, key, value);
  }
  bssad::validate(cfg);
  return cfg;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(T(std::stoll(item)));
    } catch (const std::exception&) {
      throw bssad::config_error(std::string(what) + ": bad entry '" + item +
                                "'");
    }
  }
  if (out.empty()) {
    throw bssad::config_error(std::string(what) + ": empty list");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian state-space anomaly detection for multivariate "
               "time series"};
  app.require_subcommand(1);

  CommonOptions synth_opts, train_opts, detect_opts, eval_opts, sweep_opts;
  std::string out_path, model_path, beliefs_path, seeds_text, sizes_text;
  std::string train_csv, test_csv, scores_csv;
  std::string label_column;

  auto* synth = app.add_subcommand("synth", "generate a labeled dataset");
  add_config_options(*synth, synth_opts);
  synth->add_option("--out", out_path, "output CSV")->required();

  auto* train = app.add_subcommand("train", "fit the state-space model");
  train->add_option("data", train_csv, "training CSV (normal only)")
      ->required();
  add_config_options(*train, train_opts);
  train->add_option("--out", model_path, "model output path")->required();
  auto* train_label =
      train->add_option("--label-column", label_column, "label column name");

  auto* detect = app.add_subcommand("detect", "score a test set");
  detect->add_option("data", test_csv, "test CSV")->required();
  add_config_options(*detect, detect_opts);
  detect->add_option("--model", model_path, "trained model path")->required();
  detect->add_option("--out", out_path, "scores CSV output")->required();
  auto* detect_label =
      detect->add_option("--label-column", label_column, "label column name");
  auto* detect_beliefs = detect->add_option(
      "--beliefs-out", beliefs_path, "also export the belief sequence CSV");

  auto* eval = app.add_subcommand("eval", "threshold search over scores");
  eval->add_option("scores", scores_csv, "scores CSV with labels")->required();
  add_config_options(*eval, eval_opts);
  eval->add_option("--out", out_path, "JSON report output")->required();

  auto* sweep = app.add_subcommand("sweep", "detect+eval over seeds x sizes");
  sweep->add_option("data", test_csv, "test CSV with labels")->required();
  add_config_options(*sweep, sweep_opts);
  sweep->add_option("--model", model_path, "trained model path")->required();
  sweep->add_option("--seeds", seeds_text, "comma-separated seeds")
      ->required();
  sweep->add_option("--sizes", sizes_text,
                    "comma-separated ensemble/particle sizes")
      ->required();
  sweep->add_option("--out", out_path, "JSON report output")->required();
  auto* sweep_label =
      sweep->add_option("--label-column", label_column, "label column name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      return bssad::cmd_synth(resolve_config(synth_opts), out_path, std::cout,
                              std::cerr);
    }
    if (train->parsed()) {
      std::optional<std::string> label;
      if (train_label->count() > 0) label = label_column;
      return bssad::cmd_train(train_csv, resolve_config(train_opts),
                              model_path, label, std::cout, std::cerr);
    }
    if (detect->parsed()) {
      std::optional<std::string> label;
      if (detect_label->count() > 0) label = label_column;
      std::optional<std::string> beliefs;
      if (detect_beliefs->count() > 0) beliefs = beliefs_path;
      return bssad::cmd_detect(test_csv, model_path,
                               resolve_config(detect_opts), out_path, label,
                               beliefs, std::cout, std::cerr);
    }
    if (eval->parsed()) {
      return bssad::cmd_eval(scores_csv, resolve_config(eval_opts), out_path,
                             std::cout, std::cerr);
    }
    if (sweep->parsed()) {
      std::optional<std::string> label;
      if (sweep_label->count() > 0) label = label_column;
      return bssad::cmd_sweep(
          test_csv, model_path, resolve_config(sweep_opts),
          parse_list<std::uint64_t>(seeds_text, "--seeds"),
          parse_list<bssad::Index>(sizes_text, "--sizes"), label, out_path,
          std::cout, std::cerr);
    }
  } catch (const bssad::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
