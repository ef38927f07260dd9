#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bssad/dataset.hpp"
#include "bssad/neural.hpp"
#include "bssad/training.hpp"

namespace bssad {

/// Everything a detection run needs alongside the parameters.
struct ModelBundle {
  NeuralModel model;
  NoiseEstimate noise;
  std::vector<std::string> feature_names;
  NormalizationStats norm;
};

namespace detail {

constexpr const char* kModelMagic = "BSSAD-MODEL";
constexpr int kModelVersion = 1;

struct TensorRef {
  std::string name;
  double* data;
  Index rows, cols;  // stored row-major
};

inline void add_stack(std::vector<TensorRef>& out, const std::string& prefix,
                      std::vector<LayerParams>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.push_back({base + ".weight", layers[l].weights.data(),
                   layers[l].weights.rows(), layers[l].weights.cols()});
    out.push_back({base + ".bias", layers[l].biases.data(),
                   layers[l].biases.size(), 1});
  }
}

inline std::vector<TensorRef> named_tensors(NeuralModel& m) {
  std::vector<TensorRef> out;
  add_stack(out, "encoder", m.encoder);
  add_stack(out, "decoder", m.decoder);
  auto add = [&](const char* name, auto& t) {
    out.push_back({name, t.data(), t.rows(), t.cols()});
  };
  add("lstm.w_input", m.lstm.w_input);
  add("lstm.w_forget", m.lstm.w_forget);
  add("lstm.w_output", m.lstm.w_output);
  add("lstm.w_candidate", m.lstm.w_candidate);
  add("lstm.b_input", m.lstm.b_input);
  add("lstm.b_forget", m.lstm.b_forget);
  add("lstm.b_output", m.lstm.b_output);
  add("lstm.b_candidate", m.lstm.b_candidate);
  add_stack(out, "transition", m.transition_head);
  return out;
}

inline void write_tensor(std::ostream& out, const std::string& name,
                         const double* data, Index rows, Index cols) {
  out << "tensor " << name << " " << rows << " " << cols << "\n";
  // Eigen stores column-major; emit row-major text.
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      out << (c ? " " : "") << format_double(data[c * rows + r]);
    }
    out << "\n";
  }
}

inline void write_matrix_tensor(std::ostream& out, const std::string& name,
                                const Matrix& m) {
  write_tensor(out, name, m.data(), m.rows(), m.cols());
}

inline void write_stack_header(std::ostream& out, const std::string& name,
                               const std::vector<LayerParams>& layers) {
  out << name << " " << layers.size() << "\n";
  for (const auto& l : layers) {
    out << "layer " << l.weights.rows() << " " << l.weights.cols() << " "
        << (l.activation == Activation::Tanh ? "tanh" : "linear") << "\n";
  }
}

inline void write_model_file(std::ostream& out, const NeuralModel& model,
                             const NoiseEstimate& noise,
                             const ModelBundle* bundle) {
  out << kModelMagic << " " << kModelVersion << "\n";
  out << "dims " << model.num_features << " " << model.latent_dim << " "
      << model.window << " " << model.hidden_dim << "\n";
  out << "alphas " << format_double(model.alpha1) << " "
      << format_double(model.alpha2) << " " << format_double(model.alpha3)
      << "\n";
  write_stack_header(out, "encoder", model.encoder);
  write_stack_header(out, "decoder", model.decoder);
  write_stack_header(out, "transition", model.transition_head);
  if (bundle) {
    out << "features " << bundle->feature_names.size() << "\n";
    for (const auto& n : bundle->feature_names) out << n << "\n";
  }
  auto tensors = named_tensors(const_cast<NeuralModel&>(model));
  for (const auto& t : tensors) write_tensor(out, t.name, t.data, t.rows, t.cols);
  write_matrix_tensor(out, "noise.process", noise.process);
  write_matrix_tensor(out, "noise.measurement", noise.measurement);
  if (bundle) {
    write_matrix_tensor(out, "norm.min", bundle->norm.min);
    write_matrix_tensor(out, "norm.max", bundle->norm.max);
  }
  out << "end\n";
}

struct ModelReader {
  std::ifstream in;
  std::string path;

  explicit ModelReader(const std::string& p) : in(p), path(p) {
    if (!in) throw data_error("cannot open model file: " + p);
  }

  [[noreturn]] void fail(const std::string& what) {
    throw data_error(path + ": " + what);
  }

  std::vector<LayerParams> read_stack(const std::string& expect) {
    std::string keyword;
    std::size_t count = 0;
    if (!(in >> keyword >> count) || keyword != expect) {
      fail("truncated file: expected '" + expect + "' section");
    }
    std::vector<LayerParams> layers;
    for (std::size_t l = 0; l < count; ++l) {
      std::string tag, act;
      Index rows = 0, cols = 0;
      if (!(in >> tag >> rows >> cols >> act) || tag != "layer" ||
          rows < 1 || cols < 1 || (act != "tanh" && act != "linear")) {
        fail("malformed layer description in " + expect);
      }
      layers.push_back(make_layer(rows, cols,
                                  act == "tanh" ? Activation::Tanh
                                                : Activation::Linear));
    }
    return layers;
  }

  void read_tensor_into(std::vector<TensorRef>& tensors) {
    std::string name;
    Index rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) fail("truncated tensor header");
    TensorRef* target = nullptr;
    for (auto& t : tensors) {
      if (t.name == name) {
        target = &t;
        break;
      }
    }
    if (!target) fail("unknown tensor '" + name + "'");
    if (target->rows != rows || target->cols != cols) {
      fail("tensor " + name + ": stored shape " + std::to_string(rows) + "x" +
           std::to_string(cols) + " does not match expected " +
           std::to_string(target->rows) + "x" + std::to_string(target->cols));
    }
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        double v = 0.0;
        if (!(in >> v)) {
          fail("tensor " + name + ": expected " + std::to_string(rows * cols) +
               " values, file ends or has a non-numeric token after " +
               std::to_string(r * cols + c));
        }
        target->data[c * rows + r] = v;
      }
    }
    target->rows = -1;  // mark as filled
  }
};

inline void load_model_file(const std::string& path, NeuralModel& model,
                            NoiseEstimate& noise, ModelBundle* bundle) {
  ModelReader reader(path);
  auto& in = reader.in;

  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kModelMagic) {
    reader.fail("not a model file (bad header)");
  }
  if (version != kModelVersion) {
    reader.fail("unsupported model version " + std::to_string(version) +
                ", expected " + std::to_string(kModelVersion));
  }

  std::string keyword;
  if (!(in >> keyword >> model.num_features >> model.latent_dim >>
        model.window >> model.hidden_dim) ||
      keyword != "dims") {
    reader.fail("truncated file: expected 'dims'");
  }
  if (!(in >> keyword >> model.alpha1 >> model.alpha2 >> model.alpha3) ||
      keyword != "alphas") {
    reader.fail("truncated file: expected 'alphas'");
  }
  model.encoder = reader.read_stack("encoder");
  model.decoder = reader.read_stack("decoder");
  model.transition_head = reader.read_stack("transition");
  model.lstm = make_lstm(model.num_features, model.hidden_dim);

  const Index flat = Index(model.window) * model.num_features;
  if (model.encoder.empty() || model.decoder.empty() ||
      model.transition_head.empty() ||
      model.encoder.front().weights.cols() != flat ||
      model.encoder.back().weights.rows() != model.latent_dim ||
      model.decoder.front().weights.cols() != model.latent_dim ||
      model.decoder.back().weights.rows() != model.num_features ||
      model.transition_head.front().weights.cols() !=
          model.latent_dim + model.hidden_dim ||
      model.transition_head.back().weights.rows() != model.latent_dim) {
    reader.fail("layer shapes inconsistent with declared dims");
  }

  noise.process = Matrix::Zero(model.latent_dim, model.latent_dim);
  noise.measurement = Matrix::Zero(model.num_features, model.num_features);

  auto tensors = detail::named_tensors(model);
  tensors.push_back({"noise.process", noise.process.data(),
                     noise.process.rows(), noise.process.cols()});
  tensors.push_back({"noise.measurement", noise.measurement.data(),
                     noise.measurement.rows(), noise.measurement.cols()});
  if (bundle) {
    bundle->norm.min = Vector::Zero(model.num_features);
    bundle->norm.max = Vector::Zero(model.num_features);
    bundle->norm.fitted_on = "loaded";
    tensors.push_back({"norm.min", bundle->norm.min.data(),
                       bundle->norm.min.size(), 1});
    tensors.push_back({"norm.max", bundle->norm.max.data(),
                       bundle->norm.max.size(), 1});
  }

  bool saw_end = false;
  while (in >> keyword) {
    if (keyword == "tensor") {
      reader.read_tensor_into(tensors);
    } else if (keyword == "features") {
      std::size_t count = 0;
      if (!(in >> count)) reader.fail("truncated features section");
      in.ignore();  // rest of the count line
      std::vector<std::string> names;
      for (std::size_t i = 0; i < count; ++i) {
        std::string line;
        if (!std::getline(in, line)) reader.fail("truncated features section");
        names.push_back(detail::trim(line));
      }
      if (bundle) bundle->feature_names = std::move(names);
    } else if (keyword == "end") {
      saw_end = true;
      break;
    } else {
      reader.fail("unknown section '" + keyword + "'");
    }
  }
  if (!saw_end) reader.fail("truncated file: missing 'end'");
  for (const auto& t : tensors) {
    if (t.rows != -1) reader.fail("truncated file: missing tensor " + t.name);
  }
  if (bundle && Index(bundle->feature_names.size()) != model.num_features) {
    reader.fail("feature name count does not match dims");
  }
}

}  // namespace detail

inline void save_model(const NeuralModel& model, const NoiseEstimate& noise,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write model file: " + path);
  detail::write_model_file(out, model, noise, nullptr);
  if (!out) throw data_error("failed writing model file: " + path);
}

inline std::pair<NeuralModel, NoiseEstimate> load_model(
    const std::string& path) {
  NeuralModel model;
  NoiseEstimate noise;
  detail::load_model_file(path, model, noise, nullptr);
  return {std::move(model), std::move(noise)};
}

inline void save_bundle(const ModelBundle& bundle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write model file: " + path);
  detail::write_model_file(out, bundle.model, bundle.noise, &bundle);
  if (!out) throw data_error("failed writing model file: " + path);
}

inline ModelBundle load_bundle(const std::string& path) {
  ModelBundle bundle;
  detail::load_model_file(path, bundle.model, bundle.noise, &bundle);
  if (bundle.feature_names.empty()) {
    throw data_error(path + ": file has no feature metadata");
  }
  return bundle;
}

}  // namespace bssad
