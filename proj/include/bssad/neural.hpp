#pragma once

#include <cmath>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "bssad/common.hpp"
#include "bssad/dataset.hpp"
#include "bssad/rng.hpp"

namespace bssad {

enum class Activation { Tanh, Linear };

struct LayerParams {
  Matrix weights;  // out x in
  Vector biases;   // out
  Activation activation = Activation::Linear;
};

/// Gate parameters of a single LSTM cell; each weight matrix acts on the
/// stacked [input; previous hidden] vector.
struct LstmCellParams {
  Matrix w_input, w_forget, w_output, w_candidate;  // hidden x (input+hidden)
  Vector b_input, b_forget, b_output, b_candidate;  // hidden

  Index hidden_dim() const { return w_input.rows(); }
  Index input_dim() const { return w_input.cols() - w_input.rows(); }
};

/// Learned state-space model: window encoder, state decoder, and a recurrent
/// transition combining the previous latent state with the window.
struct NeuralModel {
  std::vector<LayerParams> encoder;          // flat window -> latent
  std::vector<LayerParams> decoder;          // latent -> observation
  LstmCellParams lstm;                       // window rows -> hidden summary
  std::vector<LayerParams> transition_head;  // [latent; hidden] -> latent

  int num_features = 0;  // M
  int latent_dim = 0;    // M'
  int window = 0;        // tau
  int hidden_dim = 0;

  double alpha1 = 0.45, alpha2 = 0.45, alpha3 = 0.45;
};

inline LayerParams make_layer(Index out, Index in, Activation act) {
  return {Matrix::Zero(out, in), Vector::Zero(out), act};
}

inline LstmCellParams make_lstm(Index input, Index hidden) {
  const Index in = input + hidden;
  return {Matrix::Zero(hidden, in), Matrix::Zero(hidden, in),
          Matrix::Zero(hidden, in), Matrix::Zero(hidden, in),
          Vector::Zero(hidden),    Vector::Zero(hidden),
          Vector::Zero(hidden),    Vector::Zero(hidden)};
}

/// Zero-initialized model with the default topology: one tanh hidden layer
/// per subnet plus a linear output layer.
inline NeuralModel make_model(int num_features, int latent_dim, int window,
                              int hidden_dim, double alpha1 = 0.45,
                              double alpha2 = 0.45, double alpha3 = 0.45) {
  if (num_features < 1 || latent_dim < 1 || window < 1 || hidden_dim < 1) {
    throw config_error("make_model: dimensions must be positive");
  }
  if (latent_dim > window * num_features) {
    throw config_error("make_model: latent_dim must not exceed window*features");
  }
  NeuralModel m;
  m.num_features = num_features;
  m.latent_dim = latent_dim;
  m.window = window;
  m.hidden_dim = hidden_dim;
  m.alpha1 = alpha1;
  m.alpha2 = alpha2;
  m.alpha3 = alpha3;
  const Index flat = Index(window) * num_features;
  m.encoder = {make_layer(hidden_dim, flat, Activation::Tanh),
               make_layer(latent_dim, hidden_dim, Activation::Linear)};
  m.decoder = {make_layer(hidden_dim, latent_dim, Activation::Tanh),
               make_layer(num_features, hidden_dim, Activation::Linear)};
  m.lstm = make_lstm(num_features, hidden_dim);
  m.transition_head = {
      make_layer(hidden_dim, latent_dim + hidden_dim, Activation::Tanh),
      make_layer(latent_dim, hidden_dim, Activation::Linear)};
  return m;
}

/// Flat writable views over every tensor, in the fixed serialization order.
template <typename Model>
inline auto tensor_views(Model& m) {
  using MapType =
      std::conditional_t<std::is_const_v<Model>, Eigen::Map<const Eigen::ArrayXd>,
                         Eigen::Map<Eigen::ArrayXd>>;
  std::vector<MapType> views;
  auto add = [&](auto& t) { views.emplace_back(t.data(), t.size()); };
  auto add_layers = [&](auto& layers) {
    for (auto& l : layers) {
      add(l.weights);
      add(l.biases);
    }
  };
  add_layers(m.encoder);
  add_layers(m.decoder);
  add(m.lstm.w_input);
  add(m.lstm.w_forget);
  add(m.lstm.w_output);
  add(m.lstm.w_candidate);
  add(m.lstm.b_input);
  add(m.lstm.b_forget);
  add(m.lstm.b_output);
  add(m.lstm.b_candidate);
  add_layers(m.transition_head);
  return views;
}

/// Same-shaped model with all tensors zeroed; used as a gradient record and
/// as Adam moment storage.
inline NeuralModel zeros_like(const NeuralModel& m) {
  NeuralModel z = m;
  for (auto& view : tensor_views(z)) view.setZero();
  return z;
}

/// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per tensor.
inline void init_parameters(NeuralModel& m, Rng& rng) {
  auto fill = [&](auto& tensor, Index fan_in) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (Index j = 0; j < tensor.cols(); ++j) {
      for (Index i = 0; i < tensor.rows(); ++i) {
        tensor(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
  };
  auto fill_layers = [&](auto& layers) {
    for (auto& l : layers) {
      fill(l.weights, l.weights.cols());
      fill(l.biases, l.weights.cols());
    }
  };
  fill_layers(m.encoder);
  fill_layers(m.decoder);
  const Index lstm_in = m.lstm.w_input.cols();
  fill(m.lstm.w_input, lstm_in);
  fill(m.lstm.w_forget, lstm_in);
  fill(m.lstm.w_output, lstm_in);
  fill(m.lstm.w_candidate, lstm_in);
  fill(m.lstm.b_input, lstm_in);
  fill(m.lstm.b_forget, lstm_in);
  fill(m.lstm.b_output, lstm_in);
  fill(m.lstm.b_candidate, lstm_in);
  fill_layers(m.transition_head);
}

namespace detail {

inline Matrix apply_activation(Matrix pre, Activation act) {
  if (act == Activation::Tanh) return pre.array().tanh();
  return pre;
}

inline Matrix sigmoid(const Matrix& pre) {
  return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
}

/// Columns are independent inputs.
inline Matrix apply_layers(const std::vector<LayerParams>& layers, Matrix x) {
  for (const auto& l : layers) {
    if (l.weights.cols() != x.rows()) {
      throw std::invalid_argument("layer input has " + std::to_string(x.rows()) +
                                  " rows, weights expect " +
                                  std::to_string(l.weights.cols()));
    }
    Matrix pre = l.weights * x;
    pre.colwise() += l.biases;
    x = apply_activation(std::move(pre), l.activation);
  }
  return x;
}

/// Final hidden state of the cell run over the window rows. `step_input(r)`
/// must yield the (input_dim x batch) matrix for step r.
template <typename StepInput>
inline Matrix lstm_final_hidden(const LstmCellParams& cell, int steps,
                                Index batch, StepInput&& step_input) {
  const Index hidden = cell.hidden_dim();
  Matrix h = Matrix::Zero(hidden, batch);
  Matrix c = Matrix::Zero(hidden, batch);
  Matrix u(cell.w_input.cols(), batch);
  for (int r = 0; r < steps; ++r) {
    u.topRows(cell.input_dim()) = step_input(r);
    u.bottomRows(hidden) = h;
    Matrix gi = sigmoid((cell.w_input * u).colwise() + cell.b_input);
    Matrix gf = sigmoid((cell.w_forget * u).colwise() + cell.b_forget);
    Matrix go = sigmoid((cell.w_output * u).colwise() + cell.b_output);
    Matrix gc = ((cell.w_candidate * u).colwise() + cell.b_candidate)
                    .array()
                    .tanh();
    c = (gf.array() * c.array() + gi.array() * gc.array()).matrix();
    h = (go.array() * c.array().tanh()).matrix();
  }
  return h;
}

}  // namespace detail

/// Encode a batch of flattened windows (tau*M x B) to latent states (M' x B).
inline Matrix encode_batch(const NeuralModel& m, const Matrix& flat_windows) {
  if (flat_windows.rows() != Index(m.window) * m.num_features) {
    throw std::invalid_argument("encode: window shape mismatch");
  }
  return detail::apply_layers(m.encoder, flat_windows);
}

inline Vector encode(const NeuralModel& m, const Matrix& window) {
  if (window.rows() != m.window || window.cols() != m.num_features) {
    throw std::invalid_argument("encode: expected " + std::to_string(m.window) +
                                "x" + std::to_string(m.num_features) +
                                " window");
  }
  return encode_batch(m, flatten_window(window));
}

/// Decode latent states (M' x B) to observation estimates (M x B).
inline Matrix decode_batch(const NeuralModel& m, const Matrix& states) {
  if (states.rows() != m.latent_dim) {
    throw std::invalid_argument("decode: state dimension mismatch");
  }
  return detail::apply_layers(m.decoder, states);
}

inline Vector decode(const NeuralModel& m, const Vector& state) {
  return decode_batch(m, state);
}

/// Next latent state: dense head over [z_prev; lstm summary of the window].
inline Vector transition(const NeuralModel& m, const Vector& z_prev,
                         const Matrix& window) {
  if (z_prev.size() != m.latent_dim) {
    throw std::invalid_argument("transition: state dimension mismatch");
  }
  if (window.rows() != m.window || window.cols() != m.num_features) {
    throw std::invalid_argument("transition: window shape mismatch");
  }
  Matrix h = detail::lstm_final_hidden(
      m.lstm, m.window, 1,
      [&](int r) { return window.row(r).transpose(); });
  Matrix u(m.latent_dim + m.hidden_dim, 1);
  u.topRows(m.latent_dim) = z_prev;
  u.bottomRows(m.hidden_dim) = h;
  return detail::apply_layers(m.transition_head, u);
}

/// Transition many latent states (M' x K) through one shared window; the
/// recurrent summary is computed once and broadcast across columns.
inline Matrix transition_shared(const NeuralModel& m, const Matrix& states,
                                const Matrix& window) {
  if (states.rows() != m.latent_dim) {
    throw std::invalid_argument("transition: state dimension mismatch");
  }
  if (window.rows() != m.window || window.cols() != m.num_features) {
    throw std::invalid_argument("transition: window shape mismatch");
  }
  Matrix h = detail::lstm_final_hidden(
      m.lstm, m.window, 1,
      [&](int r) { return window.row(r).transpose(); });
  Matrix u(m.latent_dim + m.hidden_dim, states.cols());
  u.topRows(m.latent_dim) = states;
  u.bottomRows(m.hidden_dim) = h.col(0).replicate(1, states.cols());
  return detail::apply_layers(m.transition_head, u);
}

/// Batched training inputs: column b holds item b of the batch.
struct LossBatch {
  Matrix flat_prev;  // tau*M x B, windows at t-1
  Matrix flat_cur;   // tau*M x B, windows at t
  Matrix x_prev;     // M x B, observations at t-1
  Matrix x_cur;      // M x B, observations at t

  Index size() const { return x_cur.cols(); }
};

inline LossBatch make_loss_batch(
    const NeuralModel& m,
    const std::vector<std::pair<WindowView, WindowView>>& pairs) {
  if (pairs.empty()) throw data_error("loss: empty batch");
  const Index b = Index(pairs.size());
  LossBatch batch;
  batch.flat_prev.resize(Index(m.window) * m.num_features, b);
  batch.flat_cur.resize(Index(m.window) * m.num_features, b);
  batch.x_prev.resize(m.num_features, b);
  batch.x_cur.resize(m.num_features, b);
  for (Index i = 0; i < b; ++i) {
    const auto& [prev, cur] = pairs[std::size_t(i)];
    batch.flat_prev.col(i) = flatten_window(prev.past);
    batch.flat_cur.col(i) = flatten_window(cur.past);
    batch.x_prev.col(i) = prev.current;
    batch.x_cur.col(i) = cur.current;
  }
  return batch;
}

/// Reconstruction, prediction and latent-smoothing objective, summed over
/// the batch:
///   a1*|x_prev - dec(enc(w_prev))|^2 + a2*|x_cur - dec(enc(w_cur))|^2
///   + a3*|transition(enc(w_prev), w_cur) - enc(w_prev)|^2
inline double loss(const NeuralModel& m, const LossBatch& batch) {
  if (batch.size() == 0) throw data_error("loss: empty batch");
  const Matrix z_prev = encode_batch(m, batch.flat_prev);
  const Matrix z_cur = encode_batch(m, batch.flat_cur);
  const Matrix recon_prev = decode_batch(m, z_prev);
  const Matrix recon_cur = decode_batch(m, z_cur);

  const Index mfeat = m.num_features;
  Matrix h = detail::lstm_final_hidden(
      m.lstm, m.window, batch.size(),
      [&](int r) { return batch.flat_cur.middleRows(Index(r) * mfeat, mfeat); });
  Matrix u(m.latent_dim + m.hidden_dim, batch.size());
  u.topRows(m.latent_dim) = z_prev;
  u.bottomRows(m.hidden_dim) = h;
  const Matrix z_next = detail::apply_layers(m.transition_head, u);

  return m.alpha1 * (batch.x_prev - recon_prev).squaredNorm() +
         m.alpha2 * (batch.x_cur - recon_cur).squaredNorm() +
         m.alpha3 * (z_next - z_prev).squaredNorm();
}

inline double loss(const NeuralModel& m,
                   const std::vector<std::pair<WindowView, WindowView>>& pairs) {
  return loss(m, make_loss_batch(m, pairs));
}

}  // namespace bssad
