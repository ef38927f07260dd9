#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "bssad/gradient.hpp"
#include "bssad/neural.hpp"

namespace bssad {

/// Process (latent) and measurement covariances estimated from residuals;
/// symmetric PSD by construction.
struct NoiseEstimate {
  Matrix process;      // Q, M' x M'
  Matrix measurement;  // R, M x M
};

struct AdamState {
  NeuralModel m1;  // first moments
  NeuralModel m2;  // second moments
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(const NeuralModel& model, double lr = 1e-3)
      : m1(zeros_like(model)), m2(zeros_like(model)), learning_rate(lr) {}

  void update(NeuralModel& model, const NeuralModel& grads) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, double(step));
    const double c2 = 1.0 - std::pow(beta2, double(step));
    auto params = tensor_views(model);
    auto g = tensor_views(grads);
    auto mom1 = tensor_views(m1);
    auto mom2 = tensor_views(m2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      mom1[k] = beta1 * mom1[k] + (1.0 - beta1) * g[k];
      mom2[k] = beta2 * mom2[k] + (1.0 - beta2) * g[k].square();
      params[k] -= learning_rate * (mom1[k] / c1) /
                   ((mom2[k] / c2).sqrt() + epsilon);
    }
  }
};

struct TrainOptions {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int latent_dim = 8;
  int hidden_dim = 64;
  int window = 12;  // tau
  double alpha1 = 0.45, alpha2 = 0.45, alpha3 = 0.45;
};

struct TrainResult {
  NeuralModel model;
  NoiseEstimate noise;
  std::vector<double> loss_history;  // mean loss per window pair, per epoch
};

/// Latent and observation residuals over a validation set, collected for
/// every t where both the window at t and at t-1 exist:
///   q_t = enc(w_t) - transition(enc(w_{t-1}), w_t)
///   r_t = x_t - dec(enc(w_t))
/// Covariances are mean-subtracted with divisor N-1, then symmetrized and
/// eigenvalue-clamped to PSD.
inline NoiseEstimate estimate_noise(const NeuralModel& m,
                                    const Dataset& val_set) {
  if (val_set.rows() <= m.window) {
    throw data_error("estimate_noise: validation set shorter than window");
  }
  const int tau = m.window;
  const Matrix flat = window_matrix(val_set, tau);  // col t-tau = window at t
  const Matrix z = encode_batch(m, flat);           // latent state per window
  const Matrix recon = decode_batch(m, z);

  const Index count = flat.cols() - 1;
  if (count < 2) throw data_error("estimate_noise: fewer than 2 residuals");

  Matrix meas_residuals(count, m.num_features);
  Matrix proc_residuals(count, m.latent_dim);
  for (Index i = 1; i <= count; ++i) {
    meas_residuals.row(i - 1) =
        val_set.values.row(tau + i) - recon.col(i).transpose();
    const Matrix window = val_set.values.middleRows(i, tau);  // window at tau+i
    proc_residuals.row(i - 1) =
        (z.col(i) - transition(m, z.col(i - 1), window)).transpose();
  }

  NoiseEstimate noise;
  noise.process = clamp_psd(sample_covariance(proc_residuals));
  noise.measurement = clamp_psd(sample_covariance(meas_residuals));
  return noise;
}

/// Mini-batch ADAM over window pairs drawn in seeded shuffled order.
/// Bit-deterministic for a fixed seed.
inline TrainResult train(const Dataset& train_set, const Dataset& val_set,
                         const TrainOptions& opt, std::uint64_t seed) {
  if (train_set.rows() <= opt.window + 1 || val_set.rows() <= opt.window) {
    throw data_error("train: datasets shorter than the window");
  }
  if (train_set.labels) {
    for (int v : *train_set.labels) {
      if (v != 0) throw data_error("train: training data must be normal-only");
    }
  }

  Rng rng(seed);
  TrainResult result;
  result.model = make_model(int(train_set.cols()), opt.latent_dim, opt.window,
                            opt.hidden_dim, opt.alpha1, opt.alpha2, opt.alpha3);
  init_parameters(result.model, rng);

  const int tau = opt.window;
  const Matrix flat = window_matrix(train_set, tau);  // col i = window at tau+i
  const Index pair_count = flat.cols() - 1;  // pair i: windows at tau+i, tau+i+1
  std::vector<Index> order(static_cast<std::size_t>(pair_count), Index(0));
  std::iota(order.begin(), order.end(), Index(0));

  AdamState adam(result.model, opt.learning_rate);
  const Index batch_size = std::max(Index(1), Index(opt.batch_size));
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (Index at = 0; at < pair_count; at += batch_size) {
      const Index size = std::min(batch_size, pair_count - at);
      LossBatch batch;
      batch.flat_prev.resize(flat.rows(), size);
      batch.flat_cur.resize(flat.rows(), size);
      batch.x_prev.resize(train_set.cols(), size);
      batch.x_cur.resize(train_set.cols(), size);
      for (Index b = 0; b < size; ++b) {
        const Index i = order[std::size_t(at + b)];
        batch.flat_prev.col(b) = flat.col(i);
        batch.flat_cur.col(b) = flat.col(i + 1);
        batch.x_prev.col(b) = train_set.values.row(tau + i).transpose();
        batch.x_cur.col(b) = train_set.values.row(tau + i + 1).transpose();
      }
      GradientResult grad = loss_gradient(result.model, batch);
      if (!std::isfinite(grad.loss)) {
        throw numeric_error("train: non-finite loss at epoch " +
                            std::to_string(epoch));
      }
      epoch_loss += grad.loss;
      adam.update(result.model, grad.grads);
    }
    result.loss_history.push_back(epoch_loss / double(pair_count));
  }

  result.noise = estimate_noise(result.model, val_set);
  return result;
}

}  // namespace bssad
