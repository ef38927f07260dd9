#pragma once

#include <utility>
#include <vector>

#include "bssad/neural.hpp"

namespace bssad {
namespace detail {

struct StackCache {
  std::vector<Matrix> acts;  // acts[0] = input, acts[l+1] = layer l output
};

inline Matrix forward_stack(const std::vector<LayerParams>& layers, Matrix x,
                            StackCache& cache) {
  cache.acts.clear();
  cache.acts.push_back(x);
  for (const auto& l : layers) {
    Matrix pre = l.weights * cache.acts.back();
    pre.colwise() += l.biases;
    cache.acts.push_back(apply_activation(std::move(pre), l.activation));
  }
  return cache.acts.back();
}

/// Accumulates layer gradients and returns the gradient wrt the stack input.
inline Matrix backward_stack(const std::vector<LayerParams>& layers,
                             std::vector<LayerParams>& grads,
                             const StackCache& cache, Matrix d_out) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Matrix& out = cache.acts[l + 1];
    Matrix d_pre =
        layers[l].activation == Activation::Tanh
            ? Matrix((d_out.array() * (1.0 - out.array().square())).matrix())
            : std::move(d_out);
    grads[l].weights.noalias() += d_pre * cache.acts[l].transpose();
    grads[l].biases += d_pre.rowwise().sum();
    d_out.noalias() = layers[l].weights.transpose() * d_pre;
  }
  return d_out;
}

struct LstmCache {
  std::vector<Matrix> u, gi, gf, go, gc, c, tc;
};

template <typename StepInput>
inline Matrix lstm_forward_cached(const LstmCellParams& cell, int steps,
                                  Index batch, StepInput&& step_input,
                                  LstmCache& cache) {
  const Index hidden = cell.hidden_dim();
  Matrix h = Matrix::Zero(hidden, batch);
  Matrix c = Matrix::Zero(hidden, batch);
  for (int r = 0; r < steps; ++r) {
    Matrix u(cell.w_input.cols(), batch);
    u.topRows(cell.input_dim()) = step_input(r);
    u.bottomRows(hidden) = h;
    Matrix gi = sigmoid((cell.w_input * u).colwise() + cell.b_input);
    Matrix gf = sigmoid((cell.w_forget * u).colwise() + cell.b_forget);
    Matrix go = sigmoid((cell.w_output * u).colwise() + cell.b_output);
    Matrix gc = ((cell.w_candidate * u).colwise() + cell.b_candidate)
                    .array()
                    .tanh();
    c = (gf.array() * c.array() + gi.array() * gc.array()).matrix();
    Matrix tc = c.array().tanh();
    h = (go.array() * tc.array()).matrix();
    cache.u.push_back(std::move(u));
    cache.gi.push_back(std::move(gi));
    cache.gf.push_back(std::move(gf));
    cache.go.push_back(std::move(go));
    cache.gc.push_back(std::move(gc));
    cache.c.push_back(c);
    cache.tc.push_back(std::move(tc));
  }
  return h;
}

/// Backpropagation through time given the gradient wrt the final hidden
/// state. Window rows are data, so their gradients are dropped.
inline void lstm_backward(const LstmCellParams& cell, LstmCellParams& grads,
                          const LstmCache& cache, Matrix d_h) {
  const Index hidden = cell.hidden_dim();
  const int steps = int(cache.u.size());
  Matrix d_c = Matrix::Zero(hidden, d_h.cols());
  for (int r = steps - 1; r >= 0; --r) {
    const Matrix& gi = cache.gi[std::size_t(r)];
    const Matrix& gf = cache.gf[std::size_t(r)];
    const Matrix& go = cache.go[std::size_t(r)];
    const Matrix& gc = cache.gc[std::size_t(r)];
    const Matrix& tc = cache.tc[std::size_t(r)];
    const Matrix c_prev = r > 0 ? cache.c[std::size_t(r) - 1]
                                : Matrix::Zero(hidden, d_h.cols());

    Matrix da_o =
        (d_h.array() * tc.array() * go.array() * (1.0 - go.array())).matrix();
    d_c += (d_h.array() * go.array() * (1.0 - tc.array().square())).matrix();
    Matrix da_i =
        (d_c.array() * gc.array() * gi.array() * (1.0 - gi.array())).matrix();
    Matrix da_g =
        (d_c.array() * gi.array() * (1.0 - gc.array().square())).matrix();
    Matrix da_f =
        (d_c.array() * c_prev.array() * gf.array() * (1.0 - gf.array()))
            .matrix();

    const Matrix& u = cache.u[std::size_t(r)];
    grads.w_input.noalias() += da_i * u.transpose();
    grads.w_forget.noalias() += da_f * u.transpose();
    grads.w_output.noalias() += da_o * u.transpose();
    grads.w_candidate.noalias() += da_g * u.transpose();
    grads.b_input += da_i.rowwise().sum();
    grads.b_forget += da_f.rowwise().sum();
    grads.b_output += da_o.rowwise().sum();
    grads.b_candidate += da_g.rowwise().sum();

    Matrix d_u = cell.w_input.transpose() * da_i;
    d_u.noalias() += cell.w_forget.transpose() * da_f;
    d_u.noalias() += cell.w_output.transpose() * da_o;
    d_u.noalias() += cell.w_candidate.transpose() * da_g;
    d_h = d_u.bottomRows(hidden);
    d_c = (d_c.array() * gf.array()).matrix();
  }
}

}  // namespace detail

struct GradientResult {
  double loss = 0.0;
  NeuralModel grads;  // tensors hold gradient values
};

/// Loss and its analytic gradient wrt every parameter, summed over the batch.
inline GradientResult loss_gradient(const NeuralModel& m,
                                    const LossBatch& batch) {
  if (batch.size() == 0) throw data_error("gradient: empty batch");
  GradientResult result;
  result.grads = zeros_like(m);

  detail::StackCache enc_prev, enc_cur, dec_prev, dec_cur, head;
  detail::LstmCache lstm;

  const Matrix z_prev = detail::forward_stack(m.encoder, batch.flat_prev, enc_prev);
  const Matrix z_cur = detail::forward_stack(m.encoder, batch.flat_cur, enc_cur);
  const Matrix recon_prev = detail::forward_stack(m.decoder, z_prev, dec_prev);
  const Matrix recon_cur = detail::forward_stack(m.decoder, z_cur, dec_cur);

  const Index mfeat = m.num_features;
  Matrix h = detail::lstm_forward_cached(
      m.lstm, m.window, batch.size(),
      [&](int r) { return batch.flat_cur.middleRows(Index(r) * mfeat, mfeat); },
      lstm);
  Matrix u(m.latent_dim + m.hidden_dim, batch.size());
  u.topRows(m.latent_dim) = z_prev;
  u.bottomRows(m.hidden_dim) = h;
  const Matrix z_next = detail::forward_stack(m.transition_head, u, head);

  const Matrix r_prev = recon_prev - batch.x_prev;
  const Matrix r_cur = recon_cur - batch.x_cur;
  const Matrix r_smooth = z_next - z_prev;
  result.loss = m.alpha1 * r_prev.squaredNorm() +
                m.alpha2 * r_cur.squaredNorm() +
                m.alpha3 * r_smooth.squaredNorm();

  Matrix d_z_prev = detail::backward_stack(m.decoder, result.grads.decoder,
                                           dec_prev, 2.0 * m.alpha1 * r_prev);
  Matrix d_z_cur = detail::backward_stack(m.decoder, result.grads.decoder,
                                          dec_cur, 2.0 * m.alpha2 * r_cur);

  Matrix d_u = detail::backward_stack(m.transition_head,
                                      result.grads.transition_head, head,
                                      2.0 * m.alpha3 * r_smooth);
  d_z_prev += d_u.topRows(m.latent_dim);
  d_z_prev -= 2.0 * m.alpha3 * r_smooth;
  detail::lstm_backward(m.lstm, result.grads.lstm, lstm,
                        d_u.bottomRows(m.hidden_dim));

  detail::backward_stack(m.encoder, result.grads.encoder, enc_prev,
                         std::move(d_z_prev));
  detail::backward_stack(m.encoder, result.grads.encoder, enc_cur,
                         std::move(d_z_cur));
  return result;
}

/// Gradient record mirroring the model's parameter shapes.
inline NeuralModel gradient(
    const NeuralModel& m,
    const std::vector<std::pair<WindowView, WindowView>>& pairs) {
  return loss_gradient(m, make_loss_batch(m, pairs)).grads;
}

}  // namespace bssad
