#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "bssad/gradient.hpp"
#include "bssad/rng.hpp"

using namespace bssad;

namespace {

LossBatch random_batch(const NeuralModel& m, Rng& rng, Index size) {
  LossBatch batch;
  const Index flat = Index(m.window) * m.num_features;
  batch.flat_prev = rng.normal_matrix(flat, size);
  batch.flat_cur = rng.normal_matrix(flat, size);
  batch.x_prev = rng.normal_matrix(m.num_features, size);
  batch.x_cur = rng.normal_matrix(m.num_features, size);
  return batch;
}

/// Central finite differences over every parameter coordinate.
NeuralModel finite_difference_gradient(const NeuralModel& m,
                                       const LossBatch& batch, double step) {
  NeuralModel fd = zeros_like(m);
  NeuralModel probe = m;
  auto probe_views = tensor_views(probe);
  auto fd_views = tensor_views(fd);
  for (std::size_t k = 0; k < probe_views.size(); ++k) {
    for (Index i = 0; i < probe_views[k].size(); ++i) {
      const double original = probe_views[k](i);
      probe_views[k](i) = original + step;
      const double up = loss(probe, batch);
      probe_views[k](i) = original - step;
      const double down = loss(probe, batch);
      probe_views[k](i) = original;
      fd_views[k](i) = (up - down) / (2.0 * step);
    }
  }
  return fd;
}

/// Worst relative disagreement over coordinates with non-negligible gradient.
double max_relative_error(const NeuralModel& analytic, const NeuralModel& fd) {
  auto a = tensor_views(analytic);
  auto b = tensor_views(fd);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (Index i = 0; i < a[k].size(); ++i) {
      const double scale = std::max(std::abs(a[k](i)), std::abs(b[k](i)));
      if (scale <= 1e-8) continue;
      worst = std::max(worst, std::abs(a[k](i) - b[k](i)) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences",
          "[gradient]") {
  Rng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    const int m_feat = 1 + int(rng.bounded(4));   // M <= 4
    const int latent = 1 + int(rng.bounded(3));   // M' <= 3
    const int tau = 1 + int(rng.bounded(3));      // tau <= 3
    const int hidden = std::max(latent, 2 + int(rng.bounded(2)));
    NeuralModel model =
        make_model(m_feat, std::min(latent, tau * m_feat), tau, hidden);
    init_parameters(model, rng);
    const LossBatch batch = random_batch(model, rng, 3);

    const GradientResult analytic = loss_gradient(model, batch);
    CHECK(analytic.loss == Catch::Approx(loss(model, batch)));
    const NeuralModel fd = finite_difference_gradient(model, batch, 1e-5);
    CHECK(max_relative_error(analytic.grads, fd) < 1e-4);
  }
}

TEST_CASE("a zero-loss configuration has zero gradient", "[gradient]") {
  NeuralModel m = make_model(1, 1, 1, 1);
  m.encoder = {{Matrix::Identity(1, 1), Vector::Zero(1), Activation::Linear}};
  m.decoder = {{Matrix::Identity(1, 1), Vector::Zero(1), Activation::Linear}};
  Matrix pick_state(1, 2);
  pick_state << 1.0, 0.0;
  m.transition_head = {{pick_state, Vector::Zero(1), Activation::Linear}};

  LossBatch batch;
  batch.flat_prev = Matrix::Constant(1, 1, 0.3);
  batch.flat_cur = Matrix::Constant(1, 1, 0.3);
  batch.x_prev = Matrix::Constant(1, 1, 0.3);
  batch.x_cur = Matrix::Constant(1, 1, 0.3);

  const GradientResult result = loss_gradient(m, batch);
  REQUIRE(result.loss == 0.0);
  for (const auto& view : tensor_views(result.grads)) {
    CHECK(view.abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gradient record mirrors the parameter shapes", "[gradient]") {
  Rng rng(55);
  NeuralModel m = make_model(3, 2, 2, 4);
  init_parameters(m, rng);
  const LossBatch batch = random_batch(m, rng, 2);
  const GradientResult result = loss_gradient(m, batch);

  REQUIRE(result.grads.encoder.size() == m.encoder.size());
  REQUIRE(result.grads.decoder.size() == m.decoder.size());
  REQUIRE(result.grads.transition_head.size() == m.transition_head.size());
  auto params = tensor_views(m);
  auto grads = tensor_views(result.grads);
  REQUIRE(params.size() == grads.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    CHECK(params[k].size() == grads[k].size());
  }
}

TEST_CASE("gradient of a sum over items is the sum of item gradients",
          "[gradient]") {
  Rng rng(77);
  NeuralModel m = make_model(2, 2, 2, 3);
  init_parameters(m, rng);
  const LossBatch both = random_batch(m, rng, 2);
  LossBatch first = both, second = both;
  first.flat_prev = both.flat_prev.col(0);
  first.flat_cur = both.flat_cur.col(0);
  first.x_prev = both.x_prev.col(0);
  first.x_cur = both.x_cur.col(0);
  second.flat_prev = both.flat_prev.col(1);
  second.flat_cur = both.flat_cur.col(1);
  second.x_prev = both.x_prev.col(1);
  second.x_cur = both.x_cur.col(1);

  const auto combined = loss_gradient(m, both);
  const auto a = loss_gradient(m, first);
  const auto b = loss_gradient(m, second);
  CHECK(combined.loss == Catch::Approx(a.loss + b.loss));
  auto sum = tensor_views(combined.grads);
  auto ga = tensor_views(a.grads);
  auto gb = tensor_views(b.grads);
  for (std::size_t k = 0; k < sum.size(); ++k) {
    CHECK((sum[k] - ga[k] - gb[k]).abs().maxCoeff() < 1e-10);
  }
}
