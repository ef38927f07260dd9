#include <catch2/catch_amalgamated.hpp>

#include "bssad/synth.hpp"
#include "bssad/training.hpp"

using namespace bssad;

namespace {

std::pair<Dataset, Dataset> small_synth_split() {
  SynthConfig cfg;
  cfg.length = 220;
  cfg.num_sensors = 3;
  cfg.latent_dim = 2;
  cfg.seed = 12;
  const Dataset d = synth_generate(cfg);
  return split(d, {0.25, 4});
}

TrainOptions small_options(int epochs) {
  TrainOptions opt;
  opt.epochs = epochs;
  opt.batch_size = 32;
  opt.latent_dim = 2;
  opt.hidden_dim = 8;
  opt.window = 4;
  return opt;
}

bool models_identical(const NeuralModel& a, const NeuralModel& b) {
  auto va = tensor_views(a);
  auto vb = tensor_views(b);
  for (std::size_t k = 0; k < va.size(); ++k) {
    if ((va[k] != vb[k]).any()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("training reduces the loss on synthetic data", "[training]") {
  const auto [train_set, val_set] = small_synth_split();
  const TrainResult result = train(train_set, val_set, small_options(5), 7);
  REQUIRE(result.loss_history.size() == 5);
  for (double v : result.loss_history) CHECK(std::isfinite(v));
  CHECK(result.loss_history.back() <= result.loss_history.front());
}

TEST_CASE("training twice with one seed gives identical parameters",
          "[training]") {
  const auto [train_set, val_set] = small_synth_split();
  const TrainResult a = train(train_set, val_set, small_options(2), 99);
  const TrainResult b = train(train_set, val_set, small_options(2), 99);
  CHECK(models_identical(a.model, b.model));
  CHECK(a.loss_history == b.loss_history);
  CHECK(a.noise.process == b.noise.process);
  CHECK(a.noise.measurement == b.noise.measurement);

  const TrainResult c = train(train_set, val_set, small_options(2), 100);
  CHECK_FALSE(models_identical(a.model, c.model));
}

TEST_CASE("zero epochs returns the initialized model untouched",
          "[training]") {
  const auto [train_set, val_set] = small_synth_split();
  const TrainResult result = train(train_set, val_set, small_options(0), 7);
  CHECK(result.loss_history.empty());

  // Must equal a fresh seeded initialization.
  Rng rng(7);
  NeuralModel fresh = make_model(int(train_set.cols()), 2, 4, 8);
  init_parameters(fresh, rng);
  CHECK(models_identical(result.model, fresh));
}

TEST_CASE("training rejects anomalous or too-short inputs", "[training]") {
  const auto [train_set, val_set] = small_synth_split();
  SECTION("anomalous labels") {
    Dataset bad = train_set;
    (*bad.labels)[3] = 1;
    CHECK_THROWS_AS(train(bad, val_set, small_options(1), 7), data_error);
  }
  SECTION("short training set") {
    const Dataset tiny = make_dataset(Matrix::Zero(4, 3));
    CHECK_THROWS_AS(train(tiny, val_set, small_options(1), 7), data_error);
  }
}
