#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "bssad/synth.hpp"

using namespace bssad;

TEST_CASE("synth_generate without segments is all normal", "[synth]") {
  SynthConfig cfg;
  cfg.length = 500;
  cfg.seed = 3;
  const Dataset d = synth_generate(cfg);
  REQUIRE(d.rows() == 500);
  REQUIRE(d.cols() == 8);
  REQUIRE(d.labels.has_value());
  CHECK(std::count(d.labels->begin(), d.labels->end(), 1) == 0);
}

TEST_CASE("synth_generate is deterministic per seed", "[synth]") {
  SynthConfig cfg;
  cfg.length = 300;
  cfg.seed = 42;
  cfg.anomaly_segments = {{50, 10, AnomalyKind::Spike}};
  const Dataset a = synth_generate(cfg);
  const Dataset b = synth_generate(cfg);
  CHECK(a.values == b.values);
  CHECK(*a.labels == *b.labels);

  cfg.seed = 43;
  const Dataset c = synth_generate(cfg);
  CHECK(a.values != c.values);
}

TEST_CASE("labels mark exactly the configured segments", "[synth]") {
  SynthConfig cfg;
  cfg.length = 400;
  cfg.seed = 5;
  cfg.anomaly_segments = {{100, 20, AnomalyKind::MeanShift},
                          {300, 5, AnomalyKind::Spike}};
  const Dataset d = synth_generate(cfg);
  for (Index t = 0; t < d.rows(); ++t) {
    const bool inside = (t >= 100 && t < 120) || (t >= 300 && t < 305);
    CHECK((*d.labels)[std::size_t(t)] == (inside ? 1 : 0));
  }
}

TEST_CASE("mean_shift raises the segment mean", "[synth]") {
  SynthConfig cfg;
  cfg.length = 400;
  cfg.seed = 9;
  cfg.anomaly_segments = {{100, 20, AnomalyKind::MeanShift}};
  const Dataset d = synth_generate(cfg);
  const double before = d.values.col(0).head(100).mean();
  const double inside = d.values.col(0).segment(100, 20).mean();
  CHECK(inside - before >= 2.0 * cfg.noise_scale);
}

TEST_CASE("segment validation", "[synth]") {
  SynthConfig cfg;
  cfg.length = 100;
  SECTION("out of range") {
    cfg.anomaly_segments = {{90, 20, AnomalyKind::Spike}};
    CHECK_THROWS_AS(synth_generate(cfg), config_error);
  }
  SECTION("negative start") {
    cfg.anomaly_segments = {{-1, 5, AnomalyKind::Spike}};
    CHECK_THROWS_AS(synth_generate(cfg), config_error);
  }
  SECTION("overlap") {
    cfg.anomaly_segments = {{10, 20, AnomalyKind::Spike},
                            {25, 5, AnomalyKind::MeanShift}};
    CHECK_THROWS_AS(synth_generate(cfg), config_error);
  }
}
