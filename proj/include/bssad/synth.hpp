#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "bssad/dataset.hpp"
#include "bssad/rng.hpp"

namespace bssad {

enum class AnomalyKind { Spike, MeanShift };

struct AnomalySegment {
  Index start = 0;
  Index length = 0;
  AnomalyKind kind = AnomalyKind::Spike;
};

struct SynthConfig {
  int latent_dim = 3;
  int num_sensors = 8;
  Index length = 10000;
  std::vector<AnomalySegment> anomaly_segments;
  double noise_scale = 0.1;
  std::uint64_t seed = 1;
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.latent_dim < 1 || cfg.num_sensors < 1 || cfg.length < 1) {
    throw config_error("synth: dimensions and length must be positive");
  }
  if (cfg.noise_scale <= 0.0) {
    throw config_error("synth: noise_scale must be positive");
  }
  std::vector<AnomalySegment> segs = cfg.anomaly_segments;
  std::sort(segs.begin(), segs.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  Index prev_end = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segs[i];
    if (s.start < 0 || s.length < 1 || s.start + s.length > cfg.length) {
      throw config_error("synth: segment " + std::to_string(s.start) + "+" +
                         std::to_string(s.length) + " outside [0," +
                         std::to_string(cfg.length) + ")");
    }
    if (i > 0 && s.start < prev_end) {
      throw config_error("synth: segment at " + std::to_string(s.start) +
                         " overlaps the previous one");
    }
    prev_end = s.start + s.length;
  }
}

/// Stable linear latent dynamics observed through a fixed random map, with
/// labeled anomalies injected additively. Fully determined by the seed.
inline Dataset synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const Index k = cfg.latent_dim;
  const Index m = cfg.num_sensors;
  const double ns = cfg.noise_scale;

  // Transition scaled to spectral radius 0.95.
  Matrix a = rng.normal_matrix(k, k);
  const double radius = a.eigenvalues().cwiseAbs().maxCoeff();
  a *= 0.95 / radius;

  // Observation map with unit-norm rows so sensors share the latent scale.
  Matrix c = rng.normal_matrix(m, k);
  for (Index i = 0; i < m; ++i) c.row(i).normalize();

  // Burn in to reach the stationary regime before recording.
  constexpr Index kBurnIn = 200;
  Vector z = Vector::Zero(k);
  for (Index t = 0; t < kBurnIn; ++t) {
    z = a * z + ns * rng.normal_vector(k);
  }

  Matrix values(cfg.length, m);
  for (Index t = 0; t < cfg.length; ++t) {
    z = a * z + ns * rng.normal_vector(k);
    values.row(t) = (c * z + (ns / 2.0) * rng.normal_vector(m)).transpose();
  }

  std::vector<int> labels(std::size_t(cfg.length), 0);
  for (const auto& seg : cfg.anomaly_segments) {
    for (Index t = seg.start; t < seg.start + seg.length; ++t) {
      labels[std::size_t(t)] = 1;
      if (seg.kind == AnomalyKind::Spike) {
        values(t, Index(rng.bounded(std::uint64_t(m)))) += 8.0 * ns;
      } else {
        values.row(t).array() += 4.0 * ns;
      }
    }
  }

  std::vector<std::string> names;
  for (Index j = 0; j < m; ++j) names.push_back("s" + std::to_string(j));
  return make_dataset(std::move(values), std::move(labels), std::move(names));
}

}  // namespace bssad
