#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "bssad/common.hpp"
#include "bssad/dataset.hpp"
#include "bssad/neural.hpp"
#include "bssad/rng.hpp"
#include "bssad/training.hpp"

namespace bssad {

constexpr double kCovarianceJitter = 1e-9;

/// Abstract state-space contract. `f` and `h_inv` act column-wise on a batch
/// of states; both must be deterministic and safe for concurrent reads.
/// `initial_state` produces z0 from the first window (the neural adapter
/// encodes it; analytic models return a fixed vector).
struct SystemModel {
  std::function<Matrix(const Matrix& states, const Matrix& window)> f;
  std::function<Matrix(const Matrix& states)> h_inv;
  Matrix process_noise;      // Q, PSD
  Matrix measurement_noise;  // R, PSD
  std::function<Vector(const Matrix& first_window)> initial_state;
};

struct GaussianBelief {
  Vector mean;
  Matrix covariance;  // symmetric PSD
};

inline GaussianBelief make_belief(Vector mean, const Matrix& cov) {
  return {std::move(mean), symmetrize(cov)};
}

/// Linear-Gaussian model x = C z, z' = A z; the exact-filter oracle.
inline SystemModel make_linear_system(const Matrix& a, const Matrix& c,
                                      Matrix q, Matrix r, Vector z0) {
  SystemModel m;
  m.f = [a](const Matrix& states, const Matrix&) -> Matrix {
    return a * states;
  };
  m.h_inv = [c](const Matrix& states) -> Matrix { return c * states; };
  m.process_noise = std::move(q);
  m.measurement_noise = std::move(r);
  m.initial_state = [z0 = std::move(z0)](const Matrix&) { return z0; };
  return m;
}

/// Adapter putting a trained model behind the state-space contract.
inline SystemModel make_neural_system(NeuralModel model,
                                      const NoiseEstimate& noise) {
  auto shared = std::make_shared<const NeuralModel>(std::move(model));
  SystemModel m;
  m.f = [shared](const Matrix& states, const Matrix& window) {
    return transition_shared(*shared, states, window);
  };
  m.h_inv = [shared](const Matrix& states) {
    return decode_batch(*shared, states);
  };
  m.process_noise = noise.process;
  m.measurement_noise = noise.measurement;
  m.initial_state = [shared](const Matrix& first_window) {
    return Vector(encode(*shared, first_window));
  };
  return m;
}

/// Textbook linear-Gaussian predict/update. Returns the posterior and the
/// predicted observation distribution (C mu-, C P- C^T + R).
inline std::pair<GaussianBelief, GaussianBelief> kf_step(
    const GaussianBelief& belief, const Matrix& a, const Matrix& c,
    const Matrix& q, const Matrix& r, const Vector& x) {
  const Vector mean_prior = a * belief.mean;
  const Matrix cov_prior = symmetrize(a * belief.covariance * a.transpose() + q);

  const Matrix innovation_cov = symmetrize(c * cov_prior * c.transpose() + r);
  Matrix solve_target = innovation_cov;
  solve_target.diagonal().array() += kCovarianceJitter;
  Eigen::LDLT<Matrix> ldlt(solve_target);
  // K = P- C^T S^-1, computed as (S^-1 C P-)^T.
  const Matrix gain = ldlt.solve(c * cov_prior).transpose();
  if (!gain.allFinite()) {
    throw numeric_error("kf_step: singular innovation covariance");
  }

  GaussianBelief posterior;
  posterior.mean = mean_prior + gain * (x - c * mean_prior);
  posterior.covariance = symmetrize(
      (Matrix::Identity(cov_prior.rows(), cov_prior.cols()) - gain * c) *
      cov_prior);
  return {std::move(posterior), make_belief(c * mean_prior, innovation_cov)};
}

/// Unweighted ensemble representing the hidden-state belief.
struct SigmaEnsemble {
  Matrix members;  // M' x N
  Rng rng;

  Index count() const { return members.cols(); }
};

/// N members drawn i.i.d. from N(z0, alpha I).
inline SigmaEnsemble enkf_init(const Vector& z0, double alpha, Index count,
                               std::uint64_t seed) {
  if (count < 2) throw config_error("enkf_init: need at least 2 members");
  if (alpha <= 0.0) throw config_error("enkf_init: alpha must be positive");
  SigmaEnsemble e{Matrix(), Rng(seed)};
  e.members = std::sqrt(alpha) * e.rng.normal_matrix(z0.size(), count);
  e.members.colwise() += z0;
  return e;
}

struct StepOutput {
  GaussianBelief predicted_obs;
  bool weight_underflow = false;
};

/// Stochastic ensemble Kalman update in hidden space. Members are
/// propagated without process noise, projected to observation space, and
/// nudged by the gain with perturbed observations.
inline StepOutput enkf_step(SigmaEnsemble& ensemble, const SystemModel& model,
                            const Matrix& window, const Vector& x) {
  const Index n = ensemble.count();
  const Matrix propagated = model.f(ensemble.members, window);  // M' x N
  const Matrix projected = model.h_inv(propagated);             // M x N

  const Vector mean_obs = projected.rowwise().mean();
  Matrix centered_obs = projected.colwise() - mean_obs;
  const Matrix cov_obs =
      symmetrize(centered_obs * centered_obs.transpose() / double(n - 1) +
                 model.measurement_noise);
  Matrix centered_state =
      propagated.colwise() - Vector(propagated.rowwise().mean());
  const Matrix cross_cov =
      centered_state * centered_obs.transpose() / double(n - 1);

  Matrix solve_target = cov_obs;
  solve_target.diagonal().array() += kCovarianceJitter;
  Eigen::LDLT<Matrix> ldlt(solve_target);
  const Matrix gain = ldlt.solve(cross_cov.transpose()).transpose();
  if (!gain.allFinite()) {
    throw numeric_error("enkf_step: singular predicted-observation covariance");
  }

  const Matrix perturbations =
      GaussianSampler(Vector::Zero(x.size()), model.measurement_noise)
          .sample_many(ensemble.rng, n);
  Matrix innovations = (perturbations.colwise() + x) - projected;
  ensemble.members = propagated + gain * innovations;

  return {make_belief(mean_obs, cov_obs), false};
}

/// Weighted particles representing the hidden-state belief, plus the knobs
/// controlling degeneracy handling.
struct ParticleSet {
  Matrix particles;  // M' x N
  Vector weights;    // N, non-negative, sums to 1
  Rng rng;
  Vector z0;                 // rejuvenation source mean
  double alpha_small = 1e-2;  // rejuvenation source covariance scale
  double sigma_rbf = 1.0;
  double nt_fraction = 0.1;
  double nrs_percent = 1.0;
  bool rejuvenate_every_step = false;

  Index count() const { return particles.cols(); }
};

/// N_s particles from N(z0, alpha_small I) with uniform weights.
inline ParticleSet pf_init(const Vector& z0, double alpha_small, Index count,
                           std::uint64_t seed) {
  if (count < 2) throw config_error("pf_init: need at least 2 particles");
  if (alpha_small <= 0.0) {
    throw config_error("pf_init: alpha_small must be positive");
  }
  ParticleSet p{Matrix(), Vector(), Rng(seed), z0, alpha_small};
  p.particles = std::sqrt(alpha_small) * p.rng.normal_matrix(z0.size(), count);
  p.particles.colwise() += z0;
  p.weights = Vector::Constant(count, 1.0 / double(count));
  return p;
}

/// exp(-|x - x_pred|^2 / (2 sigma^2)), in (0, 1].
inline double rbf_likelihood(const Vector& x, const Vector& x_pred,
                             double sigma) {
  if (sigma <= 0.0) throw config_error("rbf_likelihood: sigma must be positive");
  return std::exp(-(x - x_pred).squaredNorm() / (2.0 * sigma * sigma));
}

inline void check_normalized(const Vector& weights) {
  if (std::abs(weights.sum() - 1.0) > 1e-6) {
    throw std::invalid_argument("weights are not normalized");
  }
}

/// 1 / sum(w_i^2); equals N for uniform weights and 1 for a point mass.
inline double effective_sample_size(const Vector& weights) {
  check_normalized(weights);
  return 1.0 / weights.squaredNorm();
}

/// Positions (i + u)/N with one shared uniform draw, mapped through the
/// weight CDF. Copy counts satisfy count(i) in {floor(N w_i), ceil(N w_i)}
/// and the returned indices are non-decreasing.
inline std::vector<Index> systematic_resample(const Vector& weights, Rng& rng) {
  check_normalized(weights);
  const Index n = weights.size();
  const double offset = rng.uniform();
  std::vector<Index> indices(static_cast<std::size_t>(n), Index(0));
  Index j = 0;
  double cumulative = weights(0);
  for (Index i = 0; i < n; ++i) {
    const double position = (double(i) + offset) / double(n);
    while (cumulative <= position && j + 1 < n) {
      ++j;
      cumulative += weights(j);
    }
    indices[std::size_t(i)] = j;
  }
  return indices;
}

/// SIR update: propagate with process noise, project with measurement noise,
/// reweight through the RBF kernel, estimate the predicted observation from
/// the weighted projections, then resample/rejuvenate against degeneracy.
inline StepOutput pf_step(ParticleSet& p, const SystemModel& model,
                          const Matrix& window, const Vector& x) {
  const Index n = p.count();
  const Index obs_dim = x.size();

  Matrix propagated = model.f(p.particles, window);
  propagated += GaussianSampler(Vector::Zero(propagated.rows()),
                                model.process_noise)
                    .sample_many(p.rng, n);
  Matrix projected = model.h_inv(propagated);
  projected += GaussianSampler(Vector::Zero(obs_dim), model.measurement_noise)
                   .sample_many(p.rng, n);

  bool underflow = false;
  for (Index i = 0; i < n; ++i) {
    p.weights(i) *= rbf_likelihood(x, projected.col(i), p.sigma_rbf);
  }
  const double total = p.weights.sum();
  if (total <= 0.0 || !std::isfinite(total)) {
    p.weights.setConstant(1.0 / double(n));
    underflow = true;
  } else {
    p.weights /= total;
  }

  const Vector mean_obs = projected * p.weights;
  Matrix centered = projected.colwise() - mean_obs;
  Matrix cov_obs =
      centered * p.weights.asDiagonal() * centered.transpose() /
      p.weights.sum();
  cov_obs.diagonal().array() += kCovarianceJitter;

  p.particles = std::move(propagated);
  bool resampled = false;
  if (effective_sample_size(p.weights) < p.nt_fraction * double(n)) {
    const std::vector<Index> indices = systematic_resample(p.weights, p.rng);
    Matrix resampled_particles(p.particles.rows(), n);
    for (Index i = 0; i < n; ++i) {
      resampled_particles.col(i) = p.particles.col(indices[std::size_t(i)]);
    }
    p.particles = std::move(resampled_particles);
    p.weights.setConstant(1.0 / double(n));
    resampled = true;
  }

  if (resampled || p.rejuvenate_every_step) {
    const auto replace =
        Index(std::ceil(p.nrs_percent / 100.0 * double(n)));
    if (replace > 0) {
      // Lowest-weight particles go first, ties broken by index.
      std::vector<Index> order(static_cast<std::size_t>(n), Index(0));
      std::iota(order.begin(), order.end(), Index(0));
      std::sort(order.begin(), order.end(), [&](Index lhs, Index rhs) {
        if (p.weights(lhs) != p.weights(rhs)) {
          return p.weights(lhs) < p.weights(rhs);
        }
        return lhs < rhs;
      });
      const Matrix fresh =
          GaussianSampler(p.z0, p.alpha_small *
                                    Matrix::Identity(p.z0.size(), p.z0.size()))
              .sample_many(p.rng, replace);
      for (Index k = 0; k < replace; ++k) {
        p.particles.col(order[std::size_t(k)]) = fresh.col(k);
      }
    }
  }

  return {make_belief(mean_obs, cov_obs), underflow};
}

enum class FilterKind { Enkf, Pf };
enum class ScoreSource { Predicted, Updated };

struct FilterParams {
  FilterKind kind = FilterKind::Enkf;
  int tau = 12;
  Index n_sigma = 20;
  Index n_particles = 1000;
  double alpha_init = 100.0;
  double alpha_small = 1e-2;
  double sigma_rbf = 1.0;
  double nt_fraction = 0.1;
  double nrs_percent = 1.0;
  bool rejuvenate_every_step = false;
  ScoreSource score_source = ScoreSource::Predicted;
};

/// Predicted observation distribution per timestep, t = tau .. T-1.
struct BeliefSequence {
  int offset = 0;  // tau; index of the first belief
  std::vector<GaussianBelief> beliefs;
  std::vector<Index> underflow_steps;
};

namespace detail {

/// Observation-space statistics of the post-update ensemble.
inline GaussianBelief updated_belief(const SigmaEnsemble& ensemble,
                                     const SystemModel& model) {
  const Matrix projected = model.h_inv(ensemble.members);
  const Vector mean = projected.rowwise().mean();
  Matrix centered = projected.colwise() - mean;
  return make_belief(mean,
                     centered * centered.transpose() /
                             double(ensemble.count() - 1) +
                         model.measurement_noise);
}

}  // namespace detail

/// Run the selected filter over every window of the dataset in time order.
inline BeliefSequence run_filter(const SystemModel& model,
                                 const Dataset& data,
                                 const FilterParams& params,
                                 std::uint64_t seed) {
  const auto windows = make_windows(data, params.tau);
  const Vector z0 = model.initial_state(windows.front().past);

  BeliefSequence out;
  out.offset = params.tau;
  out.beliefs.reserve(windows.size());

  if (params.kind == FilterKind::Enkf) {
    SigmaEnsemble ensemble =
        enkf_init(z0, params.alpha_init, params.n_sigma, seed);
    for (const auto& view : windows) {
      try {
        StepOutput step = enkf_step(ensemble, model, view.past, view.current);
        out.beliefs.push_back(params.score_source == ScoreSource::Updated
                                  ? detail::updated_belief(ensemble, model)
                                  : std::move(step.predicted_obs));
      } catch (const numeric_error& e) {
        throw numeric_error(std::string(e.what()) + " at timestep " +
                            std::to_string(view.index));
      }
    }
    return out;
  }

  ParticleSet particles =
      pf_init(z0, params.alpha_small, params.n_particles, seed);
  particles.sigma_rbf = params.sigma_rbf;
  particles.nt_fraction = params.nt_fraction;
  particles.nrs_percent = params.nrs_percent;
  particles.rejuvenate_every_step = params.rejuvenate_every_step;
  for (const auto& view : windows) {
    try {
      StepOutput step = pf_step(particles, model, view.past, view.current);
      if (step.weight_underflow) out.underflow_steps.push_back(view.index);
      out.beliefs.push_back(std::move(step.predicted_obs));
    } catch (const numeric_error& e) {
      throw numeric_error(std::string(e.what()) + " at timestep " +
                          std::to_string(view.index));
    }
  }
  return out;
}

}  // namespace bssad
