#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "bssad/common.hpp"
#include "bssad/dataset.hpp"
#include "bssad/filters.hpp"

namespace bssad {

/// sqrt((x-mu)^T (P + jitter I)^-1 (x-mu)).
inline double mahalanobis(const Vector& x, const GaussianBelief& belief) {
  if (x.size() != belief.mean.size() ||
      belief.covariance.rows() != x.size() ||
      belief.covariance.cols() != x.size()) {
    throw std::invalid_argument("mahalanobis: dimension mismatch");
  }
  Matrix cov = belief.covariance;
  cov.diagonal().array() += kCovarianceJitter;
  const Vector diff = x - belief.mean;
  const double squared = diff.dot(Eigen::LDLT<Matrix>(cov).solve(diff));
  return std::sqrt(std::max(0.0, squared));
}

/// Per-timestep anomaly scores for t = offset .. T-1.
struct ScoreSeries {
  Vector scores;
  int offset = 0;  // tau
};

inline ScoreSeries score_series(const Dataset& data,
                                const std::vector<GaussianBelief>& beliefs,
                                int tau) {
  if (Index(beliefs.size()) != data.rows() - tau) {
    throw data_error("score_series: expected " +
                     std::to_string(data.rows() - tau) + " beliefs, got " +
                     std::to_string(beliefs.size()));
  }
  ScoreSeries out;
  out.offset = tau;
  out.scores.resize(Index(beliefs.size()));
  for (Index i = 0; i < out.scores.size(); ++i) {
    out.scores(i) = mahalanobis(data.values.row(tau + i).transpose(),
                                beliefs[std::size_t(i)]);
  }
  return out;
}

/// Credit whole labeled segments: within each maximal run of 1-labels, a
/// single positive prediction marks the entire run positive. Predictions
/// outside labeled runs are untouched.
inline std::vector<int> point_adjust(const std::vector<int>& predictions,
                                     const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("point_adjust: length mismatch");
  }
  std::vector<int> adjusted = predictions;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] != 1) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < labels.size() && labels[end] == 1) ++end;
    const bool hit = std::any_of(predictions.begin() + long(i),
                                 predictions.begin() + long(end),
                                 [](int p) { return p == 1; });
    if (hit) std::fill(adjusted.begin() + long(i), adjusted.begin() + long(end), 1);
    i = end;
  }
  return adjusted;
}

struct ConfusionMatrix {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline ConfusionMatrix confusion(const std::vector<int>& predictions,
                                 const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("confusion: length mismatch");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == 1) {
      (labels[i] == 1 ? cm.tp : cm.fp)++;
    } else {
      (labels[i] == 1 ? cm.fn : cm.tn)++;
    }
  }
  return cm;
}

/// 2tp / (2tp + fp + fn), 0 when the denominator vanishes.
inline double f1(const ConfusionMatrix& cm) {
  const double denom = double(2 * cm.tp + cm.fp + cm.fn);
  return denom == 0.0 ? 0.0 : double(2 * cm.tp) / denom;
}

/// Matthews correlation coefficient in [-1, 1]; 0 when any marginal is empty.
inline double mcc(const ConfusionMatrix& cm) {
  const double pp = double(cm.tp + cm.fp);
  const double ap = double(cm.tp + cm.fn);
  const double pn = double(cm.tn + cm.fp);
  const double an = double(cm.tn + cm.fn);
  if (pp == 0.0 || ap == 0.0 || pn == 0.0 || an == 0.0) return 0.0;
  const double numer = double(cm.tp) * double(cm.tn) -
                       double(cm.fp) * double(cm.fn);
  return numer / (std::sqrt(pp) * std::sqrt(ap) * std::sqrt(pn) * std::sqrt(an));
}

enum class Metric { F1, Mcc };

inline double metric_value(Metric metric, const ConfusionMatrix& cm) {
  return metric == Metric::F1 ? f1(cm) : mcc(cm);
}

struct ThresholdRow {
  double threshold = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

struct ThresholdSearchResult {
  double best_threshold = std::numeric_limits<double>::infinity();
  double best_f1 = 0.0;   // F1 at the chosen threshold
  double best_mcc = 0.0;  // MCC at the chosen threshold
  Metric metric_optimized = Metric::F1;
  ConfusionMatrix best_confusion;
  std::vector<ThresholdRow> table;
};

/// Exhaustive point-adjusted search over every distinct score (plus +inf for
/// the all-negative prediction). A point is flagged when score >= threshold;
/// ties on the optimized metric resolve toward the larger threshold.
inline ThresholdSearchResult best_threshold_search(
    const ScoreSeries& scores, const std::vector<int>& labels, Metric metric) {
  const auto n = std::size_t(scores.scores.size());
  if (n == 0) throw data_error("best_threshold_search: empty score series");
  if (labels.size() != n) {
    throw data_error("best_threshold_search: labels length " +
                     std::to_string(labels.size()) + " does not cover " +
                     std::to_string(n) + " scores");
  }

  std::set<double> distinct(scores.scores.data(), scores.scores.data() + n);
  std::vector<double> candidates(distinct.begin(), distinct.end());
  candidates.push_back(std::numeric_limits<double>::infinity());

  ThresholdSearchResult result;
  result.metric_optimized = metric;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> predictions(n);
  for (double threshold : candidates) {
    for (std::size_t i = 0; i < n; ++i) {
      predictions[i] = scores.scores(Index(i)) >= threshold ? 1 : 0;
    }
    const ConfusionMatrix cm = confusion(point_adjust(predictions, labels), labels);
    const ThresholdRow row{threshold, f1(cm), mcc(cm)};
    result.table.push_back(row);
    const double value = metric == Metric::F1 ? row.f1 : row.mcc;
    if (value >= best) {
      best = value;
      result.best_threshold = threshold;
      result.best_f1 = row.f1;
      result.best_mcc = row.mcc;
      result.best_confusion = cm;
    }
  }
  return result;
}

/// Score CSV: columns t, score and, when labels are known, label.
inline void write_scores(const ScoreSeries& scores,
                         const std::vector<int>* labels,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write scores file: " + path);
  out << "t,score" << (labels ? ",label" : "") << "\n";
  for (Index i = 0; i < scores.scores.size(); ++i) {
    out << scores.offset + i << "," << format_double(scores.scores(i));
    if (labels) out << "," << (*labels)[std::size_t(i)];
    out << "\n";
  }
  if (!out) throw data_error("failed writing scores file: " + path);
}

struct ScoresFile {
  ScoreSeries scores;
  std::vector<int> labels;  // empty when the file has no label column
};

inline ScoresFile read_scores(const std::string& path) {
  Dataset d = load_csv(path);
  const auto& names = d.feature_names;
  const bool labeled = names.size() == 3 && names[2] == "label";
  if (!(names.size() == 2 || labeled) || names[0] != "t" ||
      names[1] != "score") {
    throw data_error(path + ": expected columns t,score[,label]");
  }
  ScoresFile out;
  out.scores.scores = d.values.col(1);
  out.scores.offset = d.rows() > 0 ? int(d.values(0, 0)) : 0;
  if (labeled) {
    out.labels.resize(std::size_t(d.rows()));
    for (Index i = 0; i < d.rows(); ++i) {
      const double v = d.values(i, 2);
      if (v != 0.0 && v != 1.0) {
        throw data_error(path + ": label at row " + std::to_string(i + 1) +
                         " is not 0 or 1");
      }
      out.labels[std::size_t(i)] = int(v);
    }
  }
  return out;
}

}  // namespace bssad
