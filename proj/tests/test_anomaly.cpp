#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "bssad/anomaly.hpp"
#include "bssad/rng.hpp"

using namespace bssad;

namespace {

// Independent scoring path used as the oracle: counts segment hits
// explicitly instead of rewriting the prediction vector.
ConfusionMatrix oracle_adjusted_confusion(const std::vector<int>& pred,
                                          const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  ConfusionMatrix cm;
  std::size_t i = 0;
  while (i < n) {
    if (labels[i] == 0) {
      (pred[i] == 1 ? cm.fp : cm.tn)++;
      ++i;
      continue;
    }
    std::size_t end = i;
    bool any = false;
    while (end < n && labels[end] == 1) {
      any = any || pred[end] == 1;
      ++end;
    }
    const auto span = std::int64_t(end - i);
    if (any) {
      cm.tp += span;
    } else {
      cm.fn += span;
    }
    i = end;
  }
  return cm;
}

double oracle_f1(const ConfusionMatrix& cm) {
  const double p_denom = double(cm.tp + cm.fp);
  const double r_denom = double(cm.tp + cm.fn);
  if (p_denom == 0.0 || r_denom == 0.0 || cm.tp == 0) {
    return cm.tp + cm.fp + cm.fn == 0 ? 0.0 : 0.0;
  }
  const double precision = double(cm.tp) / p_denom;
  const double recall = double(cm.tp) / r_denom;
  return 2.0 * precision * recall / (precision + recall);
}

double oracle_mcc(const ConfusionMatrix& cm) {
  const double product = double(cm.tp + cm.fp) * double(cm.tp + cm.fn) *
                         double(cm.tn + cm.fp) * double(cm.tn + cm.fn);
  if (product == 0.0) return 0.0;
  return (double(cm.tp) * double(cm.tn) - double(cm.fp) * double(cm.fn)) /
         std::sqrt(product);
}

std::vector<int> random_binary(Rng& rng, std::size_t n, double p) {
  std::vector<int> v(n);
  for (auto& x : v) x = rng.uniform() < p ? 1 : 0;
  return v;
}

}  // namespace

TEST_CASE("mahalanobis distance basics", "[anomaly]") {
  SECTION("zero at the mean") {
    Vector mu = Vector::Ones(3);
    CHECK(mahalanobis(mu, {mu, Matrix::Identity(3, 3)}) == 0.0);
  }
  SECTION("euclidean for the identity covariance") {
    Vector x(2), mu(2);
    x << 3, 4;
    mu << 0, 0;
    CHECK(mahalanobis(x, {mu, Matrix::Identity(2, 2)}) ==
          Catch::Approx(5.0).epsilon(1e-6));
  }
  SECTION("diagonal scaling") {
    Vector x(2), mu(2);
    x << 2, 3;
    mu << 0, 0;
    Matrix p = Matrix::Zero(2, 2);
    p(0, 0) = 4.0;
    p(1, 1) = 1.0;
    CHECK(mahalanobis(x, {mu, p}) ==
          Catch::Approx(std::sqrt(10.0)).epsilon(1e-6));
  }
  SECTION("dimension mismatch") {
    CHECK_THROWS_AS(
        mahalanobis(Vector::Zero(2), {Vector::Zero(3), Matrix::Identity(3, 3)}),
        std::invalid_argument);
  }
}

TEST_CASE("squared distances average to the dimension", "[anomaly]") {
  Rng rng(123);
  for (int dim : {1, 3, 8}) {
    const Vector mu = rng.normal_vector(dim);
    Matrix root = rng.normal_matrix(dim, dim);
    const Matrix cov = root * root.transpose() +
                       0.1 * Matrix::Identity(dim, dim);
    const GaussianSampler sampler(mu, cov);
    const GaussianBelief belief{mu, cov};

    const int samples = 100000;
    double total = 0.0;
    for (int s = 0; s < samples; ++s) {
      const double d = mahalanobis(sampler.sample(rng), belief);
      total += d * d;
    }
    const double mean = total / samples;
    CHECK(std::abs(mean - dim) / dim < 0.03);
  }
}

TEST_CASE("score_series enforces the length contract", "[anomaly]") {
  Rng rng(5);
  const Dataset d = make_dataset(rng.normal_matrix(10, 2));
  std::vector<GaussianBelief> beliefs(
      7, GaussianBelief{Vector::Zero(2), Matrix::Identity(2, 2)});
  const ScoreSeries s = score_series(d, beliefs, 3);
  CHECK(s.offset == 3);
  CHECK(s.scores.size() == 7);
  beliefs.pop_back();
  CHECK_THROWS_AS(score_series(d, beliefs, 3), data_error);
}

TEST_CASE("a large deviation dominates the score series", "[anomaly]") {
  Matrix values = Matrix::Zero(50, 2);
  values.row(30) << 10.0, 10.0;  // injected deviation
  const Dataset d = make_dataset(values);
  std::vector<GaussianBelief> beliefs(
      49, GaussianBelief{Vector::Zero(2), Matrix::Identity(2, 2)});
  const ScoreSeries s = score_series(d, beliefs, 1);
  std::vector<double> sorted(s.scores.data(), s.scores.data() + 49);
  std::nth_element(sorted.begin(), sorted.begin() + 24, sorted.end());
  const double median = sorted[24];
  CHECK(s.scores(29) >= 5.0 * std::max(median, 1e-12));
}

TEST_CASE("point adjustment credits whole segments", "[anomaly]") {
  SECTION("hand case") {
    const std::vector<int> labels = {0, 1, 1, 1, 0};
    const std::vector<int> raw = {0, 0, 1, 0, 0};
    CHECK(point_adjust(raw, labels) == std::vector<int>{0, 1, 1, 1, 0});
  }
  SECTION("all-negative predictions are unchanged") {
    const std::vector<int> labels = {0, 1, 1, 0};
    const std::vector<int> raw = {0, 0, 0, 0};
    CHECK(point_adjust(raw, labels) == raw);
  }
  SECTION("no labels means no adjustment") {
    const std::vector<int> labels = {0, 0, 0};
    const std::vector<int> raw = {1, 0, 1};
    CHECK(point_adjust(raw, labels) == raw);
  }
  SECTION("idempotent and never hurting recall") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const auto labels = random_binary(rng, 40, 0.3);
      const auto raw = random_binary(rng, 40, 0.2);
      const auto once = point_adjust(raw, labels);
      CHECK(point_adjust(once, labels) == once);
      const ConfusionMatrix before = confusion(raw, labels);
      const ConfusionMatrix after = confusion(once, labels);
      CHECK(after.tp >= before.tp);
      CHECK(after.fn <= before.fn);
      CHECK(after.fp == before.fp);  // outside segments nothing changes
    }
  }
}

TEST_CASE("confusion counting", "[anomaly]") {
  SECTION("tiny case") {
    const ConfusionMatrix cm = confusion({1, 0}, {1, 0});
    CHECK(cm.tp == 1);
    CHECK(cm.tn == 1);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);
  }
  SECTION("hand count") {
    const std::vector<int> pred = {1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    const std::vector<int> labels = {1, 0, 1, 0, 0, 0, 0, 0, 0, 0};
    const ConfusionMatrix cm = confusion(pred, labels);
    CHECK(cm.tp == 1);
    CHECK(cm.fp == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.tn == 7);
  }
  SECTION("empty") {
    const ConfusionMatrix cm = confusion({}, {});
    CHECK(cm.tp + cm.fp + cm.fn + cm.tn == 0);
  }
}

TEST_CASE("f1 values", "[anomaly]") {
  CHECK(f1({2, 1, 1, 0}) == Catch::Approx(4.0 / 6.0));
  CHECK(f1({5, 0, 0, 5}) == 1.0);
  CHECK(f1({0, 0, 0, 4}) == 0.0);
}

TEST_CASE("mcc values", "[anomaly]") {
  CHECK(mcc({3, 0, 0, 7}) == 1.0);  // perfect prediction
  CHECK(mcc({2, 1, 1, 6}) == Catch::Approx(11.0 / 21.0).margin(1e-12));
  CHECK(mcc({2, 3, 0, 0}) == 0.0);  // all-positive predictions
}

TEST_CASE("metrics agree with an independent recount", "[anomaly]") {
  Rng rng(808);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.bounded(200);
    const auto labels = random_binary(rng, n, 0.25);
    const auto pred = random_binary(rng, n, 0.3);

    const ConfusionMatrix mine = confusion(point_adjust(pred, labels), labels);
    const ConfusionMatrix oracle = oracle_adjusted_confusion(pred, labels);
    REQUIRE(mine.tp == oracle.tp);
    REQUIRE(mine.fp == oracle.fp);
    REQUIRE(mine.fn == oracle.fn);
    REQUIRE(mine.tn == oracle.tn);
    REQUIRE(f1(mine) == Catch::Approx(oracle_f1(oracle)).margin(1e-12));
    REQUIRE(mcc(mine) == Catch::Approx(oracle_mcc(oracle)).margin(1e-12));
    CHECK(mcc(mine) >= -1.0);
    CHECK(mcc(mine) <= 1.0);
    CHECK(f1(mine) >= 0.0);
    CHECK(f1(mine) <= 1.0);
  }
}

TEST_CASE("threshold search enumerates every candidate", "[anomaly]") {
  SECTION("hand case") {
    ScoreSeries s;
    s.scores.resize(3);
    s.scores << 1, 2, 3;
    const auto result = best_threshold_search(s, {0, 0, 1}, Metric::F1);
    CHECK(result.best_threshold == 3.0);
    CHECK(result.best_f1 == 1.0);
    CHECK(result.best_mcc == 1.0);
    CHECK(result.table.size() == 4);  // three distinct scores plus +inf
  }
  SECTION("all-normal labels peak at +infinity") {
    ScoreSeries s;
    s.scores.resize(4);
    s.scores << 1, 4, 2, 2;
    const auto result = best_threshold_search(s, {0, 0, 0, 0}, Metric::F1);
    CHECK(std::isinf(result.best_threshold));
    CHECK(result.best_f1 == 0.0);
  }
  SECTION("empty series is an error") {
    CHECK_THROWS_AS(best_threshold_search(ScoreSeries{}, {}, Metric::F1),
                    data_error);
  }
}

TEST_CASE("search result dominates any fixed threshold and matches brute "
          "force",
          "[anomaly]") {
  Rng rng(909);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 5 + rng.bounded(60);
    ScoreSeries s;
    s.scores.resize(Index(n));
    for (Index i = 0; i < Index(n); ++i) {
      s.scores(i) = std::round(rng.uniform() * 10.0) / 2.0;  // force ties
    }
    const auto labels = random_binary(rng, n, 0.3);
    for (Metric metric : {Metric::F1, Metric::Mcc}) {
      const auto result = best_threshold_search(s, labels, metric);

      // Independent brute force over the same candidate set.
      double best = -2.0;
      double best_threshold = 0.0;
      std::vector<double> candidates(s.scores.data(), s.scores.data() + n);
      candidates.push_back(std::numeric_limits<double>::infinity());
      std::sort(candidates.begin(), candidates.end());
      for (double threshold : candidates) {
        std::vector<int> pred(n);
        for (std::size_t i = 0; i < n; ++i) {
          pred[i] = s.scores(Index(i)) >= threshold ? 1 : 0;
        }
        const ConfusionMatrix cm = oracle_adjusted_confusion(pred, labels);
        const double value =
            metric == Metric::F1 ? oracle_f1(cm) : oracle_mcc(cm);
        if (value >= best) {
          best = value;
          best_threshold = threshold;
        }
      }
      const double mine =
          metric == Metric::F1 ? result.best_f1 : result.best_mcc;
      CHECK(mine == Catch::Approx(best).margin(1e-12));
      if (std::isinf(best_threshold)) {
        CHECK(std::isinf(result.best_threshold));
      } else {
        CHECK(result.best_threshold == Catch::Approx(best_threshold));
      }

      // Maximality against arbitrary fixed thresholds.
      for (double fixed : {0.5, 2.0, 3.5}) {
        std::vector<int> pred(n);
        for (std::size_t i = 0; i < n; ++i) {
          pred[i] = s.scores(Index(i)) >= fixed ? 1 : 0;
        }
        const ConfusionMatrix cm = confusion(point_adjust(pred, labels), labels);
        CHECK(mine >= metric_value(metric, cm) - 1e-12);
      }
    }
  }
}

TEST_CASE("scores round trip through the CSV format", "[anomaly]") {
  ScoreSeries s;
  s.offset = 12;
  s.scores.resize(3);
  s.scores << 0.125, 3.5, 2.25;
  const std::vector<int> labels = {0, 1, 0};
  const std::string path = "bssad_test_scores.csv";
  write_scores(s, &labels, path);
  const ScoresFile back = read_scores(path);
  CHECK(back.scores.offset == 12);
  CHECK(back.scores.scores == s.scores);
  CHECK(back.labels == labels);
  std::remove(path.c_str());
}
