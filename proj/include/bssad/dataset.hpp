#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bssad/common.hpp"

namespace bssad {

enum class FeatureKind { Continuous, Categorical };

/// A T x M multivariate time series with optional binary labels.
/// Categorical features hold integer codes; `categories[j]` lists the
/// original tokens in code order (empty for continuous features).
struct Dataset {
  Matrix values;  // T rows (time) x M columns (features)
  std::optional<std::vector<int>> labels;
  std::vector<std::string> feature_names;
  std::vector<FeatureKind> feature_kinds;
  std::vector<std::vector<std::string>> categories;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

struct NormalizationStats {
  Vector min;
  Vector max;
  std::string fitted_on;
};

struct SplitSpec {
  double validation_fraction = 0.25;
  int window = 12;  // tau
};

/// One position of the sliding window: the tau rows preceding `index`
/// plus the observation at `index` itself.
struct WindowView {
  Matrix past;     // tau x M, rows index-tau .. index-1
  Vector current;  // row at `index`
  Index index;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline bool parse_double(const std::string& token, double& out) {
  const std::string t = trim(token);
  if (t.empty()) return false;
  try {
    std::size_t pos = 0;
    out = std::stod(t, &pos);
    return pos == t.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

inline void check_dataset(const Dataset& d) {
  const auto m = std::size_t(d.cols());
  if (d.feature_names.size() != m || d.feature_kinds.size() != m ||
      d.categories.size() != m) {
    throw data_error("dataset: metadata length does not match feature count");
  }
  std::set<std::string> seen(d.feature_names.begin(), d.feature_names.end());
  if (seen.size() != m) throw data_error("dataset: duplicate feature names");
  if (d.labels) {
    if (Index(d.labels->size()) != d.rows()) {
      throw data_error("dataset: label count does not match row count");
    }
    for (int v : *d.labels) {
      if (v != 0 && v != 1) throw data_error("dataset: labels must be 0 or 1");
    }
  }
  if (!d.values.allFinite()) {
    throw data_error("dataset: non-finite values present");
  }
}

/// Convenience constructor for programmatic datasets; all-continuous,
/// names generated when omitted.
inline Dataset make_dataset(Matrix values,
                            std::optional<std::vector<int>> labels = {},
                            std::vector<std::string> names = {}) {
  Dataset d;
  d.values = std::move(values);
  d.labels = std::move(labels);
  if (names.empty()) {
    for (Index j = 0; j < d.values.cols(); ++j) {
      names.push_back("f" + std::to_string(j));
    }
  }
  d.feature_names = std::move(names);
  d.feature_kinds.assign(d.values.cols(), FeatureKind::Continuous);
  d.categories.assign(d.values.cols(), {});
  check_dataset(d);
  return d;
}

/// Parse a comma-separated file: header row, numeric cells, an optional
/// 0/1 label column, and optional columns to treat as categorical tokens
/// (coded by lexicographic token order). Rows are numbered from 1.
inline Dataset load_csv(const std::string& path,
                        const std::optional<std::string>& label_column = {},
                        const std::vector<std::string>& categorical_columns = {}) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  std::vector<std::string> header = detail::split_line(line);
  for (auto& h : header) h = detail::trim(h);

  int label_idx = -1;
  if (label_column) {
    auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end()) {
      throw data_error(path + ": label column '" + *label_column +
                       "' not found");
    }
    label_idx = int(it - header.begin());
  }

  Dataset d;
  std::vector<int> col_of_feature;  // csv column index per feature
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (int(j) == label_idx) continue;
    d.feature_names.push_back(header[j]);
    const bool categorical =
        std::find(categorical_columns.begin(), categorical_columns.end(),
                  header[j]) != categorical_columns.end();
    d.feature_kinds.push_back(categorical ? FeatureKind::Categorical
                                          : FeatureKind::Continuous);
    col_of_feature.push_back(int(j));
  }
  {
    std::set<std::string> seen(d.feature_names.begin(), d.feature_names.end());
    if (seen.size() != d.feature_names.size()) {
      throw data_error(path + ": duplicate feature names in header");
    }
  }
  for (const auto& c : categorical_columns) {
    if (std::find(header.begin(), header.end(), c) == header.end()) {
      throw data_error(path + ": categorical column '" + c + "' not found");
    }
  }

  const std::size_t m = d.feature_names.size();
  std::vector<std::vector<double>> numeric(m);
  std::vector<std::vector<std::string>> tokens(m);  // categorical raw tokens
  std::vector<int> labels;
  long row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> cells = detail::split_line(line);
    if (cells.size() != header.size()) {
      throw data_error(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    }
    for (std::size_t f = 0; f < m; ++f) {
      const std::string& cell = cells[std::size_t(col_of_feature[f])];
      if (d.feature_kinds[f] == FeatureKind::Categorical) {
        tokens[f].push_back(detail::trim(cell));
        continue;
      }
      double v = 0.0;
      if (!detail::parse_double(cell, v) || !std::isfinite(v)) {
        throw data_error(path + ": unparseable value '" + detail::trim(cell) +
                         "' at row " + std::to_string(row) + ", column '" +
                         d.feature_names[f] + "'");
      }
      numeric[f].push_back(v);
    }
    if (label_idx >= 0) {
      double v = 0.0;
      if (!detail::parse_double(cells[std::size_t(label_idx)], v) ||
          (v != 0.0 && v != 1.0)) {
        throw data_error(path + ": label value '" +
                         detail::trim(cells[std::size_t(label_idx)]) +
                         "' at row " + std::to_string(row) +
                         " is not 0 or 1");
      }
      labels.push_back(int(v));
    }
  }

  d.values.resize(row, Index(m));
  d.categories.assign(m, {});
  for (std::size_t f = 0; f < m; ++f) {
    if (d.feature_kinds[f] == FeatureKind::Categorical) {
      std::set<std::string> distinct(tokens[f].begin(), tokens[f].end());
      d.categories[f].assign(distinct.begin(), distinct.end());
      std::map<std::string, double> code;
      for (std::size_t k = 0; k < d.categories[f].size(); ++k) {
        code[d.categories[f][k]] = double(k);
      }
      for (long t = 0; t < row; ++t) {
        d.values(t, Index(f)) = code[tokens[f][std::size_t(t)]];
      }
    } else {
      for (long t = 0; t < row; ++t) {
        d.values(t, Index(f)) = numeric[f][std::size_t(t)];
      }
    }
  }
  if (label_idx >= 0) d.labels = std::move(labels);
  check_dataset(d);
  return d;
}

/// Write a dataset back out with the same schema load_csv accepts; labels,
/// when present, appear in a trailing `label` column. Values use shortest
/// round-trip formatting, so rewrites are byte-stable.
inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write file: " + path);
  for (std::size_t j = 0; j < d.feature_names.size(); ++j) {
    out << (j ? "," : "") << d.feature_names[j];
  }
  if (d.labels) out << (d.feature_names.empty() ? "" : ",") << "label";
  out << "\n";
  for (Index t = 0; t < d.rows(); ++t) {
    for (Index j = 0; j < d.cols(); ++j) {
      if (j) out << ",";
      if (d.feature_kinds[std::size_t(j)] == FeatureKind::Categorical) {
        out << d.categories[std::size_t(j)][std::size_t(d.values(t, j))];
      } else {
        out << format_double(d.values(t, j));
      }
    }
    if (d.labels) out << (d.cols() ? "," : "") << (*d.labels)[std::size_t(t)];
    out << "\n";
  }
  if (!out) throw data_error("failed writing file: " + path);
}

/// Mark an existing numeric column as categorical, deriving its category
/// codes from the distinct values in ascending order.
inline Dataset mark_categorical(Dataset d, const std::string& column) {
  auto it = std::find(d.feature_names.begin(), d.feature_names.end(), column);
  if (it == d.feature_names.end()) {
    throw data_error("column not found: " + column);
  }
  const auto j = Index(it - d.feature_names.begin());
  std::set<double> distinct;
  for (Index t = 0; t < d.rows(); ++t) distinct.insert(d.values(t, j));
  std::map<double, double> code;
  d.categories[std::size_t(j)].clear();
  for (double v : distinct) {
    code[v] = double(d.categories[std::size_t(j)].size());
    d.categories[std::size_t(j)].push_back(format_double(v));
  }
  for (Index t = 0; t < d.rows(); ++t) {
    d.values(t, j) = code[d.values(t, j)];
  }
  d.feature_kinds[std::size_t(j)] = FeatureKind::Categorical;
  return d;
}

constexpr std::size_t kOneHotCardinalityLimit = 64;

/// Replace each named categorical column by one indicator column per
/// category, ordered lexicographically by token.
inline Dataset one_hot_encode(const Dataset& input,
                              const std::vector<std::string>& columns) {
  std::set<std::string> wanted(columns.begin(), columns.end());
  for (const auto& c : columns) {
    auto it = std::find(input.feature_names.begin(), input.feature_names.end(), c);
    if (it == input.feature_names.end()) {
      throw data_error("one_hot_encode: column not found: " + c);
    }
    const auto j = std::size_t(it - input.feature_names.begin());
    if (input.feature_kinds[j] != FeatureKind::Categorical) {
      throw data_error("one_hot_encode: column is not categorical: " + c);
    }
    if (input.categories[j].size() > kOneHotCardinalityLimit) {
      throw data_error("one_hot_encode: column '" + c + "' has " +
                       std::to_string(input.categories[j].size()) +
                       " categories, limit is " +
                       std::to_string(kOneHotCardinalityLimit));
    }
  }

  Dataset out;
  out.labels = input.labels;
  std::vector<Index> width(std::size_t(input.cols()), 1);
  Index total = 0;
  for (Index j = 0; j < input.cols(); ++j) {
    if (wanted.count(input.feature_names[std::size_t(j)])) {
      width[std::size_t(j)] = Index(input.categories[std::size_t(j)].size());
    }
    total += width[std::size_t(j)];
  }
  out.values = Matrix::Zero(input.rows(), total);
  Index col = 0;
  for (Index j = 0; j < input.cols(); ++j) {
    const auto& name = input.feature_names[std::size_t(j)];
    if (!wanted.count(name)) {
      out.values.col(col) = input.values.col(j);
      out.feature_names.push_back(name);
      out.feature_kinds.push_back(input.feature_kinds[std::size_t(j)]);
      out.categories.push_back(input.categories[std::size_t(j)]);
      ++col;
      continue;
    }
    for (Index k = 0; k < width[std::size_t(j)]; ++k) {
      out.feature_names.push_back(
          name + "=" + input.categories[std::size_t(j)][std::size_t(k)]);
      out.feature_kinds.push_back(FeatureKind::Continuous);
      out.categories.push_back({});
    }
    for (Index t = 0; t < input.rows(); ++t) {
      out.values(t, col + Index(input.values(t, j))) = 1.0;
    }
    col += width[std::size_t(j)];
  }
  check_dataset(out);
  return out;
}

inline NormalizationStats fit_normalizer(const Dataset& train,
                                         std::string fitted_on = "train") {
  if (train.rows() < 1) throw data_error("fit_normalizer: empty dataset");
  NormalizationStats stats;
  stats.min = train.values.colwise().minCoeff();
  stats.max = train.values.colwise().maxCoeff();
  stats.fitted_on = std::move(fitted_on);
  return stats;
}

/// Min-max map fitted on the training split. Constant features go to 0;
/// out-of-range values are deliberately left unclipped.
inline Dataset apply_normalizer(Dataset d, const NormalizationStats& stats) {
  if (d.cols() != stats.min.size()) {
    throw data_error("apply_normalizer: feature count mismatch");
  }
  for (Index j = 0; j < d.cols(); ++j) {
    if (d.feature_kinds[std::size_t(j)] == FeatureKind::Categorical) continue;
    const double lo = stats.min(j);
    const double range = stats.max(j) - lo;
    if (range == 0.0) {
      d.values.col(j).setZero();
    } else {
      d.values.col(j) = (d.values.col(j).array() - lo) / range;
    }
  }
  return d;
}

inline Dataset invert_normalizer(Dataset d, const NormalizationStats& stats) {
  if (d.cols() != stats.min.size()) {
    throw data_error("invert_normalizer: feature count mismatch");
  }
  for (Index j = 0; j < d.cols(); ++j) {
    if (d.feature_kinds[std::size_t(j)] == FeatureKind::Categorical) continue;
    const double lo = stats.min(j);
    const double range = stats.max(j) - lo;
    if (range == 0.0) {
      d.values.col(j).setConstant(lo);
    } else {
      d.values.col(j) = d.values.col(j).array() * range + lo;
    }
  }
  return d;
}

namespace detail {

inline Dataset slice_rows(const Dataset& d, Index begin, Index count) {
  Dataset out = d;
  out.values = d.values.middleRows(begin, count);
  if (d.labels) {
    out.labels = std::vector<int>(d.labels->begin() + begin,
                                  d.labels->begin() + begin + count);
  }
  return out;
}

}  // namespace detail

/// Contiguous time split: the leading floor((1-fraction)*T) rows train,
/// the remainder validate. Requires normal-only input.
inline std::pair<Dataset, Dataset> split(const Dataset& d,
                                         const SplitSpec& spec) {
  if (spec.validation_fraction <= 0.0 || spec.validation_fraction >= 1.0) {
    throw config_error("split: validation_fraction must be in (0,1)");
  }
  if (d.labels) {
    for (std::size_t t = 0; t < d.labels->size(); ++t) {
      if ((*d.labels)[t] != 0) {
        throw data_error("split: anomalous label at row " + std::to_string(t) +
                         "; training input must be normal-only");
      }
    }
  }
  const Index train_rows =
      Index(std::floor((1.0 - spec.validation_fraction) * double(d.rows())));
  return {detail::slice_rows(d, 0, train_rows),
          detail::slice_rows(d, train_rows, d.rows() - train_rows)};
}

/// All sliding-window views, t = tau .. T-1 in time order.
inline std::vector<WindowView> make_windows(const Dataset& d, int tau) {
  if (tau < 1) throw config_error("make_windows: window must be positive");
  if (d.rows() <= tau) {
    throw data_error("make_windows: need more than " + std::to_string(tau) +
                     " rows, got " + std::to_string(d.rows()));
  }
  std::vector<WindowView> views;
  views.reserve(std::size_t(d.rows() - tau));
  for (Index t = tau; t < d.rows(); ++t) {
    views.push_back({d.values.middleRows(t - tau, tau),
                     d.values.row(t).transpose(), t});
  }
  return views;
}

/// Row-major flattening of a tau x M window into a length tau*M vector.
inline Vector flatten_window(const Matrix& window) {
  Vector flat(window.size());
  for (Index r = 0; r < window.rows(); ++r) {
    flat.segment(r * window.cols(), window.cols()) = window.row(r);
  }
  return flat;
}

/// Column t-tau holds the flattened window at index t; shares layout with
/// flatten_window.
inline Matrix window_matrix(const Dataset& d, int tau) {
  if (d.rows() <= tau) throw data_error("window_matrix: dataset too short");
  const Index m = d.cols();
  Matrix flat(Index(tau) * m, d.rows() - tau);
  for (Index t = tau; t < d.rows(); ++t) {
    for (Index r = 0; r < tau; ++r) {
      flat.col(t - tau).segment(r * m, m) = d.values.row(t - tau + r);
    }
  }
  return flat;
}

}  // namespace bssad
