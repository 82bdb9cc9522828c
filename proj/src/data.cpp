#include "lbc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "lbc/checkpoint.hpp"
#include "lbc/errors.hpp"
#include "lbc/random.hpp"

namespace lbc {

namespace {

std::vector<std::vector<std::string>> split_records(const std::string& text, char delimiter) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_record = [&] {
    if (field_started || !record.empty()) {
      record.push_back(std::move(field));
      records.push_back(std::move(record));
    }
    record.clear();
    field.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      field_started = true;
    } else if (c == delimiter) {
      record.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      // CRLF
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  end_record();
  return records;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<std::size_t> parse_index(const std::string& s) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != targets.size()) throw DataError("feature and target row counts differ");
  if (!features.allFinite() || !targets.allFinite()) throw DataError("dataset has non-finite values");
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != features.cols()) {
    throw DataError("feature name count does not match feature columns");
  }
}

nlohmann::json to_json(const LoadReport& report) {
  return {
      {"rows_read", report.rows_read},
      {"rows_dropped", report.rows_dropped},
      {"columns", report.columns},
      {"target", report.target},
      {"constant_columns", report.constant_columns},
  };
}

LoadResult load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  return parse_csv(read_file(path), options);
}

LoadResult parse_csv(const std::string& text, const CsvOptions& options) {
  auto records = split_records(text, options.delimiter);
  if (records.empty()) throw DataError("empty file");

  std::vector<std::string> header;
  std::size_t first_row = 0;
  const std::size_t width = records.front().size();
  if (options.has_header) {
    for (const auto& h : records.front()) header.push_back(trim(h));
    first_row = 1;
  } else {
    for (std::size_t j = 0; j < width; ++j) header.push_back("x" + std::to_string(j));
  }

  std::optional<std::size_t> target_col;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == options.target) target_col = j;
  }
  if (!target_col) {
    if (auto idx = parse_index(options.target); idx && *idx < width) target_col = *idx;
  }
  if (!target_col) throw DataError("target column '" + options.target + "' not found");

  std::vector<std::size_t> feature_cols;
  for (std::size_t j = 0; j < width; ++j) {
    if (j == *target_col) continue;
    if (std::find(options.drop_columns.begin(), options.drop_columns.end(), header[j]) !=
        options.drop_columns.end()) {
      continue;
    }
    feature_cols.push_back(j);
  }

  LoadReport report;
  report.target = header[*target_col];
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (std::size_t r = first_row; r < records.size(); ++r) {
    const auto& rec = records[r];
    ++report.rows_read;
    if (rec.size() != width) {
      ++report.rows_dropped;
      continue;
    }
    auto y = parse_number(rec[*target_col]);
    std::vector<double> row;
    row.reserve(feature_cols.size());
    bool ok = y.has_value();
    for (std::size_t j : feature_cols) {
      if (!ok) break;
      auto v = parse_number(rec[j]);
      if (!v) {
        ok = false;
        break;
      }
      row.push_back(*v);
    }
    if (!ok) {
      ++report.rows_dropped;
      continue;
    }
    rows.push_back(std::move(row));
    ys.push_back(*y);
  }
  if (rows.empty()) throw DataError("all rows dropped");

  LoadResult result;
  Dataset& data = result.dataset;
  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(feature_cols.size());
  data.features.resize(n, d);
  data.targets.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) data.features(i, j) = rows[i][j];
    data.targets(i) = ys[i];
  }
  for (std::size_t j : feature_cols) data.feature_names.push_back(header[j]);
  data.target_name = header[*target_col];

  report.columns = data.feature_names;
  for (Index j = 0; j < d; ++j) {
    if ((data.features.col(j).array() == data.features(0, j)).all()) {
      report.constant_columns.push_back(data.feature_names[j]);
    }
  }
  result.report = std::move(report);
  return result;
}

Standardization fit_standardization(const Dataset& train) {
  train.validate();
  if (train.size() == 0) throw DataError("cannot standardize an empty dataset");
  const double n = static_cast<double>(train.size());
  Standardization stats;
  stats.feature_mean = train.features.colwise().mean();
  stats.feature_std = ((train.features.rowwise() - stats.feature_mean).array().square().colwise().sum() / n)
                          .sqrt()
                          .matrix();
  stats.constant_feature.resize(train.dim());
  for (Index j = 0; j < train.dim(); ++j) {
    stats.constant_feature[j] = !(stats.feature_std(j) > 0.0);
  }
  stats.target_mean = train.targets.mean();
  stats.target_std = std::sqrt((train.targets.array() - stats.target_mean).square().sum() / n);
  if (!(stats.target_std > 0.0)) throw DataError("target column has zero variance");
  return stats;
}

MatrixD standardize_features(const MatrixD& features, const Standardization& stats) {
  if (features.cols() != stats.feature_mean.size()) throw DimensionError("standardization width mismatch");
  MatrixD out(features.rows(), features.cols());
  for (Index j = 0; j < features.cols(); ++j) {
    if (stats.constant_feature[j]) {
      out.col(j).setZero();
    } else {
      out.col(j) = (features.col(j).array() - stats.feature_mean(j)) / stats.feature_std(j);
    }
  }
  return out;
}

Dataset apply_standardization(const Dataset& data, const Standardization& stats) {
  data.validate();
  Dataset out = data;
  out.features = standardize_features(data.features, stats);
  out.targets = (data.targets.array() - stats.target_mean) / stats.target_std;
  out.standardization = stats;
  return out;
}

StandardizedData standardize(const Dataset& train, const std::vector<Dataset>& others) {
  StandardizedData result;
  result.stats = fit_standardization(train);
  result.train = apply_standardization(train, result.stats);
  for (const auto& other : others) result.others.push_back(apply_standardization(other, result.stats));
  return result;
}

Dataset unstandardize(const Dataset& data) {
  if (!data.standardization) return data;
  const Standardization& stats = *data.standardization;
  Dataset out = data;
  for (Index j = 0; j < data.dim(); ++j) {
    out.features.col(j) =
        (data.features.col(j).array() * stats.feature_std(j) + stats.feature_mean(j)).matrix();
  }
  out.targets = unstandardize_targets(data.targets, stats);
  out.standardization.reset();
  return out;
}

VectorD unstandardize_targets(const VectorD& y, const Standardization& stats) {
  return (y.array() * stats.target_std + stats.target_mean).matrix();
}

VectorD unstandardize_scale(const VectorD& v, const Standardization& stats) {
  return v * stats.target_std;
}

MatrixD unstandardize_scale(const MatrixD& m, const Standardization& stats) {
  return m * stats.target_std;
}

double unstandardize_feature(double x, Index column, const Standardization& stats) {
  return x * stats.feature_std(column) + stats.feature_mean(column);
}

nlohmann::json to_json(const Standardization& stats) {
  std::vector<double> mean(stats.feature_mean.data(), stats.feature_mean.data() + stats.feature_mean.size());
  std::vector<double> sd(stats.feature_std.data(), stats.feature_std.data() + stats.feature_std.size());
  return {
      {"feature_mean", mean},
      {"feature_std", sd},
      {"constant_feature", stats.constant_feature},
      {"target_mean", stats.target_mean},
      {"target_std", stats.target_std},
  };
}

Standardization standardization_from_json(const nlohmann::json& doc) {
  Standardization stats;
  const auto mean = doc.at("feature_mean").get<std::vector<double>>();
  const auto sd = doc.at("feature_std").get<std::vector<double>>();
  if (mean.size() != sd.size()) throw DataError("standardization columns disagree");
  stats.feature_mean = Eigen::Map<const RowVector<double>>(mean.data(), static_cast<Index>(mean.size()));
  stats.feature_std = Eigen::Map<const RowVector<double>>(sd.data(), static_cast<Index>(sd.size()));
  stats.constant_feature = doc.at("constant_feature").get<std::vector<bool>>();
  if (stats.constant_feature.size() != mean.size()) throw DataError("standardization columns disagree");
  stats.target_mean = doc.at("target_mean").get<double>();
  stats.target_std = doc.at("target_std").get<double>();
  return stats;
}

Dataset subset(const Dataset& data, const std::vector<Index>& rows) {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), data.dim());
  out.targets.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= data.size()) throw DataError("row index out of range");
    out.features.row(static_cast<Index>(i)) = data.features.row(rows[i]);
    out.targets(static_cast<Index>(i)) = data.targets(rows[i]);
  }
  out.feature_names = data.feature_names;
  out.target_name = data.target_name;
  out.standardization = data.standardization;
  return out;
}

std::vector<Index> SplitPlan::fold_test(int fold) const {
  std::vector<Index> idx;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) idx.push_back(static_cast<Index>(i));
  }
  return idx;
}

std::vector<Index> SplitPlan::fold_train(int fold) const {
  std::vector<Index> idx;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) idx.push_back(static_cast<Index>(i));
  }
  return idx;
}

SplitPlan make_splits(Index n, double test_fraction, int k_folds, std::uint64_t seed) {
  if (k_folds < 1) throw std::invalid_argument("k_folds must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in (0, 1)");
  }
  if (n < 2 || n < k_folds) throw DataError("too few samples to split");

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  shuffle(perm.begin(), perm.end(), rng);

  const Index n_test =
      std::clamp<Index>(static_cast<Index>(std::llround(test_fraction * static_cast<double>(n))), 1, n - 1);

  SplitPlan plan;
  plan.k_folds = k_folds;
  plan.seed = seed;
  plan.test_indices.assign(perm.begin(), perm.begin() + n_test);
  plan.train_indices.assign(perm.begin() + n_test, perm.end());
  std::sort(plan.test_indices.begin(), plan.test_indices.end());
  std::sort(plan.train_indices.begin(), plan.train_indices.end());
  plan.fold_of.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) plan.fold_of[perm[i]] = static_cast<int>(i % k_folds);
  return plan;
}

}  // namespace lbc
