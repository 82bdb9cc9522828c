#ifndef LBC_DATA_HPP
#define LBC_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbc/nn.hpp"

namespace lbc {

// Per-column statistics learned on a training split. Standard deviations use
// the population convention (divide by N).
struct Standardization {
  RowVector<double> feature_mean;
  RowVector<double> feature_std;
  std::vector<bool> constant_feature;  // zero raw variance; mapped to 0
  double target_mean = 0.0;
  double target_std = 1.0;
};

struct Dataset {
  MatrixD features;  // [N x d]
  VectorD targets;   // [N]
  std::vector<std::string> feature_names;
  std::string target_name;
  std::optional<Standardization> standardization;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  // Throws DataError on row-count mismatch or non-finite values.
  void validate() const;
};

struct CsvOptions {
  char delimiter = ',';
  bool has_header = true;
  // Column name, or a zero-based index when no header matches.
  std::string target;
  // Columns to ignore entirely (e.g. a row-number column).
  std::vector<std::string> drop_columns;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
  std::vector<std::string> columns;
  std::string target;
  std::vector<std::string> constant_columns;
};

nlohmann::json to_json(const LoadReport& report);

struct LoadResult {
  Dataset dataset;
  LoadReport report;
};

// Rows with a missing or non-numeric cell are dropped and counted.
LoadResult load_csv(const std::filesystem::path& path, const CsvOptions& options);
LoadResult parse_csv(const std::string& text, const CsvOptions& options);

struct StandardizedData {
  Dataset train;
  std::vector<Dataset> others;
  Standardization stats;
};

// Statistics come from `train` only and are applied to every dataset.
// Throws DataError if train is empty or its target is constant.
StandardizedData standardize(const Dataset& train, const std::vector<Dataset>& others = {});

Standardization fit_standardization(const Dataset& train);
Dataset apply_standardization(const Dataset& data, const Standardization& stats);
Dataset unstandardize(const Dataset& data);

MatrixD standardize_features(const MatrixD& features, const Standardization& stats);

nlohmann::json to_json(const Standardization& stats);
Standardization standardization_from_json(const nlohmann::json& doc);

VectorD unstandardize_targets(const VectorD& y, const Standardization& stats);
// Widths and other scale-only quantities.
VectorD unstandardize_scale(const VectorD& v, const Standardization& stats);
MatrixD unstandardize_scale(const MatrixD& m, const Standardization& stats);
double unstandardize_feature(double x, Index column, const Standardization& stats);

Dataset subset(const Dataset& data, const std::vector<Index>& rows);

struct SplitPlan {
  std::vector<Index> train_indices;  // sorted
  std::vector<Index> test_indices;   // sorted
  std::vector<int> fold_of;          // fold id per sample, size n
  int k_folds = 1;
  std::uint64_t seed = 0;

  std::vector<Index> fold_test(int fold) const;
  std::vector<Index> fold_train(int fold) const;
};

// A single random train/test split plus a k-fold assignment, both drawn from
// one seeded permutation.
SplitPlan make_splits(Index n, double test_fraction, int k_folds, std::uint64_t seed);

}  // namespace lbc

#endif  // LBC_DATA_HPP
