#ifndef LBC_APP_HPP
#define LBC_APP_HPP

// Experiment orchestration behind the command-line tool: configuration,
// per-fold training and evaluation, and the on-disk run layout.
//
// A run directory looks like
//   config.json        effective configuration
//   load_report.json   CSV ingestion report
//   summary.json       per-fold and aggregate metrics
//   fold_<k>/          fold.json, model checkpoints, history.csv, report.json

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbc/baselines.hpp"
#include "lbc/calibrate.hpp"
#include "lbc/data.hpp"
#include "lbc/metrics.hpp"

namespace lbc {

enum class Method { kLbc, kMse, kHnn, kMcDropout };

std::string method_name(Method method);
Method parse_method(const std::string& name);

struct RunConfig {
  std::string data;
  std::string target;
  char delimiter = ',';
  bool header = true;
  std::vector<std::string> drop_columns;
  Method method = Method::kLbc;
  std::uint64_t seed = 0;
  int folds = 5;
  double test_fraction = 0.2;
  std::vector<double> levels = {0.1, 0.3, 0.5, 0.7, 0.9};
  LbcConfig lbc;
  BaselineConfig baseline;
  std::string out;
  int jobs = 1;

  // Every problem found, empty when valid.
  std::vector<std::string> problems() const;
};

// Flat JSON; every key is optional when reading and overrides the value
// already in `config`.
nlohmann::json to_json(const RunConfig& config);
void merge_json(RunConfig& config, const nlohmann::json& doc);

// Seeds of the trainers for one fold, derived from the run seed.
std::uint64_t fold_seed(std::uint64_t run_seed, int fold);

// A trained model of any method together with what is needed to turn
// standardized inputs into original-unit intervals.
struct FittedModel {
  Method method = Method::kLbc;
  Standardization stats;
  MlpD model;                       // mean network (or Gaussian head for hnn)
  std::optional<MlpD> width_model;  // lbc only
  std::vector<double> levels;       // levels the width model was trained for
  double residual_std = 0.0;        // mse: training residual std (standardized)
  double log_variance_floor = -10.0;
  std::size_t mc_passes = 50;
  std::uint64_t mc_seed = 0;

  // Intervals in standardized units for the requested levels.
  IntervalPrediction predict_standardized(const MatrixD& x_std, const CalibrationLevels& levels) const;
  // Intervals in original target units for raw (unstandardized) features.
  IntervalPrediction predict(const MatrixD& x_raw, const CalibrationLevels& levels) const;
};

struct FoldOutcome {
  int fold = 0;
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;
  FittedModel fitted;
  CalibrationReport report;  // original units
  std::string history_csv;
};

// Standardizes on the training rows, trains the configured method and
// evaluates on the test rows.
FoldOutcome run_fold(const Dataset& raw, const RunConfig& config, int fold,
                     const std::vector<Index>& train_rows, const std::vector<Index>& test_rows);

struct FoldRows {
  std::vector<Index> train;
  std::vector<Index> test;
};

// k-fold partitions when folds > 1, else one train/test split.
std::vector<FoldRows> fold_rows(Index n, const RunConfig& config);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over folds
};

struct RunSummary {
  std::string method;
  std::vector<double> levels;
  std::vector<CalibrationReport> folds;
  MetricSummary rmse;
  MetricSummary ece_mean;
  MetricSummary ece_sum;
};

RunSummary summarize(const std::string& method, const std::vector<double>& levels,
                     const std::vector<CalibrationReport>& folds);
nlohmann::json to_json(const RunSummary& summary);
RunSummary summary_from_json(const nlohmann::json& doc);

LoadResult load_dataset(const RunConfig& config);

// Trains every fold and writes the run directory. Returns the summary.
RunSummary train_run(const RunConfig& config, const std::filesystem::path& out_dir);

void save_fold(const std::filesystem::path& fold_dir, const FoldOutcome& outcome);
FittedModel load_fitted(const std::filesystem::path& fold_dir, std::vector<Index>* train_rows = nullptr,
                        std::vector<Index>* test_rows = nullptr);

RunConfig load_run_config(const std::filesystem::path& run_dir);
int count_folds(const std::filesystem::path& run_dir);

// Re-evaluates every saved fold on its test rows of `data`.
RunSummary evaluate_run(const std::filesystem::path& run_dir, const Dataset& data);

// Pooled test-set intervals over all folds, original units.
struct PooledPredictions {
  VectorD y;
  IntervalPrediction prediction;
};
PooledPredictions pooled_test_predictions(const std::filesystem::path& run_dir, const Dataset& data,
                                          const CalibrationLevels& levels);

// Table rows for several methods; a failed method carries its error.
struct ComparisonRow {
  std::string method;
  std::optional<RunSummary> summary;
  std::string error;
};
std::string comparison_csv(const std::vector<ComparisonRow>& rows);
std::string comparison_markdown(const std::vector<ComparisonRow>& rows);
nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows);

std::string dump_json(const nlohmann::json& doc);

}  // namespace lbc

#endif  // LBC_APP_HPP
