// Command-line front end: train, evaluate, compare, pdp, calibration-curve.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lbc/app.hpp"
#include "lbc/checkpoint.hpp"
#include "lbc/errors.hpp"
#include "lbc/pdp.hpp"
#include "lbc/svg.hpp"

namespace fs = std::filesystem;
using namespace lbc;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

// Thrown for anything the user can fix by changing flags or inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path default_root() {
  if (const char* env = std::getenv("LBC_OUT_ROOT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

// Flags shared by train and compare. Unset flags leave the configuration file
// (or the built-in defaults) in charge.
struct RunFlags {
  std::optional<std::string> config_file;
  std::optional<std::string> data, target, method, out, delimiter;
  std::optional<std::uint64_t> seed;
  std::optional<int> folds, jobs;
  std::optional<double> test_fraction, lambda1, lambda2, tau, lr_theta, lr_phi, baseline_lr, dropout;
  std::optional<std::size_t> iterations, mc_passes, pretrain_iterations, eval_every;
  std::vector<double> levels;
  std::vector<Index> hidden;
  std::vector<std::string> drop_columns;
  bool no_header = false;

  void attach(CLI::App* app, bool with_method) {
    app->add_option("--config", config_file, "JSON configuration file");
    app->add_option("--data", data, "CSV dataset");
    app->add_option("--target", target, "target column name or zero-based index");
    if (with_method) app->add_option("--method", method, "lbc | mse | hnn | mc_dropout");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--folds", folds, "cross-validation folds (1 = single split)");
    app->add_option("--test-fraction", test_fraction, "test fraction for a single split");
    app->add_option("--iterations", iterations, "training iterations");
    app->add_option("--levels", levels, "calibration levels")->delimiter(',');
    app->add_option("--lambda1", lambda1, "upper-edge width penalty");
    app->add_option("--lambda2", lambda2, "lower-edge width penalty");
    app->add_option("--tau", tau, "hinge margin");
    app->add_option("--lr-theta", lr_theta, "mean network learning rate");
    app->add_option("--lr-phi", lr_phi, "width network learning rate");
    app->add_option("--baseline-lr", baseline_lr, "baseline learning rate");
    app->add_option("--dropout", dropout, "MC dropout rate");
    app->add_option("--mc-passes", mc_passes, "MC dropout passes at prediction time");
    app->add_option("--hidden", hidden, "hidden layer widths")->delimiter(',');
    app->add_option("--pretrain-iterations", pretrain_iterations, "MSE warm start of the mean network");
    app->add_option("--eval-every", eval_every, "record test metrics every N iterations");
    app->add_option("--drop-columns", drop_columns, "columns to ignore")->delimiter(',');
    app->add_option("--delimiter", delimiter, "CSV delimiter");
    app->add_flag("--no-header", no_header, "CSV has no header row");
    app->add_option("--out", out, "output directory");
    app->add_option("--jobs", jobs, "folds trained in parallel");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (config_file) {
      try {
        merge_json(c, nlohmann::json::parse(read_file(*config_file)));
      } catch (const nlohmann::json::exception& e) {
        throw UsageError("cannot parse " + *config_file + ": " + e.what());
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
    }
    nlohmann::json o = nlohmann::json::object();
    if (data) o["data"] = *data;
    if (target) o["target"] = *target;
    if (method) o["method"] = *method;
    if (seed) o["seed"] = *seed;
    if (folds) o["folds"] = *folds;
    if (test_fraction) o["test_fraction"] = *test_fraction;
    if (iterations) o["iterations"] = *iterations;
    if (!levels.empty()) o["levels"] = levels;
    if (lambda1) o["lambda1"] = *lambda1;
    if (lambda2) o["lambda2"] = *lambda2;
    if (tau) o["tau"] = *tau;
    if (lr_theta) o["lr_theta"] = *lr_theta;
    if (lr_phi) o["lr_phi"] = *lr_phi;
    if (baseline_lr) o["baseline_lr"] = *baseline_lr;
    if (dropout) o["dropout"] = *dropout;
    if (mc_passes) o["mc_passes"] = *mc_passes;
    if (!hidden.empty()) o["hidden"] = hidden;
    if (pretrain_iterations) o["pretrain_iterations"] = *pretrain_iterations;
    if (eval_every) o["eval_every"] = *eval_every;
    if (!drop_columns.empty()) o["drop_columns"] = drop_columns;
    if (delimiter) o["delimiter"] = *delimiter;
    if (no_header) o["header"] = false;
    if (out) o["out"] = *out;
    if (jobs) o["jobs"] = *jobs;
    try {
      merge_json(c, o);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

void require_valid(const RunConfig& config) {
  const auto problems = config.problems();
  if (problems.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw UsageError(msg);
}

// Loads data named by a run configuration, mapping input problems to usage
// errors.
LoadResult load_or_usage(const RunConfig& config) {
  try {
    return load_dataset(config);
  } catch (const DataError& e) {
    throw UsageError(config.data + ": " + e.what());
  }
}

void print_summary(const RunSummary& s) {
  std::printf("%s: rmse %.4f ± %.4f | ece_mean %.4f ± %.4f | ece_sum %.4f ± %.4f (%zu folds)\n",
              s.method.c_str(), s.rmse.mean, s.rmse.std, s.ece_mean.mean, s.ece_mean.std, s.ece_sum.mean,
              s.ece_sum.std, s.folds.size());
}

int cmd_train(const RunFlags& flags) {
  RunConfig config = flags.resolve();
  require_valid(config);
  if (config.out.empty()) config.out = (default_root() / method_name(config.method)).string();
  load_or_usage(config);
  const RunSummary summary = train_run(config, config.out);
  print_summary(summary);
  std::cout << "wrote " << config.out << '\n';
  return 0;
}

RunConfig run_dir_config(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "config.json")) {
    throw UsageError("no trained run in " + run_dir.string() + " (config.json missing)");
  }
  return load_run_config(run_dir);
}

int cmd_evaluate(const std::string& run_dir, const std::optional<std::string>& data) {
  RunConfig config = run_dir_config(run_dir);
  if (data) config.data = *data;
  const LoadResult loaded = load_or_usage(config);
  const RunSummary summary = evaluate_run(run_dir, loaded.dataset);
  write_file_atomic(fs::path(run_dir) / "evaluation.json", dump_json(to_json(summary)));
  print_summary(summary);
  return 0;
}

int cmd_compare(const RunFlags& flags, const std::vector<std::string>& methods, bool reuse) {
  RunConfig base = flags.resolve();
  require_valid(base);
  const fs::path root = base.out.empty() ? default_root() / "compare" : fs::path(base.out);
  for (const auto& m : methods) parse_method(m);
  load_or_usage(base);

  std::vector<ComparisonRow> rows;
  for (const auto& m : methods) {
    ComparisonRow row;
    row.method = m;
    const fs::path dir = root / m;
    try {
      if (reuse && fs::exists(dir / "summary.json")) {
        row.summary = summary_from_json(nlohmann::json::parse(read_file(dir / "summary.json")));
      } else {
        RunConfig config = base;
        config.method = parse_method(m);
        config.out = dir.string();
        row.summary = train_run(config, dir);
      }
      print_summary(*row.summary);
    } catch (const std::exception& e) {
      row.error = e.what();
      std::cerr << m << " failed: " << e.what() << '\n';
    }
    rows.push_back(std::move(row));
  }
  write_file_atomic(root / "comparison.csv", comparison_csv(rows));
  write_file_atomic(root / "comparison.md", comparison_markdown(rows));
  write_file_atomic(root / "comparison.json", dump_json(comparison_json(rows)));
  std::cout << comparison_markdown(rows);
  for (const auto& r : rows) {
    if (!r.summary) return kRuntimeError;
  }
  return 0;
}

int cmd_pdp(const std::string& run_dir, const std::string& feature, int fold, Index grid_size,
            const std::vector<double>& level_flag, Index background_max, const std::optional<std::string>& out) {
  const RunConfig config = run_dir_config(run_dir);
  const LoadResult loaded = load_or_usage(config);
  const Dataset& data = loaded.dataset;
  const auto it = std::find(data.feature_names.begin(), data.feature_names.end(), feature);
  if (it == data.feature_names.end()) throw UsageError("unknown feature '" + feature + "'");
  const Index feature_index = it - data.feature_names.begin();
  const fs::path fold_dir = fs::path(run_dir) / ("fold_" + std::to_string(fold));
  if (!fs::exists(fold_dir / "fold.json")) throw UsageError("no fold " + std::to_string(fold) + " in " + run_dir);

  std::vector<Index> train_rows;
  const FittedModel fitted = load_fitted(fold_dir, &train_rows);
  CalibrationLevels levels;
  try {
    levels = CalibrationLevels(level_flag.empty() ? config.levels : level_flag);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  MatrixD background = standardize_features(subset(data, train_rows).features, fitted.stats);
  background = subsample_background(background, background_max, derive_seed(config.seed, 99));

  PdpResult result;
  try {
    result = partial_dependence_with_intervals(
        [&](const MatrixD& x) { return fitted.predict_standardized(x, levels); }, background, feature_index,
        levels, feature_grid(background, feature_index, grid_size));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  result.feature = feature;
  result = to_original_units(result, fitted.stats);

  const fs::path out_dir = out ? fs::path(*out) : fs::path(run_dir);
  write_file_atomic(out_dir / ("pdp_" + feature + ".csv"), pdp_to_csv(result));
  write_file_atomic(out_dir / ("pdp_" + feature + ".svg"), svg::pdp_chart(result, data.target_name));
  std::cout << "wrote " << (out_dir / ("pdp_" + feature + ".csv")).string() << " and .svg\n";
  return 0;
}

int cmd_calibration_curve(const std::string& run_dir, const std::optional<std::string>& out) {
  const RunConfig config = run_dir_config(run_dir);
  const LoadResult loaded = load_or_usage(config);
  const CalibrationLevels levels(config.levels);
  const PooledPredictions pooled = pooled_test_predictions(run_dir, loaded.dataset, levels);
  const auto curve = calibration_curve(pooled.y, pooled.prediction, levels);
  const fs::path out_dir = out ? fs::path(*out) : fs::path(run_dir);
  write_file_atomic(out_dir / "calibration_curve.csv", curve_to_csv(curve));
  write_file_atomic(out_dir / "calibration_curve.svg",
                    svg::calibration_curve_chart(curve, "Calibration: " + method_name(config.method)));
  for (const auto& p : curve) std::printf("alpha %.3f  coverage %.4f\n", p.alpha, p.coverage);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration-driven deep regression: train, evaluate, compare, plot"};
  app.require_subcommand(1);

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "train one method with cross-validation");
  train_flags.attach(train, true);

  std::string eval_dir;
  std::optional<std::string> eval_data;
  auto* evaluate = app.add_subcommand("evaluate", "re-evaluate saved fold checkpoints");
  evaluate->add_option("--run-dir", eval_dir, "directory written by train")->required();
  evaluate->add_option("--data", eval_data, "CSV to evaluate on (default: the training CSV)");

  RunFlags compare_flags;
  std::vector<std::string> methods = {"lbc", "hnn", "mc_dropout", "mse"};
  bool reuse = false;
  auto* compare = app.add_subcommand("compare", "train or load several methods and tabulate them");
  compare_flags.attach(compare, false);
  compare->add_option("--methods", methods, "methods to compare")->delimiter(',');
  compare->add_flag("--reuse", reuse, "load existing summaries instead of retraining");

  std::string pdp_dir, pdp_feature;
  int pdp_fold = 0;
  Index pdp_grid = 50;
  Index pdp_background = 0;
  std::vector<double> pdp_levels;
  std::optional<std::string> pdp_out;
  auto* pdp = app.add_subcommand("pdp", "partial dependence with interval bands");
  pdp->add_option("--run-dir", pdp_dir, "directory written by train")->required();
  pdp->add_option("--feature", pdp_feature, "feature name")->required();
  pdp->add_option("--fold", pdp_fold, "fold whose models and training rows are used");
  pdp->add_option("--grid-size", pdp_grid, "grid points over the observed range");
  pdp->add_option("--levels", pdp_levels, "levels to draw")->delimiter(',');
  pdp->add_option("--background-max", pdp_background, "subsample background rows (0 = all)");
  pdp->add_option("--out", pdp_out, "output directory (default: run dir)");

  std::string curve_dir;
  std::optional<std::string> curve_out;
  auto* curve = app.add_subcommand("calibration-curve", "pooled test coverage per level");
  curve->add_option("--run-dir", curve_dir, "directory written by train")->required();
  curve->add_option("--out", curve_out, "output directory (default: run dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*evaluate) return cmd_evaluate(eval_dir, eval_data);
    if (*compare) return cmd_compare(compare_flags, methods, reuse);
    if (*pdp) return cmd_pdp(pdp_dir, pdp_feature, pdp_fold, pdp_grid, pdp_levels, pdp_background, pdp_out);
    if (*curve) return cmd_calibration_curve(curve_dir, curve_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
