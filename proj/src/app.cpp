#include "lbc/app.hpp"

#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>
#include <stdexcept>

#include "lbc/checkpoint.hpp"
#include "lbc/errors.hpp"
#include "lbc/random.hpp"

namespace lbc {

namespace fs = std::filesystem;

std::string method_name(Method method) {
  switch (method) {
    case Method::kLbc: return "lbc";
    case Method::kMse: return "mse";
    case Method::kHnn: return "hnn";
    case Method::kMcDropout: return "mc_dropout";
  }
  return "lbc";
}

Method parse_method(const std::string& name) {
  if (name == "lbc") return Method::kLbc;
  if (name == "mse") return Method::kMse;
  if (name == "hnn") return Method::kHnn;
  if (name == "mc_dropout") return Method::kMcDropout;
  throw std::invalid_argument("unknown method '" + name + "' (expected lbc, mse, hnn or mc_dropout)");
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  if (data.empty()) out.push_back("--data is required");
  if (target.empty()) out.push_back("--target is required");
  if (folds < 1) out.push_back("folds must be at least 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) out.push_back("test_fraction must lie in (0, 1)");
  if (jobs < 1) out.push_back("jobs must be at least 1");
  try {
    CalibrationLevels check(levels);
  } catch (const std::exception& e) {
    out.push_back(std::string("levels: ") + e.what());
  }
  try {
    lbc.validate();
  } catch (const std::exception& e) {
    out.push_back(e.what());
  }
  try {
    baseline.validate();
  } catch (const std::exception& e) {
    out.push_back(e.what());
  }
  return out;
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"data", c.data},
      {"target", c.target},
      {"delimiter", std::string(1, c.delimiter)},
      {"header", c.header},
      {"drop_columns", c.drop_columns},
      {"method", method_name(c.method)},
      {"seed", c.seed},
      {"folds", c.folds},
      {"test_fraction", c.test_fraction},
      {"levels", c.levels},
      {"iterations", c.lbc.iterations},
      {"lambda1", c.lbc.lambda1},
      {"lambda2", c.lbc.lambda2},
      {"tau", c.lbc.tau},
      {"lr_theta", c.lbc.lr_theta},
      {"lr_phi", c.lbc.lr_phi},
      {"sharpness", c.lbc.sharpness},
      {"hidden", c.lbc.hidden},
      {"full_batch_limit", c.lbc.full_batch_limit},
      {"minibatch", c.lbc.minibatch},
      {"pretrain_iterations", c.lbc.pretrain_iterations},
      {"pretrain_lr", c.lbc.pretrain_lr},
      {"eval_every", c.lbc.eval_every},
      {"baseline_lr", c.baseline.learning_rate},
      {"dropout", c.baseline.dropout},
      {"mc_passes", c.baseline.mc_passes},
      {"log_variance_floor", c.baseline.log_variance_floor},
      {"out", c.out},
      {"jobs", c.jobs},
  };
}

void merge_json(RunConfig& c, const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("configuration file must hold a JSON object");
  static const std::vector<std::string> known = {
      "data", "target", "delimiter", "header", "drop_columns", "method", "seed", "folds",
      "test_fraction", "levels", "iterations", "lambda1", "lambda2", "tau", "lr_theta", "lr_phi",
      "sharpness", "hidden", "full_batch_limit", "minibatch", "pretrain_iterations", "pretrain_lr",
      "eval_every", "baseline_lr", "dropout", "mc_passes", "log_variance_floor", "out", "jobs"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown configuration key '" + key + "'");
    }
  }
  try {
    if (doc.contains("data")) c.data = doc["data"].get<std::string>();
    if (doc.contains("target")) c.target = doc["target"].get<std::string>();
    if (doc.contains("delimiter")) {
      const auto d = doc["delimiter"].get<std::string>();
      if (d.size() != 1) throw std::invalid_argument("delimiter must be one character");
      c.delimiter = d[0];
    }
    if (doc.contains("header")) c.header = doc["header"].get<bool>();
    if (doc.contains("drop_columns")) c.drop_columns = doc["drop_columns"].get<std::vector<std::string>>();
    if (doc.contains("method")) c.method = parse_method(doc["method"].get<std::string>());
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("folds")) c.folds = doc["folds"].get<int>();
    if (doc.contains("test_fraction")) c.test_fraction = doc["test_fraction"].get<double>();
    if (doc.contains("levels")) c.levels = doc["levels"].get<std::vector<double>>();
    if (doc.contains("iterations")) {
      c.lbc.iterations = doc["iterations"].get<std::size_t>();
      c.baseline.iterations = c.lbc.iterations;
    }
    if (doc.contains("lambda1")) c.lbc.lambda1 = doc["lambda1"].get<double>();
    if (doc.contains("lambda2")) c.lbc.lambda2 = doc["lambda2"].get<double>();
    if (doc.contains("tau")) c.lbc.tau = doc["tau"].get<double>();
    if (doc.contains("lr_theta")) c.lbc.lr_theta = doc["lr_theta"].get<double>();
    if (doc.contains("lr_phi")) c.lbc.lr_phi = doc["lr_phi"].get<double>();
    if (doc.contains("sharpness")) c.lbc.sharpness = doc["sharpness"].get<double>();
    if (doc.contains("hidden")) {
      c.lbc.hidden = doc["hidden"].get<std::vector<Index>>();
      c.baseline.hidden = c.lbc.hidden;
    }
    if (doc.contains("full_batch_limit")) {
      c.lbc.full_batch_limit = doc["full_batch_limit"].get<Index>();
      c.baseline.full_batch_limit = c.lbc.full_batch_limit;
    }
    if (doc.contains("minibatch")) {
      c.lbc.minibatch = doc["minibatch"].get<Index>();
      c.baseline.minibatch = c.lbc.minibatch;
    }
    if (doc.contains("pretrain_iterations")) c.lbc.pretrain_iterations = doc["pretrain_iterations"].get<std::size_t>();
    if (doc.contains("pretrain_lr")) c.lbc.pretrain_lr = doc["pretrain_lr"].get<double>();
    if (doc.contains("eval_every")) c.lbc.eval_every = doc["eval_every"].get<std::size_t>();
    if (doc.contains("baseline_lr")) c.baseline.learning_rate = doc["baseline_lr"].get<double>();
    if (doc.contains("dropout")) c.baseline.dropout = doc["dropout"].get<double>();
    if (doc.contains("mc_passes")) c.baseline.mc_passes = doc["mc_passes"].get<std::size_t>();
    if (doc.contains("log_variance_floor")) c.baseline.log_variance_floor = doc["log_variance_floor"].get<double>();
    if (doc.contains("out")) c.out = doc["out"].get<std::string>();
    if (doc.contains("jobs")) c.jobs = doc["jobs"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad configuration value: ") + e.what());
  }
}

std::uint64_t fold_seed(std::uint64_t run_seed, int fold) {
  return derive_seed(run_seed, 1000 + static_cast<std::uint64_t>(fold));
}

namespace {

std::vector<Index> level_columns(const std::vector<double>& trained, const CalibrationLevels& wanted) {
  std::vector<Index> cols;
  for (double a : wanted.values()) {
    Index found = -1;
    for (std::size_t j = 0; j < trained.size(); ++j) {
      if (std::abs(trained[j] - a) < 1e-12) found = static_cast<Index>(j);
    }
    if (found < 0) {
      throw std::invalid_argument("level " + format_number(a) + " was not trained by the width model");
    }
    cols.push_back(found);
  }
  return cols;
}

}  // namespace

IntervalPrediction FittedModel::predict_standardized(const MatrixD& x_std,
                                                     const CalibrationLevels& levels) const {
  switch (method) {
    case Method::kLbc: {
      if (!width_model) throw std::logic_error("lbc model without a width network");
      const CalibrationLevels trained(this->levels);
      const IntervalPrediction full = predict_intervals(model, *width_model, x_std, trained);
      IntervalPrediction out;
      out.mean = full.mean;
      const auto cols = level_columns(this->levels, levels);
      out.widths.resize(full.widths.rows(), static_cast<Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) out.widths.col(static_cast<Index>(j)) = full.widths.col(cols[j]);
      return out;
    }
    case Method::kMse: {
      GaussianPrediction g;
      g.mean = forward(model, x_std).col(0);
      g.std = VectorD::Constant(x_std.rows(), residual_std);
      return gaussian_intervals(g, levels);
    }
    case Method::kHnn:
      return gaussian_intervals(predict_hnn(model, x_std, log_variance_floor), levels);
    case Method::kMcDropout:
      return gaussian_intervals(predict_mc_dropout(model, x_std, mc_passes, mc_seed), levels);
  }
  throw std::logic_error("unknown method");
}

IntervalPrediction FittedModel::predict(const MatrixD& x_raw, const CalibrationLevels& levels) const {
  IntervalPrediction pred = predict_standardized(standardize_features(x_raw, stats), levels);
  pred.mean = unstandardize_targets(pred.mean, stats);
  pred.widths = unstandardize_scale(pred.widths, stats);
  return pred;
}

FoldOutcome run_fold(const Dataset& raw, const RunConfig& config, int fold,
                     const std::vector<Index>& train_rows, const std::vector<Index>& test_rows) {
  const Dataset train_raw = subset(raw, train_rows);
  const Dataset test_raw = subset(raw, test_rows);
  const StandardizedData data = standardize(train_raw, {test_raw});
  const CalibrationLevels levels(config.levels);
  const std::uint64_t seed = fold_seed(config.seed, fold);

  FoldOutcome outcome;
  outcome.fold = fold;
  outcome.train_indices = train_rows;
  outcome.test_indices = test_rows;
  FittedModel& fitted = outcome.fitted;
  fitted.method = config.method;
  fitted.stats = data.stats;
  fitted.levels = config.levels;
  fitted.log_variance_floor = config.baseline.log_variance_floor;
  fitted.mc_passes = config.baseline.mc_passes;
  fitted.mc_seed = derive_seed(seed, 7);

  BaselineConfig baseline = config.baseline;
  baseline.seed = seed;
  switch (config.method) {
    case Method::kLbc: {
      LbcConfig lbc = config.lbc;
      lbc.seed = seed;
      LbcResult result = train_lbc(data.train, lbc, levels, &data.others[0]);
      fitted.model = std::move(result.mean_model);
      fitted.width_model = std::move(result.width_model);
      outcome.history_csv = history_to_csv(result.history);
      break;
    }
    case Method::kMse: {
      TrainedBaseline result = train_mse(data.train, baseline);
      const VectorD fit = forward(result.model, data.train.features).col(0);
      fitted.residual_std = std::sqrt((fit - data.train.targets).squaredNorm() /
                                      static_cast<double>(data.train.size()));
      fitted.model = std::move(result.model);
      outcome.history_csv = loss_history_to_csv(result.loss_history);
      break;
    }
    case Method::kHnn: {
      TrainedBaseline result = train_hnn(data.train, baseline);
      fitted.model = std::move(result.model);
      outcome.history_csv = loss_history_to_csv(result.loss_history);
      break;
    }
    case Method::kMcDropout: {
      TrainedBaseline result = train_mc_dropout(data.train, baseline);
      fitted.model = std::move(result.model);
      outcome.history_csv = loss_history_to_csv(result.loss_history);
      break;
    }
  }
  outcome.report = ece(test_raw.targets, fitted.predict(test_raw.features, levels), levels);
  return outcome;
}

std::vector<FoldRows> fold_rows(Index n, const RunConfig& config) {
  const SplitPlan plan = make_splits(n, config.test_fraction, config.folds, config.seed);
  std::vector<FoldRows> out;
  if (config.folds == 1) {
    out.push_back({plan.train_indices, plan.test_indices});
  } else {
    for (int k = 0; k < config.folds; ++k) out.push_back({plan.fold_train(k), plan.fold_test(k)});
  }
  return out;
}

RunSummary summarize(const std::string& method, const std::vector<double>& levels,
                     const std::vector<CalibrationReport>& folds) {
  RunSummary s;
  s.method = method;
  s.levels = levels;
  s.folds = folds;
  auto stat = [&](auto field) {
    MetricSummary m;
    const double n = static_cast<double>(folds.size());
    for (const auto& r : folds) m.mean += field(r);
    m.mean /= n;
    if (folds.size() > 1) {
      double ss = 0.0;
      for (const auto& r : folds) ss += (field(r) - m.mean) * (field(r) - m.mean);
      m.std = std::sqrt(ss / (n - 1.0));
    }
    return m;
  };
  if (!folds.empty()) {
    s.rmse = stat([](const CalibrationReport& r) { return r.rmse; });
    s.ece_mean = stat([](const CalibrationReport& r) { return r.ece_mean; });
    s.ece_sum = stat([](const CalibrationReport& r) { return r.ece_sum; });
  }
  return s;
}

nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t k = 0; k < s.folds.size(); ++k) {
    nlohmann::json f = to_json(s.folds[k]);
    f["fold"] = k;
    folds.push_back(std::move(f));
  }
  auto metric = [](const MetricSummary& m) { return nlohmann::json{{"mean", m.mean}, {"std", m.std}}; };
  return {
      {"method", s.method},
      {"levels", s.levels},
      {"folds", folds},
      {"rmse", metric(s.rmse)},
      {"ece_mean", metric(s.ece_mean)},
      {"ece_sum", metric(s.ece_sum)},
  };
}

RunSummary summary_from_json(const nlohmann::json& doc) {
  std::vector<CalibrationReport> folds;
  for (const auto& f : doc.at("folds")) folds.push_back(report_from_json(f));
  RunSummary s = summarize(doc.at("method").get<std::string>(), doc.at("levels").get<std::vector<double>>(), folds);
  s.rmse = {doc.at("rmse").at("mean").get<double>(), doc.at("rmse").at("std").get<double>()};
  s.ece_mean = {doc.at("ece_mean").at("mean").get<double>(), doc.at("ece_mean").at("std").get<double>()};
  s.ece_sum = {doc.at("ece_sum").at("mean").get<double>(), doc.at("ece_sum").at("std").get<double>()};
  return s;
}

LoadResult load_dataset(const RunConfig& config) {
  CsvOptions options;
  options.delimiter = config.delimiter;
  options.has_header = config.header;
  options.target = config.target;
  options.drop_columns = config.drop_columns;
  return load_csv(config.data, options);
}

std::string dump_json(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

void save_fold(const fs::path& fold_dir, const FoldOutcome& outcome) {
  const FittedModel& f = outcome.fitted;
  nlohmann::json meta = {
      {"fold", outcome.fold},
      {"method", method_name(f.method)},
      {"train_indices", outcome.train_indices},
      {"test_indices", outcome.test_indices},
      {"standardization", to_json(f.stats)},
      {"levels", f.levels},
      {"residual_std", f.residual_std},
      {"log_variance_floor", f.log_variance_floor},
      {"mc_passes", f.mc_passes},
      {"mc_seed", f.mc_seed},
  };
  write_file_atomic(fold_dir / "fold.json", dump_json(meta));
  const std::string method = method_name(f.method);
  if (f.method == Method::kLbc) {
    save_checkpoint(fold_dir / "model_mean.json", {f.model, method, "mean"});
    save_checkpoint(fold_dir / "model_width.json", {*f.width_model, method, "width"});
  } else {
    save_checkpoint(fold_dir / "model.json", {f.model, method, f.method == Method::kHnn ? "gaussian" : "mean"});
  }
  write_file_atomic(fold_dir / "history.csv", outcome.history_csv);
  write_file_atomic(fold_dir / "report.json", dump_json(to_json(outcome.report)));
}

FittedModel load_fitted(const fs::path& fold_dir, std::vector<Index>* train_rows,
                        std::vector<Index>* test_rows) {
  const nlohmann::json meta = nlohmann::json::parse(read_file(fold_dir / "fold.json"));
  FittedModel f;
  f.method = parse_method(meta.at("method").get<std::string>());
  f.stats = standardization_from_json(meta.at("standardization"));
  f.levels = meta.at("levels").get<std::vector<double>>();
  f.residual_std = meta.at("residual_std").get<double>();
  f.log_variance_floor = meta.at("log_variance_floor").get<double>();
  f.mc_passes = meta.at("mc_passes").get<std::size_t>();
  f.mc_seed = meta.at("mc_seed").get<std::uint64_t>();
  if (f.method == Method::kLbc) {
    f.model = load_checkpoint(fold_dir / "model_mean.json").model;
    f.width_model = load_checkpoint(fold_dir / "model_width.json").model;
  } else {
    f.model = load_checkpoint(fold_dir / "model.json").model;
  }
  if (train_rows) *train_rows = meta.at("train_indices").get<std::vector<Index>>();
  if (test_rows) *test_rows = meta.at("test_indices").get<std::vector<Index>>();
  return f;
}

RunConfig load_run_config(const fs::path& run_dir) {
  RunConfig config;
  merge_json(config, nlohmann::json::parse(read_file(run_dir / "config.json")));
  return config;
}

int count_folds(const fs::path& run_dir) {
  int k = 0;
  while (fs::exists(run_dir / ("fold_" + std::to_string(k)) / "fold.json")) ++k;
  return k;
}

RunSummary train_run(const RunConfig& config, const fs::path& out_dir) {
  const auto problems = config.problems();
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
  const LoadResult loaded = load_dataset(config);
  const Dataset& raw = loaded.dataset;
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "config.json", dump_json(to_json(config)));
  write_file_atomic(out_dir / "load_report.json", dump_json(to_json(loaded.report)));

  const auto folds = fold_rows(raw.size(), config);
  std::vector<CalibrationReport> reports(folds.size());
  auto run_one = [&](std::size_t k) {
    try {
      FoldOutcome outcome = run_fold(raw, config, static_cast<int>(k), folds[k].train, folds[k].test);
      save_fold(out_dir / ("fold_" + std::to_string(k)), outcome);
      reports[k] = outcome.report;
    } catch (const DivergenceError& e) {
      throw std::runtime_error("fold " + std::to_string(k) + ": " + e.what());
    }
  };
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, config.jobs));
  for (std::size_t start = 0; start < folds.size(); start += jobs) {
    std::vector<std::future<void>> pending;
    for (std::size_t k = start; k < std::min(folds.size(), start + jobs); ++k) {
      pending.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_one, k));
    }
    for (auto& p : pending) p.get();
  }

  RunSummary summary = summarize(method_name(config.method), config.levels, reports);
  write_file_atomic(out_dir / "summary.json", dump_json(to_json(summary)));
  return summary;
}

RunSummary evaluate_run(const fs::path& run_dir, const Dataset& data) {
  const RunConfig config = load_run_config(run_dir);
  const CalibrationLevels levels(config.levels);
  const int n_folds = count_folds(run_dir);
  if (n_folds == 0) throw DataError("no trained folds in " + run_dir.string());
  std::vector<CalibrationReport> reports;
  for (int k = 0; k < n_folds; ++k) {
    std::vector<Index> test_rows;
    const FittedModel fitted = load_fitted(run_dir / ("fold_" + std::to_string(k)), nullptr, &test_rows);
    const Dataset test = subset(data, test_rows);
    reports.push_back(ece(test.targets, fitted.predict(test.features, levels), levels));
  }
  return summarize(method_name(config.method), config.levels, reports);
}

PooledPredictions pooled_test_predictions(const fs::path& run_dir, const Dataset& data,
                                          const CalibrationLevels& levels) {
  const int n_folds = count_folds(run_dir);
  if (n_folds == 0) throw DataError("no trained folds in " + run_dir.string());
  std::vector<VectorD> ys, means;
  std::vector<MatrixD> widths;
  Index total = 0;
  for (int k = 0; k < n_folds; ++k) {
    std::vector<Index> test_rows;
    const FittedModel fitted = load_fitted(run_dir / ("fold_" + std::to_string(k)), nullptr, &test_rows);
    const Dataset test = subset(data, test_rows);
    const IntervalPrediction pred = fitted.predict(test.features, levels);
    ys.push_back(test.targets);
    means.push_back(pred.mean);
    widths.push_back(pred.widths);
    total += test.size();
  }
  PooledPredictions pooled;
  pooled.y.resize(total);
  pooled.prediction.mean.resize(total);
  pooled.prediction.widths.resize(total, static_cast<Index>(levels.size()));
  Index row = 0;
  for (std::size_t k = 0; k < ys.size(); ++k) {
    const Index n = ys[k].size();
    pooled.y.segment(row, n) = ys[k];
    pooled.prediction.mean.segment(row, n) = means[k];
    pooled.prediction.widths.middleRows(row, n) = widths[k];
    row += n;
  }
  return pooled;
}

namespace {

std::string pm(const MetricSummary& m) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f ± %.4f", m.mean, m.std);
  return buf;
}

}  // namespace

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "method,rmse_mean,rmse_std,ece_mean_mean,ece_mean_std,ece_sum_mean,ece_sum_std,error\n";
  for (const auto& r : rows) {
    out << r.method;
    if (r.summary) {
      for (const auto* m : {&r.summary->rmse, &r.summary->ece_mean, &r.summary->ece_sum}) {
        out << ',' << format_number(m->mean) << ',' << format_number(m->std);
      }
      out << ",\n";
    } else {
      std::string err = r.error;
      for (char& c : err) {
        if (c == '"') c = '\'';
        if (c == '\n') c = ' ';
      }
      out << ",,,,,,,\"" << err << "\"\n";
    }
  }
  return out.str();
}

std::string comparison_markdown(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "| Method | RMSE | ECE (mean) | ECE (sum) |\n";
  out << "|---|---|---|---|\n";
  for (const auto& r : rows) {
    if (r.summary) {
      out << "| " << r.method << " | " << pm(r.summary->rmse) << " | " << pm(r.summary->ece_mean) << " | "
          << pm(r.summary->ece_sum) << " |\n";
    } else {
      std::string err = r.error;
      for (char& c : err) {
        if (c == '|' || c == '\n') c = ' ';
      }
      out << "| " << r.method << " | failed: " << err << " | failed | failed |\n";
    }
  }
  return out.str();
}

nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"method", r.method}};
    if (r.summary) {
      row["rmse"] = {{"mean", r.summary->rmse.mean}, {"std", r.summary->rmse.std}};
      row["ece_mean"] = {{"mean", r.summary->ece_mean.mean}, {"std", r.summary->ece_mean.std}};
      row["ece_sum"] = {{"mean", r.summary->ece_sum.mean}, {"std", r.summary->ece_sum.std}};
    } else {
      row["error"] = r.error;
    }
    out.push_back(std::move(row));
  }
  return {{"methods", out}};
}

}  // namespace lbc
