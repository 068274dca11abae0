#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mesofolio/backtest.hpp"
#include "mesofolio/panel.hpp"

namespace mesofolio {

/// Declarative run configuration. Every field has a default; the fully
/// resolved form is echoed next to every output for reproducibility.
struct RunConfig {
  // input
  std::string input_path;
  CsvLayout layout = CsvLayout::Wide;
  double max_missing_fraction = 0.01;
  std::string sectors_path;
  ReturnKind return_kind = ReturnKind::Log;

  // run
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string format = "both";  // json | csv | both
  int workers = 0;              // 0 = all hardware threads

  // filter
  double sign_uniformity = 0.95;
  std::optional<BacktestWindow> filter_window;  // in-sample slice; whole panel otherwise
  std::optional<RollingSpec> series_windows;
  Eigen::Index series_subsample_size = 0;  // 0 = full asset set
  int series_draws = 1;

  // communities
  int restarts = 20;

  // optimize
  std::vector<StrategySpec> optimize_strategies;
  bool raw_diagonal = false;
  double ridge_condition_threshold = 1e12;

  // backtest
  std::vector<BacktestWindow> backtest_windows;
  std::optional<RollingSpec> backtest_rolling;  // spans split at their midpoint
  std::vector<StrategySpec> backtest_strategies;
  std::vector<Eigen::Index> subsample_sizes;
  int draws = 1;
  std::optional<int> frontier_targets;
  TargetMode target_mode = TargetMode::Quantile;
  bool predict_with_empirical = false;

  // synth
  SyntheticSpec synth;
  std::string synth_emit = "prices";  // prices | returns
  double synth_start_price = 100.0;
};

RunConfig default_config();

/// Parses a config file on top of the defaults. Unknown keys are rejected.
RunConfig load_config(const std::string& path);
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);

/// Fully resolved echo of the configuration (defaults materialized).
nlohmann::json config_to_json(const RunConfig& cfg);

/// Hex FNV-1a fingerprint of the resolved config.
std::string config_hash(const RunConfig& cfg);

BacktestOptions backtest_options(const RunConfig& cfg);

}  // namespace mesofolio
