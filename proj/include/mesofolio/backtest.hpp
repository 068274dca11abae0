#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mesofolio/optimize.hpp"
#include "mesofolio/panel.hpp"

namespace mesofolio {

struct StrategySpec {
  Strategy name = Strategy::Markowitz;
  bool no_short = false;
  std::optional<double> target_return;
};

struct BacktestWindow {
  Eigen::Index t0 = 0;     // split index: in-sample [t0-delta, t0), out [t0, t0+delta)
  Eigen::Index delta = 0;
};

struct BacktestSubsampling {
  std::vector<Eigen::Index> sizes;  // empty means the full asset set
  int draws = 1;
  std::uint64_t seed = 0;
};

struct BacktestOptions {
  /// Predict risk from the empirical covariance for every strategy instead
  /// of the strategy's own filtered matrix (sensitivity mode).
  bool predict_with_empirical = false;
  DecomposeOptions decompose;
  LouvainOptions louvain;
  QpOptions qp;
  CovOptions cov;
  GmvOptions gmv;
};

struct BacktestRow {
  int window = 0;
  Eigen::Index size = 0;
  int draw = 0;
  Strategy strategy = Strategy::Equal;
  std::optional<double> target_return;
  double predicted_risk = 0.0;
  double realized_risk = 0.0;
  double reliability = 0.0;  // |realized - predicted| / predicted
  double effective_size = 0.0;
  std::string cov_source;  // covariance variant used to optimize and predict
  Eigen::VectorXd weights;
  std::vector<Eigen::Index> asset_indices;
  std::string error;  // nonempty when the cell failed

  bool ok() const { return error.empty(); }
};

struct BacktestAggregate {
  Strategy strategy = Strategy::Equal;
  int window = 0;
  Eigen::Index size = 0;
  double mean_reliability = 0.0;
  double mean_effective_size = 0.0;
  int rows = 0;
  int failures = 0;
};

/// Five-number summary (linear-interpolation quartiles) plus the mean.
struct Summary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double mean = 0.0;
  double q3 = 0.0;
  int count = 0;
};

Summary summarize(std::vector<double> values);

struct BacktestReport {
  std::vector<BacktestRow> rows;  // canonical order: window, size, draw, strategy
  std::vector<BacktestAggregate> aggregates;        // per (strategy, window, size)
  std::vector<std::pair<Strategy, Summary>> overall;  // reliability per strategy
  std::uint64_t seed = 0;
};

/// sqrt(w' sigma w); tiny negative quadratic forms clamp to zero.
double predicted_risk(const WeightVector& w, const Eigen::MatrixXd& sigma_in);

/// Sample sd of the out-of-sample portfolio return series w'x_t under fixed
/// weights. Requires at least 2 observations.
double realized_risk(const WeightVector& w, const ReturnPanel& raw_out);

/// In-sample estimation / out-of-sample evaluation over every
/// (window x size x draw x strategy) cell. Cells are independent and run in
/// parallel; per-cell failures are recorded on the row, not thrown. The
/// result is a pure function of (inputs, seed).
BacktestReport run_backtest(const ReturnPanel& raw, const std::vector<BacktestWindow>& windows,
                            const std::vector<StrategySpec>& strategies,
                            const BacktestSubsampling& subsampling,
                            const BacktestOptions& opts = {});

enum class TargetMode { Quantile, Uniform };

struct FrontierTargetRow {
  double target = 0.0;
  double predicted_risk = 0.0;
  double realized_risk = 0.0;
  double reliability = 0.0;
  std::string error;
  bool ok() const { return error.empty(); }
};

struct FrontierReliability {
  std::vector<FrontierTargetRow> targets;
  Summary summary;  // over successful targets
  int infeasible = 0;
};

/// Reliability along the efficient frontier: `n_targets` expected-return
/// targets placed at quantiles of the in-sample asset means (or uniformly
/// across their range), one constrained solve per target.
FrontierReliability frontier_reliability(const ReturnPanel& raw, const BacktestWindow& window,
                                         const StrategySpec& strategy, int n_targets = 30,
                                         TargetMode mode = TargetMode::Quantile,
                                         const BacktestOptions& opts = {});

struct WeightComparison {
  std::vector<Strategy> strategies;
  Eigen::MatrixXd l1;              // pairwise L1 distances
  Eigen::VectorXd to_equal;        // L1 distance to the 1/N vector
  Eigen::VectorXd effective_size;
};

WeightComparison weight_comparison(const std::vector<WeightVector>& weights);

}  // namespace mesofolio
