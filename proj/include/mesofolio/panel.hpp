#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mesofolio {

/// Aligned panel of positive adjusted close prices, one column per asset.
struct PricePanel {
  std::vector<std::string> dates;   // strictly increasing ISO-8601
  std::vector<std::string> assets;  // unique tickers, one per column
  Eigen::MatrixXd prices;           // [T_raw x N], strictly positive
  std::map<std::string, std::string> sectors;  // optional asset -> sector

  Eigen::Index n_obs() const { return prices.rows(); }
  Eigen::Index n_assets() const { return prices.cols(); }
};

/// Panel of per-asset returns. `standardized` marks per-column z-scoring
/// (sample sd, divisor T-1).
struct ReturnPanel {
  std::vector<std::string> dates;  // length T
  std::vector<std::string> assets;
  Eigen::MatrixXd returns;  // [T x N]
  bool standardized = false;

  Eigen::Index n_obs() const { return returns.rows(); }
  Eigen::Index n_assets() const { return returns.cols(); }
};

enum class CsvLayout { Wide, Long };

enum class ReturnKind { Log, Simple };

struct LoadReport {
  struct Dropped {
    std::string asset;
    std::string reason;
    Eigen::Index missing = 0;
  };
  std::vector<Dropped> dropped;
  Eigen::Index filled_cells = 0;
};

/// Parses a price CSV (see README for the wide/long layouts). Assets whose
/// missing-cell fraction exceeds `max_missing_fraction` are dropped, as are
/// assets with an unfillable leading gap; remaining gaps are filled by
/// carrying the last observation forward.
/// Throws std::runtime_error on unreadable/unusable files and on any
/// non-positive price surviving gap filling.
PricePanel load_prices(const std::string& path, CsvLayout layout,
                       double max_missing_fraction = 0.01,
                       LoadReport* report = nullptr);

/// Attaches sector labels from a two-column CSV `asset,sector`.
void load_sectors(PricePanel& panel, const std::string& path);

/// returns[t][i] = ln(p[t+1][i] / p[t][i]); T = T_raw - 1. Requires T_raw >= 2.
ReturnPanel to_returns(const PricePanel& panel, ReturnKind kind = ReturnKind::Log);

struct StandardizeReport {
  std::vector<Eigen::Index> zero_variance;  // columns left as all zeros
};

/// Per-column z-scoring with sample mean and sample sd (divisor T-1).
/// Zero-variance columns become all zeros and are flagged. Idempotent on
/// already standardized panels up to 1e-10 per entry. Requires T >= 2.
ReturnPanel standardize(const ReturnPanel& rp, StandardizeReport* report = nullptr);

enum class WindowMode { InSample, OutOfSample };

/// Split-date window: in-sample covers observations [t0 - delta, t0),
/// out-of-sample covers [t0, t0 + delta).
struct WindowSpec {
  Eigen::Index t0 = 0;
  Eigen::Index delta = 0;
  WindowMode mode = WindowMode::InSample;
};

struct RollingSpec {
  Eigen::Index length = 0;
  Eigen::Index step = 0;
};

/// Restricts the panel to the observation range named by `spec`; the asset
/// set is unchanged. Throws std::invalid_argument on empty or out-of-range
/// windows.
ReturnPanel slice_window(const ReturnPanel& rp, const WindowSpec& spec);

/// Consecutive sub-panels [k*step, k*step + length) while they fit. With
/// step == length the windows partition the parent.
std::vector<ReturnPanel> rolling_windows(const ReturnPanel& rp, const RollingSpec& spec);

/// `draws` index sets of `size` distinct assets each, drawn uniformly without
/// replacement; sorted ascending. Reproducible from (seed, draw index).
std::vector<std::vector<Eigen::Index>> subsample_indices(Eigen::Index n_assets,
                                                         Eigen::Index size, int draws,
                                                         std::uint64_t seed);

/// Column subset of the panel in the given order.
ReturnPanel select_assets(const ReturnPanel& rp, const std::vector<Eigen::Index>& idx);

std::vector<ReturnPanel> subsample_assets(const ReturnPanel& rp, Eigen::Index size,
                                          int draws, std::uint64_t seed);

struct BlockSpec {
  Eigen::Index size = 0;
  double intra_correlation = 0.0;  // in [0, 1)
};

/// Planted-structure generator:
///   x_it = market_loading_i * m_t + b_c * g_{c(i),t} + e_it
/// with m, g, e i.i.d. standard normal, e scaled by noise_sd, and b_c chosen
/// so the within-block correlation of the block-plus-noise part equals the
/// block's intra_correlation.
struct SyntheticSpec {
  Eigen::Index n_assets = 0;
  Eigen::Index n_obs = 0;
  std::vector<BlockSpec> blocks;   // sizes must sum to n_assets
  Eigen::VectorXd market_loading;  // length n_assets (empty means all zero)
  double noise_sd = 1.0;
};

ReturnPanel generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Row-wise concatenation; asset sets must match. Used to build
/// regime-switching panels out of per-regime draws.
ReturnPanel concat_rows(const ReturnPanel& first, const ReturnPanel& second);

/// Per-asset sample means of (raw) returns.
Eigen::VectorXd mean_vector(const ReturnPanel& rp);

/// Per-asset sample standard deviations (divisor T-1).
Eigen::VectorXd stddev_vector(const ReturnPanel& rp);

}  // namespace mesofolio
