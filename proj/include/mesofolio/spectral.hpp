#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mesofolio/panel.hpp"

namespace mesofolio {

/// Marčenko–Pastur support of the eigenvalue bulk for an N x T panel:
/// lambda_{min,max} = sigma2 * (1 -+ sqrt(N/T))^2. Requires kappa = T/N > 1.
struct MpBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double kappa = 0.0;
  double sigma2 = 1.0;
};

MpBounds mp_bounds(Eigen::Index n_assets, Eigen::Index n_obs, double sigma2 = 1.0);

/// Eigenvalues in descending order, column i of `vectors` paired with
/// values[i].
struct EigenSystem {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

EigenSystem eigen_system(const Eigen::MatrixXd& symmetric);

/// Pearson sample correlation of a standardized panel. Unit diagonal,
/// symmetric. Requires rp.standardized, T >= 2 and no zero-variance column.
Eigen::MatrixXd correlation_matrix(const ReturnPanel& rp);

/// Serial reference for the OpenMP kernel above; entrywise identical output.
Eigen::MatrixXd correlation_matrix_serial(const ReturnPanel& rp);

struct DecomposeOptions {
  /// Leading eigenvalue above lambda_max is classified as market mode iff at
  /// least this fraction of its eigenvector entries share one sign.
  double sign_uniformity = 0.95;
};

/// Three-way spectral split of a correlation matrix.
///   random: eigenvalues <= lambda_max (including any below lambda_min)
///   market: the leading eigenvalue, when above lambda_max with a
///           sign-uniform eigenvector (at most one)
///   mesoscopic: the remaining eigenvalues above lambda_max
/// Components are partial spectral sums, so c = c_random + c_meso + c_market
/// exactly up to round-off.
struct Decomposition {
  Eigen::MatrixXd c;
  Eigen::MatrixXd c_random;
  Eigen::MatrixXd c_meso;
  Eigen::MatrixXd c_market;
  MpBounds bounds;
  EigenSystem eig;
  std::vector<int> random_idx;
  std::vector<int> meso_idx;
  std::vector<int> market_idx;
  /// Sign agreement of the leading eigenvector (fraction of entries on the
  /// majority sign).
  double leading_sign_agreement = 0.0;
  /// True when the leading eigenvalue exceeded lambda_max but failed the
  /// sign test and was folded into the mesoscopic set.
  bool market_candidate_rejected = false;
};

Decomposition decompose(const Eigen::MatrixXd& corr, const MpBounds& bounds,
                        const DecomposeOptions& opts = {});

/// Shares of total risk Lambda = sum_k lambda_k carried by each component.
struct RiskFractions {
  double total = 0.0;
  double random = 0.0;
  double meso = 0.0;
  double market = 0.0;
};

RiskFractions risk_fractions(const Decomposition& dec);

struct SubsampleSpec {
  Eigen::Index size = 0;
  int draws = 1;
  std::uint64_t seed = 0;
};

struct RiskFractionPoint {
  Eigen::Index start = 0;  // first observation index of the window
  Eigen::Index length = 0;
  RiskFractions mean;  // averaged over draws
  RiskFractions sd;    // across draws (sample sd; zero when draws == 1)
};

struct RiskFractionSeries {
  std::vector<RiskFractionPoint> windows;
  /// Sample sd of the per-window mean fraction, across windows.
  RiskFractions across_window_sd;
};

/// Per-window decomposition fractions averaged over asset subsamples.
/// Requires kappa > 1 for (subsample size, window length). The raw panel is
/// standardized within each window.
RiskFractionSeries risk_fraction_series(const ReturnPanel& rp, const RollingSpec& window,
                                        const SubsampleSpec& subsample,
                                        const DecomposeOptions& opts = {});

struct RelativeChangeNorm {
  double normalized = 0.0;  // (sum |d|^p / M)^(1/p) over included entries
  double raw = 0.0;         // (sum |d|^p)^(1/p)
  Eigen::Index included = 0;
  Eigen::Index excluded = 0;  // |prev| <= epsilon
};

/// Entrywise relative changes d_ij = (next_ij - prev_ij) / prev_ij over
/// entries with |prev_ij| > epsilon, aggregated as a p-norm. Throws when all
/// entries are excluded.
RelativeChangeNorm relative_change_norm(const Eigen::MatrixXd& prev,
                                        const Eigen::MatrixXd& next, double p = 1.0,
                                        double epsilon = 1e-12);

struct Partition;  // community.hpp

/// Replaces every (community(i), community(j)) block of `c_meso` with its
/// block mean. Same-community blocks exclude the matrix diagonal from the
/// average unless `include_diagonal` (singleton blocks keep their diagonal
/// entry).
Eigen::MatrixXd block_average(const Eigen::MatrixXd& c_meso, const Partition& partition,
                              bool include_diagonal = false);

}  // namespace mesofolio
