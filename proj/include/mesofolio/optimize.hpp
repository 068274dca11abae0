#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "mesofolio/community.hpp"
#include "mesofolio/spectral.hpp"

namespace mesofolio {

enum class CovSource { Empirical, RmtNoiseFree, Mesoscopic, BlockAveraged };

std::string to_string(CovSource source);

struct CovOptions {
  /// Keep the component's own diagonal (times sigma_i^2) instead of the
  /// empirical per-asset variances.
  bool raw_diagonal = false;
  double ridge_condition_threshold = 1e12;
  double ridge_scale = 1e-10;  // ridge = ridge_scale * trace / N
  const Partition* partition = nullptr;  // required for BlockAveraged
  bool block_average_include_diagonal = false;
};

/// Covariance assembled from a correlation component:
/// sigma_ij = C^(f)_ij * s_i * s_j off-diagonal, with the empirical per-asset
/// variances s_i^2 on the diagonal (unless raw_diagonal). A ridge is added
/// when the condition number exceeds the threshold.
struct CovarianceInput {
  Eigen::MatrixXd sigma;
  CovSource source = CovSource::Empirical;
  bool ridge_applied = false;
  double ridge = 0.0;
};

/// `raw` must be the (non-standardized) panel the decomposition was
/// estimated from; it supplies the per-asset volatilities.
CovarianceInput make_covariance(const ReturnPanel& raw, const Decomposition& dec,
                                CovSource source, const CovOptions& opts = {});

enum class Strategy { Equal, Markowitz, Rmt, Mesoscopic, Community };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

/// Full-investment allocation: weights sum to 1; nonnegative when
/// short_allowed is false.
struct WeightVector {
  Eigen::VectorXd weights;
  Strategy strategy = Strategy::Markowitz;
  bool short_allowed = true;
  std::optional<double> target_return;
};

WeightVector equal_weights(Eigen::Index n);

struct GmvOptions {
  double condition_threshold = 1e12;
};

/// Global minimum variance weights sigma^{-1} 1 / (1' sigma^{-1} 1).
/// Throws std::runtime_error on singular or ill-conditioned input.
WeightVector gmv(const CovarianceInput& cov, const GmvOptions& opts = {});

struct FrontierPoint {
  double target_return = 0.0;
  WeightVector weights;
  double predicted_variance = 0.0;
  /// Set when the frontier system was degenerate (all expected returns
  /// equal) and the GMV solution was returned instead.
  bool degenerate_fallback = false;
};

/// Minimum-variance weights for a target expected return, from the two-fund
/// closed form.
FrontierPoint frontier_point(const CovarianceInput& cov, const Eigen::VectorXd& mu,
                             double target, const GmvOptions& opts = {});

struct QpDiagnostics {
  double stationarity = 0.0;        // inf-norm of the KKT gradient residual
  double constraint_violation = 0.0;  // inf-norm over equality constraints
  double min_weight = 0.0;
  double min_multiplier = 0.0;  // most negative bound multiplier at exit
  int iterations = 0;
  bool converged = false;
};

struct QpOptions {
  int max_iterations_per_var = 100;
  double kkt_tolerance = 1e-8;
};

/// min w' sigma w  s.t. sum w = 1 [, mu'w = target] [, w >= 0].
/// The long-only case runs a primal active-set iteration warm-started from
/// the projection of the unconstrained solution. Throws on infeasible
/// targets and on non-convergence within the iteration cap.
WeightVector solve_constrained(const CovarianceInput& cov, const Eigen::VectorXd* mu,
                               const double* target, bool no_short,
                               QpDiagnostics* diag = nullptr, const QpOptions& opts = {});

/// Minimum variance with equal weights inside each community. Solves the
/// reduced n-community problem (block sums of sigma, budget sum_c N_c w_c = 1,
/// community-average return targets) and expands back to per-asset weights.
WeightVector community_gmv(const CovarianceInput& sigma_g, const Partition& partition,
                           const Eigen::VectorXd* mu = nullptr,
                           const double* target = nullptr, bool no_short = false,
                           QpDiagnostics* diag = nullptr, const QpOptions& opts = {});

/// Inverse participation ratio 1 / sum_i w_i^2.
double effective_size(const WeightVector& w);

/// GMV contributions of the random/mesoscopic/market eigenvalue supports:
/// sigma^{-1} is split through per-component diagonal pseudo-inverses of its
/// own eigensystem, classifying eigenvalues by spectral rank as in `dec`.
/// The three vectors sum to the GMV weights.
struct GmvSplit {
  Eigen::VectorXd random;
  Eigen::VectorXd meso;
  Eigen::VectorXd market;
};

GmvSplit gmv_spectral_split(const CovarianceInput& cov, const Decomposition& dec);

/// Two-asset minimum-variance diagnostics: optimal weight on asset 1 under
/// the empirical correlation, under the mesoscopic correlation, and their
/// difference. Throws on a degenerate denominator (perfect correlation with
/// equal variances).
struct TwoAssetShift {
  double w1_star = 0.0;
  double w1_adjusted = 0.0;
  double delta = 0.0;
};

TwoAssetShift two_asset_shift(double sigma1, double sigma2, double c12_empirical,
                              double c12_mesoscopic);

}  // namespace mesofolio
