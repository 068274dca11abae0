#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "mesofolio/spectral.hpp"

namespace mesofolio {

/// Assignment of assets to communities. Ids are contiguous 0..n-1, relabeled
/// by descending community size (ties by smallest member index).
struct Partition {
  std::vector<int> assignment;  // asset index -> community id
  int n_communities = 0;
  double modularity = 0.0;  // Q of `assignment`, tracked through the search
  int restarts = 0;
  std::uint64_t seed = 0;
};

/// Modularity matrix and normalizer. For correlation input the modularity
/// matrix is the mesoscopic component and the normalizer is the entry sum of
/// the original empirical matrix; a nonpositive sum falls back to the
/// absolute-entry sum (flagged).
struct ModularityContext {
  Eigen::MatrixXd b;
  double norm = 0.0;
  bool abs_fallback = false;
};

ModularityContext make_modularity_context(const Decomposition& dec);

/// Q = (1/norm) * sum_ij b_ij * [gamma_i == gamma_j], diagonal included.
double modularity_of(const ModularityContext& ctx, std::span<const int> assignment);

/// Weighted-configuration-model expectations <w_ij> = s_i s_j / 2W.
/// Comparison baseline only; not part of the correlation pipeline.
Eigen::MatrixXd wcm_null(const Eigen::MatrixXd& w);

struct LouvainOptions {
  int restarts = 20;
  std::uint64_t seed = 0;
  double min_gain = 1e-12;  // on the un-normalized gain
  int max_sweeps = 1000;
};

/// Louvain-style modularity maximization on b = c_meso, handling negative
/// entries directly. Local moves use first improvement in shuffled order;
/// aggregation recurses on block-summed b with the original normalizer.
/// Restarts are independent (parallelized) and the best Q wins, ties going
/// to the lowest restart index. Deterministic for a fixed (seed, restarts).
/// Throws std::invalid_argument when the mesoscopic component is empty.
Partition detect_communities(const Decomposition& dec, const LouvainOptions& opts = {});

/// Same search on an explicit modularity matrix; used for oracle tests.
Partition louvain_partition(const ModularityContext& ctx, const LouvainOptions& opts);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Mutual information normalized by the mean of the two entropies.
double normalized_mutual_information(std::span<const int> a, std::span<const int> b);

struct StabilityReport {
  Eigen::MatrixXd ari;
  Eigen::MatrixXd nmi;
};

/// Pairwise partition similarity; all partitions must cover the same assets.
StabilityReport partition_stability(std::span<const Partition> partitions);

}  // namespace mesofolio
