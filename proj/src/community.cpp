#include "mesofolio/community.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mesofolio/parallel.hpp"
#include "mesofolio/rng.hpp"

namespace mesofolio {

ModularityContext make_modularity_context(const Decomposition& dec) {
  ModularityContext ctx;
  ctx.b = dec.c_meso;
  ctx.norm = dec.c.sum();
  if (ctx.norm <= 0.0) {
    ctx.norm = dec.c.cwiseAbs().sum();
    ctx.abs_fallback = true;
  }
  if (!(ctx.norm > 0.0) || !std::isfinite(ctx.norm))
    throw std::invalid_argument("modularity normalizer is not positive and finite");
  return ctx;
}

double modularity_of(const ModularityContext& ctx, std::span<const int> assignment) {
  const Eigen::Index n = ctx.b.rows();
  if (static_cast<Eigen::Index>(assignment.size()) != n)
    throw std::invalid_argument("assignment does not cover all assets");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (assignment[static_cast<std::size_t>(i)] == assignment[static_cast<std::size_t>(j)])
        acc += ctx.b(i, j);
  return acc / ctx.norm;
}

Eigen::MatrixXd wcm_null(const Eigen::MatrixXd& w) {
  if (w.rows() != w.cols()) throw std::invalid_argument("wcm_null needs a square matrix");
  const Eigen::VectorXd strength = w.rowwise().sum();
  const double two_w = strength.sum();
  if (two_w == 0.0) throw std::invalid_argument("wcm_null: zero total weight");
  return (strength * strength.transpose()) / two_w;
}

namespace {

// Single-level pass of local moves. `b` is the (possibly aggregated)
// modularity matrix; gains are plain sums of b, no sign assumptions.
// Returns the un-normalized modularity gain accumulated by the moves.
double local_moves(const Eigen::MatrixXd& b, std::vector<int>& community,
                   std::mt19937_64& engine, double min_gain, int max_sweeps) {
  const Eigen::Index n = b.rows();
  const int n_slots = static_cast<int>(2 * n);  // live ids plus room for split-offs
  std::vector<Eigen::Index> comm_size(static_cast<std::size_t>(n_slots), 0);
  for (int c : community) ++comm_size[static_cast<std::size_t>(c)];

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<double> link(static_cast<std::size_t>(n_slots), 0.0);
  std::vector<int> candidates;
  candidates.reserve(static_cast<std::size_t>(n_slots));

  double total_gain = 0.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool moved = false;
    std::shuffle(order.begin(), order.end(), engine);
    for (Eigen::Index i : order) {
      const int current = community[static_cast<std::size_t>(i)];

      candidates.clear();
      for (Eigen::Index j = 0; j < n; ++j)
        link[static_cast<std::size_t>(community[static_cast<std::size_t>(j)])] += b(i, j);
      for (int c = 0; c < n_slots; ++c)
        if (comm_size[static_cast<std::size_t>(c)] > 0 && c != current) candidates.push_back(c);
      // a fresh singleton community is always a candidate when i has company
      int fresh = -1;
      if (comm_size[static_cast<std::size_t>(current)] > 1) {
        for (int c = 0; c < n_slots; ++c)
          if (comm_size[static_cast<std::size_t>(c)] == 0) {
            fresh = c;
            break;
          }
        if (fresh >= 0) candidates.push_back(fresh);
      }
      std::shuffle(candidates.begin(), candidates.end(), engine);

      const double detach = link[static_cast<std::size_t>(current)] - b(i, i);
      int chosen = -1;
      double chosen_gain = 0.0;
      for (int c : candidates) {
        const double attach = c == fresh ? 0.0 : link[static_cast<std::size_t>(c)];
        const double gain = 2.0 * (attach - detach);
        if (gain > min_gain) {
          chosen = c;
          chosen_gain = gain;
          break;  // first improvement
        }
      }
      for (Eigen::Index j = 0; j < n; ++j)
        link[static_cast<std::size_t>(community[static_cast<std::size_t>(j)])] = 0.0;
      if (fresh >= 0) link[static_cast<std::size_t>(fresh)] = 0.0;

      if (chosen >= 0) {
        --comm_size[static_cast<std::size_t>(current)];
        ++comm_size[static_cast<std::size_t>(chosen)];
        community[static_cast<std::size_t>(i)] = chosen;
        total_gain += chosen_gain;
        moved = true;
      }
    }
    if (!moved) break;
  }
  return total_gain;
}

void compact_labels(std::vector<int>& community) {
  std::map<int, int> remap;
  for (int c : community) remap.emplace(c, 0);
  int next = 0;
  for (auto& [old_id, new_id] : remap) new_id = next++;
  for (int& c : community) c = remap.at(c);
}

struct SearchResult {
  std::vector<int> assignment;
  double q = 0.0;
};

SearchResult louvain_single(const Eigen::MatrixXd& b, double norm, std::uint64_t seed,
                            const LouvainOptions& opts) {
  auto engine = make_engine(seed);
  const Eigen::Index n = b.rows();

  std::vector<int> node_to_final(static_cast<std::size_t>(n));
  std::iota(node_to_final.begin(), node_to_final.end(), 0);

  double q = b.trace() / norm;  // all-singleton start
  Eigen::MatrixXd level = b;
  while (true) {
    std::vector<int> community(static_cast<std::size_t>(level.rows()));
    std::iota(community.begin(), community.end(), 0);
    q += local_moves(level, community, engine, opts.min_gain, opts.max_sweeps) / norm;
    compact_labels(community);
    const int n_next = 1 + *std::max_element(community.begin(), community.end());
    if (n_next == static_cast<int>(level.rows())) break;

    for (int& f : node_to_final) f = community[static_cast<std::size_t>(f)];

    Eigen::MatrixXd merged = Eigen::MatrixXd::Zero(n_next, n_next);
    for (Eigen::Index i = 0; i < level.rows(); ++i)
      for (Eigen::Index j = 0; j < level.rows(); ++j)
        merged(community[static_cast<std::size_t>(i)], community[static_cast<std::size_t>(j)]) +=
            level(i, j);
    level = std::move(merged);
  }
  return {std::move(node_to_final), q};
}

void relabel_by_size(std::vector<int>& assignment, int& n_communities) {
  compact_labels(assignment);
  n_communities = assignment.empty()
                      ? 0
                      : 1 + *std::max_element(assignment.begin(), assignment.end());
  struct Info {
    Eigen::Index size = 0;
    std::size_t first = static_cast<std::size_t>(-1);
    int id = 0;
  };
  std::vector<Info> info(static_cast<std::size_t>(n_communities));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    auto& entry = info[static_cast<std::size_t>(assignment[i])];
    ++entry.size;
    entry.first = std::min(entry.first, i);
    entry.id = assignment[i];
  }
  std::sort(info.begin(), info.end(), [](const Info& a, const Info& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.first < b.first;
  });
  std::vector<int> remap(static_cast<std::size_t>(n_communities));
  for (int rank = 0; rank < n_communities; ++rank)
    remap[static_cast<std::size_t>(info[static_cast<std::size_t>(rank)].id)] = rank;
  for (int& c : assignment) c = remap[static_cast<std::size_t>(c)];
}

}  // namespace

Partition louvain_partition(const ModularityContext& ctx, const LouvainOptions& opts) {
  if (opts.restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  const Eigen::Index n = ctx.b.rows();
  if (n == 0) throw std::invalid_argument("empty modularity matrix");

  std::vector<SearchResult> results(static_cast<std::size_t>(opts.restarts));
  par::parallel_for(opts.restarts, [&](std::ptrdiff_t r) {
    results[static_cast<std::size_t>(r)] =
        louvain_single(ctx.b, ctx.norm, mix_seed(opts.seed, static_cast<std::uint64_t>(r)), opts);
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r)
    if (results[r].q > results[best].q) best = r;

  SearchResult chosen = results[best];
  // the two trivial partitions are always candidate solutions
  const double q_singletons = ctx.b.trace() / ctx.norm;
  const double q_merged = ctx.b.sum() / ctx.norm;
  if (q_singletons > chosen.q) {
    chosen.assignment.resize(static_cast<std::size_t>(n));
    std::iota(chosen.assignment.begin(), chosen.assignment.end(), 0);
    chosen.q = q_singletons;
  }
  if (q_merged > chosen.q) {
    chosen.assignment.assign(static_cast<std::size_t>(n), 0);
    chosen.q = q_merged;
  }

  Partition part;
  part.assignment = std::move(chosen.assignment);
  part.modularity = chosen.q;
  part.restarts = opts.restarts;
  part.seed = opts.seed;
  relabel_by_size(part.assignment, part.n_communities);
  return part;
}

Partition detect_communities(const Decomposition& dec, const LouvainOptions& opts) {
  if (dec.meso_idx.empty() || dec.c_meso.cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("no mesoscopic structure to cluster (empty C^(g))");
  return louvain_partition(make_modularity_context(dec), opts);
}

namespace {

std::vector<int> normalize_labels(std::span<const int> a) {
  std::vector<int> out(a.begin(), a.end());
  compact_labels(out);
  return out;
}

double choose2(double m) { return m * (m - 1.0) / 2.0; }

}  // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("partitions must cover the same nonempty asset set");
  const std::vector<int> x = normalize_labels(a);
  const std::vector<int> y = normalize_labels(b);
  const int nx = 1 + *std::max_element(x.begin(), x.end());
  const int ny = 1 + *std::max_element(y.begin(), y.end());
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(nx, ny);
  for (std::size_t i = 0; i < x.size(); ++i) table(x[i], y[i]) += 1.0;

  double sum_ij = 0.0;
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < ny; ++j) sum_ij += choose2(table(i, j));
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < nx; ++i) sum_a += choose2(table.row(i).sum());
  double sum_b = 0.0;
  for (Eigen::Index j = 0; j < ny; ++j) sum_b += choose2(table.col(j).sum());
  const double total = choose2(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) return 1.0;
  return (sum_ij - expected) / (maximum - expected);
}

double normalized_mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("partitions must cover the same nonempty asset set");
  const std::vector<int> x = normalize_labels(a);
  const std::vector<int> y = normalize_labels(b);
  const int nx = 1 + *std::max_element(x.begin(), x.end());
  const int ny = 1 + *std::max_element(y.begin(), y.end());
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(nx, ny);
  for (std::size_t i = 0; i < x.size(); ++i) table(x[i], y[i]) += 1.0;
  const double n = static_cast<double>(a.size());

  double info = 0.0, hx = 0.0, hy = 0.0;
  for (Eigen::Index i = 0; i < nx; ++i) {
    const double p = table.row(i).sum() / n;
    if (p > 0.0) hx -= p * std::log(p);
  }
  for (Eigen::Index j = 0; j < ny; ++j) {
    const double p = table.col(j).sum() / n;
    if (p > 0.0) hy -= p * std::log(p);
  }
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < ny; ++j) {
      const double pij = table(i, j) / n;
      if (pij > 0.0)
        info += pij * std::log(pij * n * n / (table.row(i).sum() * table.col(j).sum()));
    }
  if (hx + hy == 0.0) return 1.0;  // both trivial single-community partitions
  return 2.0 * info / (hx + hy);
}

StabilityReport partition_stability(std::span<const Partition> partitions) {
  if (partitions.empty()) throw std::invalid_argument("no partitions given");
  const std::size_t n_assets = partitions.front().assignment.size();
  for (const auto& p : partitions)
    if (p.assignment.size() != n_assets)
      throw std::invalid_argument("partitions cover different asset sets");
  const auto m = static_cast<Eigen::Index>(partitions.size());
  StabilityReport report;
  report.ari = Eigen::MatrixXd::Ones(m, m);
  report.nmi = Eigen::MatrixXd::Ones(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const auto& pi = partitions[static_cast<std::size_t>(i)].assignment;
      const auto& pj = partitions[static_cast<std::size_t>(j)].assignment;
      report.ari(i, j) = report.ari(j, i) = adjusted_rand_index(pi, pj);
      report.nmi(i, j) = report.nmi(j, i) = normalized_mutual_information(pi, pj);
    }
  return report;
}

}  // namespace mesofolio
