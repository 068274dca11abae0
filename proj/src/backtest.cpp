#include "mesofolio/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mesofolio/parallel.hpp"
#include "mesofolio/rng.hpp"
#include "mesofolio/spectral.hpp"

namespace mesofolio {

Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    // linear interpolation between order statistics
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  s.min = values.front();
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  double acc = 0.0;
  for (double v : values) acc += v;
  s.mean = acc / static_cast<double>(values.size());
  return s;
}

double predicted_risk(const WeightVector& w, const Eigen::MatrixXd& sigma_in) {
  if (w.weights.size() != sigma_in.rows())
    throw std::invalid_argument("weights and covariance dimensions differ");
  double var = w.weights.dot(sigma_in * w.weights);
  if (var < 0.0) {
    if (var < -1e-10)
      throw std::runtime_error("predicted variance is negative beyond tolerance");
    var = 0.0;
  }
  return std::sqrt(var);
}

double realized_risk(const WeightVector& w, const ReturnPanel& raw_out) {
  if (w.weights.size() != raw_out.n_assets())
    throw std::invalid_argument("weights and panel dimensions differ");
  if (raw_out.n_obs() < 2)
    throw std::invalid_argument("out-of-sample window shorter than 2 observations");
  const Eigen::VectorXd series = raw_out.returns * w.weights;
  const double mean = series.mean();
  return std::sqrt((series.array() - mean).square().sum() /
                   static_cast<double>(series.size() - 1));
}

namespace {

struct CellKey {
  int window;
  int size_idx;
  int draw;
};

WeightVector solve_strategy(const StrategySpec& spec, const ReturnPanel& raw_in,
                            const Decomposition& dec, const BacktestOptions& opts,
                            std::uint64_t louvain_seed, CovarianceInput* used_cov) {
  CovOptions cov_opts = opts.cov;
  const Eigen::Index n = raw_in.n_assets();

  if (spec.name == Strategy::Equal) {
    *used_cov = make_covariance(raw_in, dec, CovSource::Empirical, cov_opts);
    WeightVector w = equal_weights(n);
    w.short_allowed = !spec.no_short;
    return w;
  }

  CovSource source = CovSource::Empirical;
  if (spec.name == Strategy::Rmt) source = CovSource::RmtNoiseFree;
  if (spec.name == Strategy::Mesoscopic || spec.name == Strategy::Community)
    source = CovSource::Mesoscopic;

  if (spec.name == Strategy::Community) {
    LouvainOptions louvain = opts.louvain;
    louvain.seed = louvain_seed;
    const Partition partition = detect_communities(dec, louvain);
    *used_cov = make_covariance(raw_in, dec, source, cov_opts);
    Eigen::VectorXd mu;
    const double* target = spec.target_return ? &*spec.target_return : nullptr;
    if (target) mu = mean_vector(raw_in);
    return community_gmv(*used_cov, partition, target ? &mu : nullptr, target, spec.no_short,
                         nullptr, opts.qp);
  }

  *used_cov = make_covariance(raw_in, dec, source, cov_opts);
  Eigen::VectorXd mu;
  const double* target = spec.target_return ? &*spec.target_return : nullptr;
  if (target) mu = mean_vector(raw_in);
  WeightVector w =
      solve_constrained(*used_cov, target ? &mu : nullptr, target, spec.no_short, nullptr,
                        opts.qp);
  w.strategy = spec.name;
  return w;
}

}  // namespace

BacktestReport run_backtest(const ReturnPanel& raw, const std::vector<BacktestWindow>& windows,
                            const std::vector<StrategySpec>& strategies,
                            const BacktestSubsampling& subsampling,
                            const BacktestOptions& opts) {
  if (windows.empty()) throw std::invalid_argument("no backtest windows");
  if (strategies.empty()) throw std::invalid_argument("no strategies");
  if (raw.standardized)
    throw std::invalid_argument("run_backtest expects raw (non-standardized) returns");

  std::vector<Eigen::Index> sizes = subsampling.sizes;
  if (sizes.empty()) sizes.push_back(raw.n_assets());
  const int draws = std::max(subsampling.draws, 1);
  for (const auto& w : windows)
    for (Eigen::Index s : sizes)
      if (w.delta <= s)
        throw std::invalid_argument("in-sample window of length " + std::to_string(w.delta) +
                                    " violates kappa > 1 for subsample size " +
                                    std::to_string(s));

  const auto n_windows = static_cast<int>(windows.size());
  const auto n_sizes = static_cast<int>(sizes.size());
  const auto n_strat = static_cast<int>(strategies.size());
  const std::ptrdiff_t n_cells =
      static_cast<std::ptrdiff_t>(n_windows) * n_sizes * draws;

  BacktestReport report;
  report.seed = subsampling.seed;
  report.rows.resize(static_cast<std::size_t>(n_cells) * n_strat);

  par::parallel_for(n_cells, [&](std::ptrdiff_t cell) {
    const int w_idx = static_cast<int>(cell / (n_sizes * draws));
    const int s_idx = static_cast<int>((cell / draws) % n_sizes);
    const int d_idx = static_cast<int>(cell % draws);
    const BacktestWindow& win = windows[static_cast<std::size_t>(w_idx)];
    const Eigen::Index size = sizes[static_cast<std::size_t>(s_idx)];

    auto row_base = static_cast<std::size_t>(cell) * n_strat;
    auto fill_error = [&](const std::string& msg) {
      for (int k = 0; k < n_strat; ++k) {
        auto& row = report.rows[row_base + static_cast<std::size_t>(k)];
        row.window = w_idx;
        row.size = size;
        row.draw = d_idx;
        row.strategy = strategies[static_cast<std::size_t>(k)].name;
        row.target_return = strategies[static_cast<std::size_t>(k)].target_return;
        row.error = msg;
      }
    };

    std::vector<Eigen::Index> idx(static_cast<std::size_t>(raw.n_assets()));
    ReturnPanel raw_in, raw_out;
    Decomposition dec;
    try {
      ReturnPanel in_full = slice_window(raw, {win.t0, win.delta, WindowMode::InSample});
      ReturnPanel out_full = slice_window(raw, {win.t0, win.delta, WindowMode::OutOfSample});
      if (size < raw.n_assets()) {
        const auto sets = subsample_indices(
            raw.n_assets(), size, d_idx + 1,
            mix_seed(subsampling.seed, static_cast<std::uint64_t>(w_idx),
                     static_cast<std::uint64_t>(s_idx)));
        idx = sets[static_cast<std::size_t>(d_idx)];
        raw_in = select_assets(in_full, idx);
        raw_out = select_assets(out_full, idx);
      } else {
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        raw_in = std::move(in_full);
        raw_out = std::move(out_full);
      }
      const ReturnPanel std_in = standardize(raw_in);
      const Eigen::MatrixXd corr = correlation_matrix(std_in);
      dec = decompose(corr, mp_bounds(size, win.delta), opts.decompose);
    } catch (const std::exception& e) {
      fill_error(e.what());
      return;
    }

    for (int k = 0; k < n_strat; ++k) {
      auto& row = report.rows[row_base + static_cast<std::size_t>(k)];
      const auto& spec = strategies[static_cast<std::size_t>(k)];
      row.window = w_idx;
      row.size = size;
      row.draw = d_idx;
      row.strategy = spec.name;
      row.target_return = spec.target_return;
      row.asset_indices = idx;
      try {
        CovarianceInput used_cov;
        const std::uint64_t louvain_seed =
            mix_seed(subsampling.seed, static_cast<std::uint64_t>(w_idx),
                     static_cast<std::uint64_t>(s_idx),
                     static_cast<std::uint64_t>(d_idx) * 8 + static_cast<std::uint64_t>(k));
        WeightVector w = solve_strategy(spec, raw_in, dec, opts, louvain_seed, &used_cov);

        const Eigen::MatrixXd* prediction_sigma = &used_cov.sigma;
        CovarianceInput empirical;
        if (opts.predict_with_empirical && used_cov.source != CovSource::Empirical) {
          empirical = make_covariance(raw_in, dec, CovSource::Empirical, opts.cov);
          prediction_sigma = &empirical.sigma;
          row.cov_source = to_string(CovSource::Empirical);
        } else {
          row.cov_source = to_string(used_cov.source);
        }
        row.predicted_risk = predicted_risk(w, *prediction_sigma);
        row.realized_risk = realized_risk(w, raw_out);
        if (row.predicted_risk <= 0.0)
          throw std::runtime_error("predicted risk is zero; reliability undefined");
        row.reliability = std::abs(row.realized_risk - row.predicted_risk) / row.predicted_risk;
        row.effective_size = effective_size(w);
        row.weights = std::move(w.weights);
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  });

  // aggregates over draws per (strategy, window, size); report order follows
  // the canonical row order
  std::map<std::tuple<int, int, Eigen::Index>, BacktestAggregate> agg;
  std::map<int, std::vector<double>> reliabilities;
  for (const auto& row : report.rows) {
    auto key = std::make_tuple(static_cast<int>(row.strategy), row.window, row.size);
    auto& a = agg[key];
    a.strategy = row.strategy;
    a.window = row.window;
    a.size = row.size;
    if (row.ok()) {
      a.mean_reliability += row.reliability;
      a.mean_effective_size += row.effective_size;
      ++a.rows;
      reliabilities[static_cast<int>(row.strategy)].push_back(row.reliability);
    } else {
      ++a.failures;
    }
  }
  for (auto& [key, a] : agg) {
    if (a.rows > 0) {
      a.mean_reliability /= static_cast<double>(a.rows);
      a.mean_effective_size /= static_cast<double>(a.rows);
    }
    report.aggregates.push_back(a);
  }
  for (auto& [strategy, values] : reliabilities)
    report.overall.emplace_back(static_cast<Strategy>(strategy), summarize(std::move(values)));
  return report;
}

FrontierReliability frontier_reliability(const ReturnPanel& raw, const BacktestWindow& window,
                                         const StrategySpec& strategy, int n_targets,
                                         TargetMode mode, const BacktestOptions& opts) {
  if (n_targets < 1) throw std::invalid_argument("need at least one frontier target");
  const ReturnPanel raw_in = slice_window(raw, {window.t0, window.delta, WindowMode::InSample});
  const ReturnPanel raw_out =
      slice_window(raw, {window.t0, window.delta, WindowMode::OutOfSample});
  if (window.delta <= raw.n_assets())
    throw std::invalid_argument("in-sample window violates kappa > 1");
  const ReturnPanel std_in = standardize(raw_in);
  const Decomposition dec = decompose(correlation_matrix(std_in),
                                      mp_bounds(raw.n_assets(), window.delta), opts.decompose);
  const Eigen::VectorXd mu = mean_vector(raw_in);

  std::vector<double> targets;
  std::vector<double> sorted(mu.data(), mu.data() + mu.size());
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k < n_targets; ++k) {
    if (mode == TargetMode::Uniform) {
      const double frac = n_targets == 1 ? 0.5
                                         : static_cast<double>(k) /
                                               static_cast<double>(n_targets - 1);
      targets.push_back(sorted.front() + frac * (sorted.back() - sorted.front()));
    } else {
      // evenly spaced quantiles of the in-sample mean-return distribution
      const double q = (static_cast<double>(k) + 1.0) / (static_cast<double>(n_targets) + 1.0);
      const double pos = q * static_cast<double>(sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = static_cast<std::size_t>(std::ceil(pos));
      targets.push_back(sorted[lo] * (1.0 - (pos - std::floor(pos))) +
                        sorted[hi] * (pos - std::floor(pos)));
    }
  }

  FrontierReliability out;
  out.targets.resize(targets.size());
  par::parallel_for(static_cast<std::ptrdiff_t>(targets.size()), [&](std::ptrdiff_t k) {
    auto& row = out.targets[static_cast<std::size_t>(k)];
    row.target = targets[static_cast<std::size_t>(k)];
    try {
      StrategySpec spec = strategy;
      spec.target_return = row.target;
      CovarianceInput used_cov;
      WeightVector w = solve_strategy(spec, raw_in, dec, opts,
                                      mix_seed(0, static_cast<std::uint64_t>(k)), &used_cov);
      row.predicted_risk = predicted_risk(w, used_cov.sigma);
      row.realized_risk = realized_risk(w, raw_out);
      if (row.predicted_risk <= 0.0)
        throw std::runtime_error("predicted risk is zero; reliability undefined");
      row.reliability = std::abs(row.realized_risk - row.predicted_risk) / row.predicted_risk;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  std::vector<double> ok_values;
  for (const auto& row : out.targets) {
    if (row.ok()) ok_values.push_back(row.reliability);
    else ++out.infeasible;
  }
  out.summary = summarize(std::move(ok_values));
  return out;
}

WeightComparison weight_comparison(const std::vector<WeightVector>& weights) {
  if (weights.empty()) throw std::invalid_argument("no weight vectors to compare");
  const Eigen::Index n = weights.front().weights.size();
  for (const auto& w : weights)
    if (w.weights.size() != n)
      throw std::invalid_argument("weight vectors cover different universes");
  const auto m = static_cast<Eigen::Index>(weights.size());
  WeightComparison cmp;
  cmp.l1 = Eigen::MatrixXd::Zero(m, m);
  cmp.to_equal.resize(m);
  cmp.effective_size.resize(m);
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& wi = weights[static_cast<std::size_t>(i)];
    cmp.strategies.push_back(wi.strategy);
    cmp.to_equal(i) = (wi.weights - uniform).cwiseAbs().sum();
    cmp.effective_size(i) = effective_size(wi);
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double d =
          (wi.weights - weights[static_cast<std::size_t>(j)].weights).cwiseAbs().sum();
      cmp.l1(i, j) = cmp.l1(j, i) = d;
    }
  }
  return cmp;
}

}  // namespace mesofolio
