#include "mesofolio/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mesofolio/community.hpp"
#include "mesofolio/parallel.hpp"
#include "mesofolio/rng.hpp"

namespace mesofolio {

MpBounds mp_bounds(Eigen::Index n_assets, Eigen::Index n_obs, double sigma2) {
  if (n_assets <= 0 || n_obs <= 0) throw std::invalid_argument("mp_bounds needs positive N, T");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("mp_bounds needs sigma2 > 0");
  if (n_obs <= n_assets)
    throw std::invalid_argument("mp_bounds requires kappa = T/N > 1 (got T=" +
                                std::to_string(n_obs) + ", N=" + std::to_string(n_assets) + ")");
  const double q = std::sqrt(static_cast<double>(n_assets) / static_cast<double>(n_obs));
  MpBounds b;
  b.sigma2 = sigma2;
  b.kappa = static_cast<double>(n_obs) / static_cast<double>(n_assets);
  b.lambda_min = sigma2 * (1.0 - q) * (1.0 - q);
  b.lambda_max = sigma2 * (1.0 + q) * (1.0 + q);
  return b;
}

EigenSystem eigen_system(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");
  EigenSystem sys;
  sys.values = solver.eigenvalues().reverse();
  sys.vectors = solver.eigenvectors().rowwise().reverse();
  return sys;
}

namespace {

void check_correlation_input(const ReturnPanel& rp) {
  if (!rp.standardized)
    throw std::invalid_argument("correlation_matrix expects a standardized panel");
  if (rp.n_obs() < 2) throw std::invalid_argument("correlation_matrix needs T >= 2");
  for (Eigen::Index i = 0; i < rp.n_assets(); ++i)
    if (rp.returns.col(i).squaredNorm() == 0.0)
      throw std::invalid_argument("zero-variance column " + std::to_string(i) +
                                  " in correlation input");
}

// One (i, j) entry as a plain ordered dot product so the parallel and serial
// kernels agree bitwise.
double corr_entry(const Eigen::MatrixXd& x, Eigen::Index i, Eigen::Index j, double inv_tm1) {
  double acc = 0.0;
  const Eigen::Index t_n = x.rows();
  for (Eigen::Index t = 0; t < t_n; ++t) acc += x(t, i) * x(t, j);
  return acc * inv_tm1;
}

}  // namespace

Eigen::MatrixXd correlation_matrix_serial(const ReturnPanel& rp) {
  check_correlation_input(rp);
  const Eigen::Index n = rp.n_assets();
  const double inv_tm1 = 1.0 / static_cast<double>(rp.n_obs() - 1);
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = corr_entry(rp.returns, i, j, inv_tm1);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

Eigen::MatrixXd correlation_matrix(const ReturnPanel& rp) {
  check_correlation_input(rp);
  const Eigen::Index n = rp.n_assets();
  const double inv_tm1 = 1.0 / static_cast<double>(rp.n_obs() - 1);
  Eigen::MatrixXd c(n, n);
  par::parallel_for(n, [&](std::ptrdiff_t i) {
    c(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = corr_entry(rp.returns, i, j, inv_tm1);
      c(i, j) = v;
      c(j, i) = v;
    }
  });
  return c;
}

Decomposition decompose(const Eigen::MatrixXd& corr, const MpBounds& bounds,
                        const DecomposeOptions& opts) {
  if (corr.rows() != corr.cols()) throw std::invalid_argument("decompose needs a square matrix");
  if (!corr.allFinite()) throw std::runtime_error("decompose: non-finite entries");
  const Eigen::Index n = corr.rows();

  Decomposition dec;
  dec.c = corr;
  dec.bounds = bounds;
  dec.eig = eigen_system(corr);
  if (!dec.eig.values.allFinite() || !dec.eig.vectors.allFinite())
    throw std::runtime_error("decompose: eigendecomposition produced non-finite values");

  Eigen::Index n_super = 0;
  while (n_super < n && dec.eig.values(n_super) > bounds.lambda_max) ++n_super;

  {
    const auto lead = dec.eig.vectors.col(0);
    Eigen::Index pos = 0, neg = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lead(i) > 0.0) ++pos;
      else if (lead(i) < 0.0) ++neg;
    }
    dec.leading_sign_agreement =
        static_cast<double>(std::max(pos, neg)) / static_cast<double>(n);
  }

  const bool has_market = n_super > 0 && dec.leading_sign_agreement >= opts.sign_uniformity;
  dec.market_candidate_rejected = n_super > 0 && !has_market;
  if (has_market) dec.market_idx.push_back(0);
  for (Eigen::Index k = has_market ? 1 : 0; k < n_super; ++k)
    dec.meso_idx.push_back(static_cast<int>(k));
  for (Eigen::Index k = n_super; k < n; ++k) dec.random_idx.push_back(static_cast<int>(k));

  auto partial_sum = [&](const std::vector<int>& idx) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    if (idx.empty()) return m;
    Eigen::MatrixXd v(n, static_cast<Eigen::Index>(idx.size()));
    Eigen::VectorXd lam(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      v.col(static_cast<Eigen::Index>(k)) = dec.eig.vectors.col(idx[k]);
      lam(static_cast<Eigen::Index>(k)) = dec.eig.values(idx[k]);
    }
    m = v * lam.asDiagonal() * v.transpose();
    return m;
  };
  dec.c_market = partial_sum(dec.market_idx);
  dec.c_meso = partial_sum(dec.meso_idx);
  dec.c_random = partial_sum(dec.random_idx);
  return dec;
}

RiskFractions risk_fractions(const Decomposition& dec) {
  RiskFractions fr;
  fr.total = dec.eig.values.sum();
  if (fr.total == 0.0) throw std::invalid_argument("risk_fractions: zero total risk");
  auto share = [&](const std::vector<int>& idx) {
    double s = 0.0;
    for (int k : idx) s += dec.eig.values(k);
    return s / fr.total;
  };
  fr.random = share(dec.random_idx);
  fr.meso = share(dec.meso_idx);
  fr.market = share(dec.market_idx);
  return fr;
}

namespace {

RiskFractions fraction_mean(const std::vector<RiskFractions>& xs) {
  RiskFractions m;
  for (const auto& x : xs) {
    m.total += x.total;
    m.random += x.random;
    m.meso += x.meso;
    m.market += x.market;
  }
  const auto n = static_cast<double>(xs.size());
  m.total /= n;
  m.random /= n;
  m.meso /= n;
  m.market /= n;
  return m;
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

RiskFractions fraction_sd(const std::vector<RiskFractions>& xs) {
  std::vector<double> r, g, m, t;
  for (const auto& x : xs) {
    t.push_back(x.total);
    r.push_back(x.random);
    g.push_back(x.meso);
    m.push_back(x.market);
  }
  RiskFractions sd;
  sd.total = sample_sd(t);
  sd.random = sample_sd(r);
  sd.meso = sample_sd(g);
  sd.market = sample_sd(m);
  return sd;
}

}  // namespace

RiskFractionSeries risk_fraction_series(const ReturnPanel& rp, const RollingSpec& window,
                                        const SubsampleSpec& subsample,
                                        const DecomposeOptions& opts) {
  if (window.length <= 0 || window.step <= 0)
    throw std::invalid_argument("risk_fraction_series needs a positive rolling spec");
  const Eigen::Index size = subsample.size > 0 ? subsample.size : rp.n_assets();
  if (window.length <= size)
    throw std::invalid_argument("window too short for subsample size (needs kappa > 1)");
  if (subsample.draws < 1) throw std::invalid_argument("draws must be >= 1");

  std::vector<Eigen::Index> starts;
  for (Eigen::Index s = 0; s + window.length <= rp.n_obs(); s += window.step)
    starts.push_back(s);
  if (starts.empty()) throw std::invalid_argument("panel shorter than one window");

  const int draws = subsample.draws;
  const auto n_cells = static_cast<std::ptrdiff_t>(starts.size()) * draws;
  std::vector<RiskFractions> cell(static_cast<std::size_t>(n_cells));
  std::vector<std::string> cell_error(static_cast<std::size_t>(n_cells));

  par::parallel_for(n_cells, [&](std::ptrdiff_t flat) {
    const auto w = static_cast<std::size_t>(flat / draws);
    const int d = static_cast<int>(flat % draws);
    try {
      ReturnPanel win = slice_window(
          rp, {starts[w] + window.length, window.length, WindowMode::InSample});
      if (size < rp.n_assets()) {
        const auto idx = subsample_indices(
            rp.n_assets(), size, d + 1,
            mix_seed(subsample.seed, static_cast<std::uint64_t>(w)));
        win = select_assets(win, idx[static_cast<std::size_t>(d)]);
      }
      const ReturnPanel std_win = standardize(win);
      const Eigen::MatrixXd c = correlation_matrix(std_win);
      const Decomposition dec = decompose(c, mp_bounds(size, window.length), opts);
      cell[static_cast<std::size_t>(flat)] = risk_fractions(dec);
    } catch (const std::exception& e) {
      cell_error[static_cast<std::size_t>(flat)] = e.what();
    }
  });
  for (const auto& err : cell_error)
    if (!err.empty()) throw std::runtime_error("risk_fraction_series cell failed: " + err);

  RiskFractionSeries series;
  std::vector<RiskFractions> window_means;
  for (std::size_t w = 0; w < starts.size(); ++w) {
    std::vector<RiskFractions> per_draw(cell.begin() + static_cast<std::ptrdiff_t>(w) * draws,
                                        cell.begin() + static_cast<std::ptrdiff_t>(w + 1) * draws);
    RiskFractionPoint point;
    point.start = starts[w];
    point.length = window.length;
    point.mean = fraction_mean(per_draw);
    point.sd = fraction_sd(per_draw);
    window_means.push_back(point.mean);
    series.windows.push_back(point);
  }
  series.across_window_sd = fraction_sd(window_means);
  return series;
}

RelativeChangeNorm relative_change_norm(const Eigen::MatrixXd& prev,
                                        const Eigen::MatrixXd& next, double p,
                                        double epsilon) {
  if (prev.rows() != next.rows() || prev.cols() != next.cols())
    throw std::invalid_argument("relative_change_norm needs matrices of equal shape");
  if (!(p >= 1.0)) throw std::invalid_argument("relative_change_norm needs p >= 1");
  RelativeChangeNorm out;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < prev.cols(); ++j)
    for (Eigen::Index i = 0; i < prev.rows(); ++i) {
      const double base = prev(i, j);
      if (std::abs(base) <= epsilon) {
        ++out.excluded;
        continue;
      }
      const double d = std::abs((next(i, j) - base) / base);
      acc += std::pow(d, p);
      ++out.included;
    }
  if (out.included == 0)
    throw std::invalid_argument("relative_change_norm: all entries excluded by epsilon guard");
  out.raw = std::pow(acc, 1.0 / p);
  out.normalized = std::pow(acc / static_cast<double>(out.included), 1.0 / p);
  return out;
}

Eigen::MatrixXd block_average(const Eigen::MatrixXd& c_meso, const Partition& partition,
                              bool include_diagonal) {
  const Eigen::Index n = c_meso.rows();
  if (static_cast<Eigen::Index>(partition.assignment.size()) != n)
    throw std::invalid_argument("partition does not cover the matrix assets");
  const int nc = partition.n_communities;
  std::vector<Eigen::Index> count(static_cast<std::size_t>(nc), 0);
  for (int c : partition.assignment) {
    if (c < 0 || c >= nc) throw std::invalid_argument("community id out of range");
    ++count[static_cast<std::size_t>(c)];
  }
  for (Eigen::Index c = 0; c < nc; ++c)
    if (count[static_cast<std::size_t>(c)] == 0)
      throw std::invalid_argument("empty community " + std::to_string(c));

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(nc, nc);
  Eigen::MatrixXd cnt = Eigen::MatrixXd::Zero(nc, nc);
  Eigen::VectorXd diag_sum = Eigen::VectorXd::Zero(nc);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int ci = partition.assignment[static_cast<std::size_t>(i)];
    diag_sum(ci) += c_meso(i, i);
    for (Eigen::Index j = 0; j < n; ++j) {
      const int cj = partition.assignment[static_cast<std::size_t>(j)];
      if (i == j && ci == cj && !include_diagonal) continue;
      sum(ci, cj) += c_meso(i, j);
      cnt(ci, cj) += 1.0;
    }
  }
  Eigen::MatrixXd value(nc, nc);
  for (Eigen::Index a = 0; a < nc; ++a)
    for (Eigen::Index b = 0; b < nc; ++b) {
      if (cnt(a, b) > 0.0) {
        value(a, b) = sum(a, b) / cnt(a, b);
      } else {
        // singleton same-community block: only the diagonal entry exists
        value(a, b) = diag_sum(a) / static_cast<double>(count[static_cast<std::size_t>(a)]);
      }
    }

  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = value(partition.assignment[static_cast<std::size_t>(i)],
                        partition.assignment[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace mesofolio
