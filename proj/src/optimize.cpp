#include "mesofolio/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mesofolio {

std::string to_string(CovSource source) {
  switch (source) {
    case CovSource::Empirical: return "empirical";
    case CovSource::RmtNoiseFree: return "rmt-noise-free";
    case CovSource::Mesoscopic: return "mesoscopic";
    case CovSource::BlockAveraged: return "block-averaged";
  }
  return "?";
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Equal: return "equal";
    case Strategy::Markowitz: return "markowitz";
    case Strategy::Rmt: return "rmt";
    case Strategy::Mesoscopic: return "mesoscopic";
    case Strategy::Community: return "community";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "equal") return Strategy::Equal;
  if (name == "markowitz") return Strategy::Markowitz;
  if (name == "rmt") return Strategy::Rmt;
  if (name == "mesoscopic") return Strategy::Mesoscopic;
  if (name == "community") return Strategy::Community;
  throw std::invalid_argument("unknown strategy '" + name + "'");
}

CovarianceInput make_covariance(const ReturnPanel& raw, const Decomposition& dec,
                                CovSource source, const CovOptions& opts) {
  const Eigen::Index n = dec.c.rows();
  if (raw.n_assets() != n)
    throw std::invalid_argument("panel and decomposition dimensions differ");
  const Eigen::VectorXd sd = stddev_vector(raw);

  Eigen::MatrixXd component;
  switch (source) {
    case CovSource::Empirical: component = dec.c; break;
    case CovSource::RmtNoiseFree: component = dec.c_meso + dec.c_market; break;
    case CovSource::Mesoscopic: component = dec.c_meso; break;
    case CovSource::BlockAveraged:
      if (!opts.partition)
        throw std::invalid_argument("block-averaged covariance needs a partition");
      component = block_average(dec.c_meso, *opts.partition,
                                opts.block_average_include_diagonal);
      break;
  }

  CovarianceInput cov;
  cov.source = source;
  cov.sigma = component.cwiseProduct(sd * sd.transpose());
  if (!(source == CovSource::Empirical || opts.raw_diagonal))
    cov.sigma.diagonal() = sd.array().square();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov.sigma,
                                                    Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (hi <= 0.0 || lo <= 0.0 || hi / lo > opts.ridge_condition_threshold) {
    cov.ridge = opts.ridge_scale * cov.sigma.trace() / static_cast<double>(n);
    cov.sigma.diagonal().array() += cov.ridge;
    cov.ridge_applied = true;
  }
  return cov;
}

WeightVector equal_weights(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("equal_weights needs n >= 1");
  WeightVector w;
  w.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  w.strategy = Strategy::Equal;
  w.short_allowed = false;
  return w;
}

namespace {

void check_conditioning(const Eigen::MatrixXd& sigma, double threshold) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > threshold)
    throw std::runtime_error("covariance is singular or rank-deficient (condition " +
                             std::to_string(lo > 0.0 ? hi / lo :
                                            std::numeric_limits<double>::infinity()) + ")");
}

}  // namespace

WeightVector gmv(const CovarianceInput& cov, const GmvOptions& opts) {
  const Eigen::Index n = cov.sigma.rows();
  if (n < 1 || cov.sigma.cols() != n) throw std::invalid_argument("gmv needs a square sigma");
  check_conditioning(cov.sigma, opts.condition_threshold);
  const Eigen::VectorXd z = cov.sigma.ldlt().solve(Eigen::VectorXd::Ones(n));
  const double denom = z.sum();
  if (!std::isfinite(denom) || denom == 0.0)
    throw std::runtime_error("gmv normalization failed");
  WeightVector w;
  w.weights = z / denom;
  w.strategy = Strategy::Markowitz;
  w.short_allowed = true;
  return w;
}

FrontierPoint frontier_point(const CovarianceInput& cov, const Eigen::VectorXd& mu,
                             double target, const GmvOptions& opts) {
  const Eigen::Index n = cov.sigma.rows();
  if (mu.size() != n) throw std::invalid_argument("mu length does not match sigma");
  check_conditioning(cov.sigma, opts.condition_threshold);
  const auto ldlt = cov.sigma.ldlt();
  const Eigen::VectorXd inv_one = ldlt.solve(Eigen::VectorXd::Ones(n));
  const Eigen::VectorXd inv_mu = ldlt.solve(mu);
  const double a = mu.dot(inv_mu);
  const double b = inv_one.dot(mu);
  const double c = inv_one.sum();
  const double delta = c * a - b * b;

  FrontierPoint point;
  point.target_return = target;
  const double scale = std::max({std::abs(c * a), b * b, 1.0});
  if (std::abs(delta) <= 1e-12 * scale) {
    point.weights = gmv(cov, opts);
    point.degenerate_fallback = true;
  } else {
    const double coef_one = (a - target * b) / delta;
    const double coef_mu = (target * c - b) / delta;
    point.weights.weights = coef_one * inv_one + coef_mu * inv_mu;
    point.weights.strategy = Strategy::Markowitz;
    point.weights.short_allowed = true;
    point.weights.target_return = target;
  }
  point.predicted_variance = point.weights.weights.dot(cov.sigma * point.weights.weights);
  return point;
}

namespace {

// Euclidean projection onto the probability simplex {w >= 0, sum w = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double running = 0.0, tau = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    running += u[static_cast<std::size_t>(k)];
    const double t = (running - 1.0) / static_cast<double>(k + 1);
    if (t < u[static_cast<std::size_t>(k)]) tau = t;
  }
  return (v.array() - tau).max(0.0);
}

struct QpProblem {
  const Eigen::MatrixXd& sigma;
  Eigen::MatrixXd a_eq;  // k x n
  Eigen::VectorXd b_eq;  // k
};

// Primal active-set iteration for min w' sigma w s.t. a_eq w = b_eq, w >= 0.
// x0 must be feasible. The working set holds indices pinned at zero.
Eigen::VectorXd active_set_qp(const QpProblem& prob, Eigen::VectorXd x,
                              QpDiagnostics& diag, const QpOptions& opts) {
  const Eigen::Index n = prob.sigma.rows();
  const Eigen::Index k = prob.a_eq.rows();
  const int max_iter = opts.max_iterations_per_var * static_cast<int>(std::max<Eigen::Index>(n, 1));
  std::vector<bool> active(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = x(i) <= 0.0;

  Eigen::VectorXd multipliers = Eigen::VectorXd::Zero(k);
  const double mult_tol = opts.kkt_tolerance;

  for (diag.iterations = 0; diag.iterations < max_iter; ++diag.iterations) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!active[static_cast<std::size_t>(i)]) free.push_back(i);
    const auto nf = static_cast<Eigen::Index>(free.size());

    const Eigen::VectorXd grad = 2.0 * (prob.sigma * x);

    // KKT system on the free block: [H_FF A_F'; A_F 0] [p; nu] = [-g_F; 0]
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + k, nf + k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + k);
    for (Eigen::Index r = 0; r < nf; ++r) {
      for (Eigen::Index c = 0; c < nf; ++c) kkt(r, c) = 2.0 * prob.sigma(free[r], free[c]);
      for (Eigen::Index c = 0; c < k; ++c) {
        kkt(r, nf + c) = prob.a_eq(c, free[r]);
        kkt(nf + c, r) = prob.a_eq(c, free[r]);
      }
      rhs(r) = -grad(free[r]);
    }
    const Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    for (Eigen::Index r = 0; r < nf; ++r) p(free[r]) = sol(r);
    multipliers = -sol.tail(k);

    const double step_scale = 1.0 + x.cwiseAbs().maxCoeff();
    if (p.cwiseAbs().maxCoeff() <= 1e-11 * step_scale) {
      // stationary on the working set; check bound multipliers
      const Eigen::VectorXd eta = grad - prob.a_eq.transpose() * multipliers;
      Eigen::Index worst = -1;
      double worst_eta = -mult_tol;
      for (Eigen::Index i = 0; i < n; ++i)
        if (active[static_cast<std::size_t>(i)] && eta(i) < worst_eta) {
          worst_eta = eta(i);
          worst = i;
        }
      if (worst < 0) {
        diag.converged = true;
        break;
      }
      active[static_cast<std::size_t>(worst)] = false;
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocker = -1;
    for (Eigen::Index i : free)
      if (p(i) < -1e-14) {
        const double cand = -x(i) / p(i);
        if (cand < alpha) {
          alpha = cand;
          blocker = i;
        }
      }
    x += alpha * p;
    if (blocker >= 0) {
      x(blocker) = 0.0;
      active[static_cast<std::size_t>(blocker)] = true;
    }
  }

  const Eigen::VectorXd grad = 2.0 * (prob.sigma * x);
  Eigen::VectorXd eta = grad - prob.a_eq.transpose() * multipliers;
  diag.min_multiplier = 0.0;
  double stat = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (active[static_cast<std::size_t>(i)])
      diag.min_multiplier = std::min(diag.min_multiplier, eta(i));
    else
      stat = std::max(stat, std::abs(eta(i)));
  }
  diag.stationarity = stat;
  diag.constraint_violation = (prob.a_eq * x - prob.b_eq).cwiseAbs().maxCoeff();
  diag.min_weight = x.minCoeff();
  if (!diag.converged)
    throw std::runtime_error("active-set solver did not converge within " +
                             std::to_string(max_iter) + " iterations");
  return x;
}

// Equality-constrained minimum variance via the full KKT system.
Eigen::VectorXd equality_qp(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& a_eq,
                            const Eigen::VectorXd& b_eq, QpDiagnostics* diag) {
  const Eigen::Index n = sigma.rows();
  const Eigen::Index k = a_eq.rows();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
  kkt.topLeftCorner(n, n) = 2.0 * sigma;
  kkt.topRightCorner(n, k) = a_eq.transpose();
  kkt.bottomLeftCorner(k, n) = a_eq;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + k);
  rhs.tail(k) = b_eq;
  const Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
  const Eigen::VectorXd x = sol.head(n);
  if (!x.allFinite()) throw std::runtime_error("singular KKT system in equality QP");
  const double scale = 1.0 + b_eq.cwiseAbs().maxCoeff();
  if ((a_eq * x - b_eq).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::runtime_error("degenerate equality constraints (all expected returns equal?)");
  if (diag) {
    const Eigen::VectorXd lambda = -sol.tail(k);
    diag->stationarity =
        (2.0 * sigma * x - a_eq.transpose() * lambda).cwiseAbs().maxCoeff();
    diag->constraint_violation = (a_eq * x - b_eq).cwiseAbs().maxCoeff();
    diag->min_weight = x.minCoeff();
    diag->converged = true;
    diag->iterations = 1;
  }
  return x;
}

}  // namespace

WeightVector solve_constrained(const CovarianceInput& cov, const Eigen::VectorXd* mu,
                               const double* target, bool no_short, QpDiagnostics* diag,
                               const QpOptions& opts) {
  const Eigen::Index n = cov.sigma.rows();
  if (n < 1) throw std::invalid_argument("empty covariance");
  if (target && !mu) throw std::invalid_argument("target requires a mean vector");
  if (mu && mu->size() != n) throw std::invalid_argument("mu length does not match sigma");

  QpProblem prob{cov.sigma, Eigen::MatrixXd::Ones(1, n), Eigen::VectorXd::Ones(1)};
  if (target) {
    prob.a_eq.conservativeResize(2, n);
    prob.a_eq.row(1) = mu->transpose();
    prob.b_eq.conservativeResize(2);
    prob.b_eq(1) = *target;
  }

  QpDiagnostics local;
  WeightVector w;
  w.strategy = Strategy::Markowitz;
  w.short_allowed = !no_short;
  if (target) w.target_return = *target;

  if (!no_short) {
    w.weights = equality_qp(cov.sigma, prob.a_eq, prob.b_eq, &local);
  } else {
    const double lo = mu ? mu->minCoeff() : 0.0;
    const double hi = mu ? mu->maxCoeff() : 0.0;
    if (target && (*target < lo || *target > hi))
      throw std::runtime_error("target return outside the feasible long-only range [" +
                               std::to_string(lo) + ", " + std::to_string(hi) + "]");
    Eigen::VectorXd start;
    if (!target) {
      // warm start from the projected unconstrained solution
      Eigen::VectorXd unconstrained;
      try {
        unconstrained = equality_qp(cov.sigma, prob.a_eq, prob.b_eq, nullptr);
      } catch (const std::exception&) {
        unconstrained = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
      }
      if (unconstrained.minCoeff() >= 0.0) {
        w.weights = unconstrained;
        local.converged = true;
        local.min_weight = unconstrained.minCoeff();
        local.stationarity = 0.0;
        if (diag) *diag = local;
        return w;
      }
      start = project_to_simplex(unconstrained);
    } else {
      Eigen::Index i_lo = 0, i_hi = 0;
      mu->minCoeff(&i_lo);
      mu->maxCoeff(&i_hi);
      start = Eigen::VectorXd::Zero(n);
      if (hi == lo) {
        start.setConstant(1.0 / static_cast<double>(n));
      } else {
        const double theta = (*target - lo) / (hi - lo);
        start(i_lo) = 1.0 - theta;
        start(i_hi) = theta;
      }
    }
    w.weights = active_set_qp(prob, start, local, opts);
  }
  if (diag) *diag = local;
  return w;
}

WeightVector community_gmv(const CovarianceInput& sigma_g, const Partition& partition,
                           const Eigen::VectorXd* mu, const double* target, bool no_short,
                           QpDiagnostics* diag, const QpOptions& opts) {
  const Eigen::Index n = sigma_g.sigma.rows();
  if (static_cast<Eigen::Index>(partition.assignment.size()) != n)
    throw std::invalid_argument("partition does not cover the covariance assets");
  if (target && !mu) throw std::invalid_argument("target requires a mean vector");
  const int nc = partition.n_communities;
  if (nc < 1) throw std::invalid_argument("partition has no communities");

  Eigen::MatrixXd membership = Eigen::MatrixXd::Zero(n, nc);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(nc);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = partition.assignment[static_cast<std::size_t>(i)];
    if (c < 0 || c >= nc) throw std::invalid_argument("community id out of range");
    membership(i, c) = 1.0;
    counts(c) += 1.0;
  }
  if (counts.minCoeff() <= 0.0) throw std::invalid_argument("empty community");

  // Reduced objective over per-asset community weights:
  // block sums of sigma, budget sum_c N_c w_c = 1, community-sum returns.
  const Eigen::MatrixXd reduced = membership.transpose() * sigma_g.sigma * membership;
  Eigen::MatrixXd a_eq = counts.transpose();
  Eigen::VectorXd b_eq = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd community_mean;
  if (mu) {
    community_mean = (membership.transpose() * *mu).cwiseQuotient(counts);
    if (target) {
      a_eq.conservativeResize(2, nc);
      a_eq.row(1) = (community_mean.cwiseProduct(counts)).transpose();
      b_eq.conservativeResize(2);
      b_eq(1) = *target;
    }
  }

  QpDiagnostics local;
  Eigen::VectorXd reduced_w;
  if (!no_short) {
    reduced_w = equality_qp(reduced, a_eq, b_eq, &local);
  } else {
    const QpProblem prob{reduced, a_eq, b_eq};
    Eigen::VectorXd start;
    if (!target) {
      start = Eigen::VectorXd::Constant(nc, 1.0 / static_cast<double>(n));
    } else {
      const double lo = community_mean.minCoeff();
      const double hi = community_mean.maxCoeff();
      if (*target < lo || *target > hi)
        throw std::runtime_error("target return outside the feasible community range");
      Eigen::Index i_lo = 0, i_hi = 0;
      community_mean.minCoeff(&i_lo);
      community_mean.maxCoeff(&i_hi);
      start = Eigen::VectorXd::Zero(nc);
      if (hi == lo) {
        start = counts.cwiseInverse() / static_cast<double>(nc);
      } else {
        const double theta = (*target - lo) / (hi - lo);
        start(i_lo) = (1.0 - theta) / counts(i_lo);
        start(i_hi) = theta / counts(i_hi);
      }
    }
    reduced_w = active_set_qp(prob, start, local, opts);
  }

  WeightVector w;
  w.weights = membership * reduced_w;
  w.strategy = Strategy::Community;
  w.short_allowed = !no_short;
  if (target) w.target_return = *target;
  if (diag) *diag = local;
  return w;
}

double effective_size(const WeightVector& w) {
  const double denom = w.weights.squaredNorm();
  if (denom == 0.0) throw std::invalid_argument("effective_size of a zero weight vector");
  return 1.0 / denom;
}

GmvSplit gmv_spectral_split(const CovarianceInput& cov, const Decomposition& dec) {
  const Eigen::Index n = cov.sigma.rows();
  if (dec.c.rows() != n)
    throw std::invalid_argument("decomposition does not match the covariance");
  const EigenSystem sys = eigen_system(cov.sigma);
  if (sys.values.minCoeff() <= 0.0)
    throw std::runtime_error("gmv_spectral_split needs an invertible covariance");

  // classify covariance eigenvalues by spectral rank, mirroring the
  // correlation decomposition: market first, then mesoscopic, rest random
  const auto n_market = static_cast<Eigen::Index>(dec.market_idx.size());
  const auto n_meso = static_cast<Eigen::Index>(dec.meso_idx.size());
  Eigen::VectorXd inv_ones = Eigen::VectorXd::Zero(n);
  auto contribution = [&](Eigen::Index begin, Eigen::Index end) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = begin; k < end; ++k) {
      const double share = sys.vectors.col(k).sum() / sys.values(k);
      acc += share * sys.vectors.col(k);
    }
    return acc;
  };
  const Eigen::VectorXd market_part = contribution(0, n_market);
  const Eigen::VectorXd meso_part = contribution(n_market, n_market + n_meso);
  const Eigen::VectorXd random_part = contribution(n_market + n_meso, n);
  const double denom = (market_part + meso_part + random_part).sum();
  if (!std::isfinite(denom) || denom == 0.0)
    throw std::runtime_error("gmv_spectral_split normalization failed");

  GmvSplit split;
  split.market = market_part / denom;
  split.meso = meso_part / denom;
  split.random = random_part / denom;
  return split;
}

TwoAssetShift two_asset_shift(double sigma1, double sigma2, double c12_empirical,
                              double c12_mesoscopic) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0))
    throw std::invalid_argument("two_asset_shift needs positive volatilities");
  const double cross = sigma1 * sigma2;
  const double ss = sigma1 * sigma1 + sigma2 * sigma2;
  const double den_emp = ss - 2.0 * c12_empirical * cross;
  const double den_adj = ss - 2.0 * c12_mesoscopic * cross;
  const double tiny = 1e-12 * ss;
  if (std::abs(den_emp) <= tiny || std::abs(den_adj) <= tiny)
    throw std::invalid_argument("degenerate two-asset denominator");
  TwoAssetShift shift;
  shift.w1_star = (sigma2 * sigma2 - c12_empirical * cross) / den_emp;
  shift.w1_adjusted = (sigma2 * sigma2 - c12_mesoscopic * cross) / den_adj;
  shift.delta = shift.w1_star - shift.w1_adjusted;
  return shift;
}

}  // namespace mesofolio
