#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mesofolio/community.hpp"
#include "mesofolio/spectral.hpp"
#include "oracles.hpp"

using namespace mesofolio;

namespace {

ReturnPanel standardized_synthetic(Eigen::Index n, Eigen::Index t,
                                   std::vector<BlockSpec> blocks, double loading,
                                   std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_assets = n;
  spec.n_obs = t;
  spec.blocks = std::move(blocks);
  spec.market_loading = Eigen::VectorXd::Constant(n, loading);
  return standardize(generate_synthetic(spec, seed));
}

Eigen::MatrixXd equicorrelated(Eigen::Index n, double rho) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(n, n, rho);
  c.diagonal().setOnes();
  return c;
}

}  // namespace

TEST_CASE("mp_bounds formula and preconditions") {
  const MpBounds b = mp_bounds(100, 400);
  CHECK(b.lambda_min == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(b.lambda_max == doctest::Approx(2.25).epsilon(1e-14));
  CHECK(b.kappa == doctest::Approx(4.0));

  const MpBounds tight = mp_bounds(1, 1000000);
  CHECK(tight.lambda_min == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(tight.lambda_max == doctest::Approx(1.0).epsilon(1e-2));

  CHECK_THROWS_AS(mp_bounds(100, 100), std::invalid_argument);
  CHECK_THROWS_AS(mp_bounds(100, 50), std::invalid_argument);
}

TEST_CASE("correlation matrix basics") {
  ReturnPanel rp;
  rp.dates = {"d0", "d1", "d2", "d3"};
  rp.assets = {"A", "B", "C"};
  rp.returns.resize(4, 3);
  rp.returns.col(0) << 1.0, -1.0, 2.0, -2.0;
  rp.returns.col(1) = rp.returns.col(0);
  rp.returns.col(2) = -rp.returns.col(0);
  const Eigen::MatrixXd c = correlation_matrix(standardize(rp));
  CHECK(c(0, 0) == 1.0);
  CHECK(c(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c(0, 2) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(correlation_matrix(rp), std::invalid_argument);  // not standardized
}

TEST_CASE("independent columns decorrelate") {
  const ReturnPanel z = standardized_synthetic(3, 10000, {{3, 0.0}}, 0.0, 21);
  const Eigen::MatrixXd c = correlation_matrix(z);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = i + 1; j < 3; ++j) CHECK(std::abs(c(i, j)) < 0.05);
}

TEST_CASE("correlation rejects zero-variance columns") {
  ReturnPanel rp;
  rp.dates = {"d0", "d1"};
  rp.assets = {"A", "B"};
  rp.returns.resize(2, 2);
  rp.returns.col(0) << 1.0, -1.0;
  rp.returns.col(1) << 0.0, 0.0;
  StandardizeReport report;
  const ReturnPanel z = standardize(rp, &report);
  CHECK(report.zero_variance.size() == 1);
  CHECK_THROWS_AS(correlation_matrix(z), std::invalid_argument);
}

TEST_CASE("decompose identity: everything is random") {
  const Eigen::MatrixXd c = Eigen::MatrixXd::Identity(10, 10);
  const Decomposition dec = decompose(c, mp_bounds(10, 100));
  CHECK(dec.market_idx.empty());
  CHECK(dec.meso_idx.empty());
  CHECK(dec.random_idx.size() == 10);
  CHECK((dec.c_random - c).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(dec.c_meso.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decompose equicorrelated: single market eigenvalue") {
  // closed-form spectrum: 1 + rho(N-1) once, 1 - rho with multiplicity N-1
  const Eigen::MatrixXd c = equicorrelated(10, 0.5);
  const Decomposition dec = decompose(c, mp_bounds(10, 10000000));
  REQUIRE(dec.market_idx.size() == 1);
  CHECK(dec.eig.values(0) == doctest::Approx(5.5).epsilon(1e-12));
  CHECK(dec.meso_idx.empty());
  CHECK((dec.c_market + dec.c_random - c).cwiseAbs().maxCoeff() < 1e-8);

  const RiskFractions fr = risk_fractions(dec);
  CHECK(fr.market == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(fr.random + fr.meso + fr.market == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("decompose planted two-block panel with market mode") {
  const ReturnPanel z = standardized_synthetic(60, 1200, {{30, 0.4}, {30, 0.4}}, 0.5, 77);
  const Decomposition dec =
      decompose(correlation_matrix(z), mp_bounds(z.n_assets(), z.n_obs()));
  CHECK(dec.market_idx.size() == 1);
  CHECK(dec.meso_idx.size() >= 1);
  CHECK(dec.leading_sign_agreement >= 0.95);
}

TEST_CASE("reconstruction, trace and PSD invariants on random panels") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto engine = make_engine(mix_seed(1234, seed));
    std::uniform_int_distribution<Eigen::Index> nd(2, 50);
    const Eigen::Index n = nd(engine);
    const Eigen::Index t = 3 * n + 20;
    const ReturnPanel z = standardized_synthetic(
        n, t, {{n, 0.25}}, seed % 2 == 0 ? 0.4 : 0.0, mix_seed(5, seed));
    const Decomposition dec = decompose(correlation_matrix(z), mp_bounds(n, t));

    const Eigen::MatrixXd sum = dec.c_random + dec.c_meso + dec.c_market;
    CHECK((sum - dec.c).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(dec.c.trace() - static_cast<double>(n)) < 1e-8);
    CHECK(std::abs(sum.trace() - static_cast<double>(n)) < 1e-8);

    for (const Eigen::MatrixXd* comp : {&dec.c_random, &dec.c_meso, &dec.c_market}) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*comp, Eigen::EigenvaluesOnly);
      CHECK(es.eigenvalues().minCoeff() > -1e-8);
    }
  }
}

TEST_CASE("MP bulk coverage on pure noise") {
  const ReturnPanel z = standardized_synthetic(100, 1000, {{100, 0.0}}, 0.0, 8);
  const Decomposition dec = decompose(correlation_matrix(z), mp_bounds(100, 1000));
  int inside = 0;
  for (Eigen::Index k = 0; k < 100; ++k)
    if (dec.eig.values(k) >= dec.bounds.lambda_min &&
        dec.eig.values(k) <= dec.bounds.lambda_max)
      ++inside;
  CHECK(inside >= 95);
}

TEST_CASE("market mode sign property") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ReturnPanel z =
        standardized_synthetic(50, 600, {{25, 0.3}, {25, 0.3}}, 0.6, mix_seed(31, seed));
    const DecomposeOptions opts;
    const Decomposition dec =
        decompose(correlation_matrix(z), mp_bounds(50, 600), opts);
    if (!dec.market_idx.empty())
      CHECK(dec.leading_sign_agreement >= opts.sign_uniformity);
  }
}

TEST_CASE("eigen system reconstructs and is orthonormal") {
  const ReturnPanel z = standardized_synthetic(20, 200, {{20, 0.3}}, 0.3, 17);
  const Eigen::MatrixXd c = correlation_matrix(z);
  const EigenSystem sys = eigen_system(c);
  const Eigen::MatrixXd rebuilt =
      sys.vectors * sys.values.asDiagonal() * sys.vectors.transpose();
  CHECK((rebuilt - c).cwiseAbs().maxCoeff() < 1e-8);
  const Eigen::MatrixXd gram = sys.vectors.transpose() * sys.vectors;
  CHECK((gram - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-8);
  for (Eigen::Index k = 1; k < 20; ++k) CHECK(sys.values(k - 1) >= sys.values(k));
}

TEST_CASE("risk_fraction_series degenerate aggregation") {
  const SyntheticSpec spec{40, 400, {{20, 0.3}, {20, 0.3}},
                           Eigen::VectorXd::Constant(40, 0.4), 1.0};
  const ReturnPanel rp = generate_synthetic(spec, 3);
  const RiskFractionSeries series = risk_fraction_series(rp, {400, 400}, {40, 1, 7});
  REQUIRE(series.windows.size() == 1);

  const ReturnPanel z = standardize(rp);
  const RiskFractions direct =
      risk_fractions(decompose(correlation_matrix(z), mp_bounds(40, 400)));
  CHECK(series.windows[0].mean.random == doctest::Approx(direct.random).epsilon(1e-12));
  CHECK(series.windows[0].mean.meso == doctest::Approx(direct.meso).epsilon(1e-12));
  CHECK(series.windows[0].mean.market == doctest::Approx(direct.market).epsilon(1e-12));

  const RiskFractionSeries again = risk_fraction_series(rp, {400, 400}, {40, 1, 7});
  CHECK(series.windows[0].mean.meso == again.windows[0].mean.meso);

  CHECK_THROWS_AS(risk_fraction_series(rp, {30, 30}, {40, 1, 7}), std::invalid_argument);
}

TEST_CASE("relative_change_norm") {
  Eigen::MatrixXd a(1, 1), b(1, 1);
  a << 0.5;
  b << 0.4;
  const RelativeChangeNorm single = relative_change_norm(a, b, 1.0);
  CHECK(single.normalized == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(single.raw == doctest::Approx(0.2).epsilon(1e-12));

  Eigen::MatrixXd c = Eigen::MatrixXd::Random(5, 5).array() + 2.0;
  const RelativeChangeNorm zero = relative_change_norm(c, c, 1.0);
  CHECK(zero.normalized == 0.0);
  CHECK(zero.excluded == 0);

  const RelativeChangeNorm doubled = relative_change_norm(c, 2.0 * c, 1.0);
  CHECK(doubled.normalized == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(doubled.raw == doctest::Approx(25.0).epsilon(1e-12));

  // nonzero iff some included entry differs
  Eigen::MatrixXd d = c;
  d(2, 3) += 0.1;
  CHECK(relative_change_norm(c, d, 1.0).normalized > 0.0);

  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(relative_change_norm(zeros, c.topLeftCorner(3, 3), 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(relative_change_norm(c, c.topLeftCorner(3, 3), 1.0), std::invalid_argument);
}

TEST_CASE("block_average") {
  Partition singletons;
  singletons.assignment = {0, 1, 2, 3};
  singletons.n_communities = 4;
  Eigen::MatrixXd m(4, 4);
  m << 1.0, 0.2, -0.1, 0.05,
       0.2, 0.9, -0.3, 0.15,
      -0.1, -0.3, 1.1, 0.4,
      0.05, 0.15, 0.4, 0.8;
  CHECK((block_average(m, singletons) - m).cwiseAbs().maxCoeff() == 0.0);

  Partition merged;
  merged.assignment = {0, 0, 0, 0};
  merged.n_communities = 1;
  const Eigen::MatrixXd flat = block_average(m, merged);
  CHECK((flat.array() - flat(0, 0)).abs().maxCoeff() == 0.0);

  Partition two;
  two.assignment = {0, 0, 1, 1};
  two.n_communities = 2;
  const Eigen::MatrixXd avg = block_average(m, two);
  // same-community averages exclude the diagonal
  CHECK(avg(0, 1) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(avg(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(avg(2, 3) == doctest::Approx(0.4).epsilon(1e-14));
  const double cross = (-0.1 + 0.05 - 0.3 + 0.15) / 4.0;
  CHECK(avg(0, 2) == doctest::Approx(cross).epsilon(1e-14));
  CHECK(avg(1, 3) == doctest::Approx(cross).epsilon(1e-14));
  CHECK((avg - avg.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}
