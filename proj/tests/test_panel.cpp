#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mesofolio/panel.hpp"
#include "mesofolio/rng.hpp"

using namespace mesofolio;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path path = fs::temp_directory_path() / ("mesofolio_test_" + name);
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("load_prices wide layout") {
  const auto path = write_temp("wide.csv",
                               "date,AAA,BBB,CCC\n"
                               "2020-01-01,10,20,30\n"
                               "2020-01-02,11,21,31\n"
                               "2020-01-03,12,22,32\n"
                               "2020-01-06,13,23,33\n"
                               "2020-01-07,14,24,34\n");
  LoadReport report;
  const PricePanel panel = load_prices(path.string(), CsvLayout::Wide, 0.01, &report);
  CHECK(panel.n_assets() == 3);
  CHECK(panel.n_obs() == 5);
  CHECK(panel.prices(0, 0) == 10.0);
  CHECK(panel.prices(4, 2) == 34.0);
  CHECK(report.dropped.empty());
  CHECK(report.filled_cells == 0);
}

TEST_CASE("load_prices drops assets above the missing threshold") {
  const auto path = write_temp("missing.csv",
                               "date,AAA,BBB\n"
                               "2020-01-01,10,20\n"
                               "2020-01-02,,21\n"
                               "2020-01-03,,22\n"
                               "2020-01-06,13,23\n");
  LoadReport report;
  const PricePanel panel = load_prices(path.string(), CsvLayout::Wide, 0.01, &report);
  CHECK(panel.n_assets() == 1);
  CHECK(panel.assets[0] == "BBB");
  REQUIRE(report.dropped.size() == 1);
  CHECK(report.dropped[0].asset == "AAA");
  CHECK(report.dropped[0].missing == 2);
}

TEST_CASE("load_prices forward-fills isolated gaps") {
  const auto path = write_temp("gap.csv",
                               "date,AAA\n"
                               "2020-01-01,10\n"
                               "2020-01-02,\n"
                               "2020-01-03,12\n");
  LoadReport report;
  const PricePanel panel = load_prices(path.string(), CsvLayout::Wide, 0.5, &report);
  CHECK(panel.prices(1, 0) == 10.0);
  CHECK(report.filled_cells == 1);
}

TEST_CASE("load_prices rejects non-positive prices") {
  const auto path = write_temp("zero.csv",
                               "date,AAA\n"
                               "2020-01-01,10\n"
                               "2020-01-02,0.0\n");
  CHECK_THROWS_AS(load_prices(path.string(), CsvLayout::Wide), std::runtime_error);
}

TEST_CASE("load_prices fails when every asset is filtered out") {
  const auto path = write_temp("unusable.csv",
                               "date,AAA\n"
                               "2020-01-01,\n"
                               "2020-01-02,10\n"
                               "2020-01-03,\n");
  CHECK_THROWS_AS(load_prices(path.string(), CsvLayout::Wide, 0.01), std::runtime_error);
}

TEST_CASE("simple returns") {
  PricePanel panel;
  panel.dates = {"d0", "d1"};
  panel.assets = {"A"};
  panel.prices.resize(2, 1);
  panel.prices << 100.0, 110.0;
  const ReturnPanel rp = to_returns(panel, ReturnKind::Simple);
  CHECK(rp.returns(0, 0) == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("load_prices long layout") {
  const auto path = write_temp("long.csv",
                               "date,ticker,close\n"
                               "2020-01-01,AAA,10\n"
                               "2020-01-01,BBB,20\n"
                               "2020-01-02,AAA,11\n"
                               "2020-01-02,BBB,21\n");
  const PricePanel panel = load_prices(path.string(), CsvLayout::Long, 0.01);
  CHECK(panel.n_assets() == 2);
  CHECK(panel.n_obs() == 2);
  CHECK(panel.prices(1, 1) == 21.0);
}

TEST_CASE("to_returns") {
  PricePanel panel;
  panel.dates = {"d0", "d1", "d2"};
  panel.assets = {"A", "B"};
  panel.prices.resize(3, 2);
  panel.prices.col(0) << 100.0, 110.0, 110.0;
  panel.prices.col(1) << 5.0, 5.0, 5.0;

  const ReturnPanel rp = to_returns(panel);
  CHECK(rp.n_obs() == 2);
  CHECK(rp.returns(0, 0) == doctest::Approx(std::log(1.1)).epsilon(1e-15));
  CHECK(rp.returns(0, 1) == 0.0);  // constant price column
  CHECK(rp.returns(1, 1) == 0.0);
  CHECK_FALSE(rp.standardized);

  PricePanel single;
  single.dates = {"d0"};
  single.assets = {"A"};
  single.prices.resize(1, 1);
  single.prices << 1.0;
  CHECK_THROWS_AS(to_returns(single), std::invalid_argument);
}

TEST_CASE("standardize hand values and flags") {
  ReturnPanel rp;
  rp.dates = {"d0", "d1"};
  rp.assets = {"A", "B"};
  rp.returns.resize(2, 2);
  rp.returns.col(0) << 1.0, -1.0;
  rp.returns.col(1) << 0.5, 0.5;  // constant

  StandardizeReport report;
  const ReturnPanel z = standardize(rp, &report);
  // sample sd of (1,-1) is sqrt(2), so entries become +-1/sqrt(2)
  CHECK(z.returns(0, 0) == doctest::Approx(0.70710678118654752).epsilon(1e-14));
  CHECK(z.returns(1, 0) == doctest::Approx(-0.70710678118654752).epsilon(1e-14));
  CHECK(z.returns(0, 1) == 0.0);
  REQUIRE(report.zero_variance.size() == 1);
  CHECK(report.zero_variance[0] == 1);
  CHECK(z.standardized);
}

TEST_CASE("standardize is idempotent") {
  SyntheticSpec spec;
  spec.n_assets = 8;
  spec.n_obs = 64;
  spec.blocks = {{8, 0.3}};
  spec.market_loading = Eigen::VectorXd::Constant(8, 0.4);
  const ReturnPanel rp = generate_synthetic(spec, 11);
  const ReturnPanel once = standardize(rp);
  const ReturnPanel twice = standardize(once);
  CHECK((once.returns - twice.returns).cwiseAbs().maxCoeff() < 1e-10);
  // column statistics after standardization
  for (Eigen::Index i = 0; i < once.n_assets(); ++i) {
    CHECK(std::abs(once.returns.col(i).mean()) < 1e-10);
    const double var = (once.returns.col(i).array() - once.returns.col(i).mean())
                           .square().sum() / static_cast<double>(once.n_obs() - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("slice_window boundaries") {
  ReturnPanel rp;
  rp.returns.resize(8, 1);
  for (Eigen::Index t = 0; t < 8; ++t) {
    rp.returns(t, 0) = static_cast<double>(t);
    rp.dates.push_back("d" + std::to_string(t));
  }
  rp.assets = {"A"};

  const ReturnPanel in = slice_window(rp, {4, 4, WindowMode::InSample});
  CHECK(in.n_obs() == 4);
  CHECK(in.returns(0, 0) == 0.0);
  CHECK(in.returns(3, 0) == 3.0);
  const ReturnPanel out = slice_window(rp, {4, 4, WindowMode::OutOfSample});
  CHECK(out.returns(0, 0) == 4.0);
  CHECK(out.returns(3, 0) == 7.0);

  CHECK_THROWS_AS(slice_window(rp, {4, 5, WindowMode::InSample}), std::invalid_argument);
  CHECK_THROWS_AS(slice_window(rp, {4, 0, WindowMode::InSample}), std::invalid_argument);
}

TEST_CASE("rolling windows partition the parent when step equals length") {
  ReturnPanel rp;
  rp.returns.resize(8, 2);
  for (Eigen::Index t = 0; t < 8; ++t) {
    rp.returns(t, 0) = static_cast<double>(t);
    rp.returns(t, 1) = -static_cast<double>(t);
    rp.dates.push_back("d" + std::to_string(t));
  }
  rp.assets = {"A", "B"};

  const auto windows = rolling_windows(rp, {4, 4});
  REQUIRE(windows.size() == 2);
  Eigen::MatrixXd glued(8, 2);
  glued.topRows(4) = windows[0].returns;
  glued.bottomRows(4) = windows[1].returns;
  CHECK((glued - rp.returns).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(rolling_windows(rp, {9, 9}), std::invalid_argument);
}

TEST_CASE("subsample determinism and coverage") {
  const auto a = subsample_indices(450, 100, 100, 42);
  const auto b = subsample_indices(450, 100, 100, 42);
  CHECK(a == b);
  CHECK(a.size() == 100);
  for (const auto& draw : a) {
    CHECK(draw.size() == 100);
    for (std::size_t k = 1; k < draw.size(); ++k) CHECK(draw[k - 1] < draw[k]);
  }
  const auto c = subsample_indices(450, 100, 3, 43);
  CHECK(a[0] != c[0]);

  const auto full = subsample_indices(10, 10, 2, 7);
  for (const auto& draw : full)
    for (std::size_t k = 0; k < draw.size(); ++k) CHECK(draw[k] == static_cast<Eigen::Index>(k));

  CHECK_THROWS_AS(subsample_indices(5, 6, 1, 0), std::invalid_argument);
}

TEST_CASE("synthetic generator determinism and degenerate config") {
  SyntheticSpec spec;
  spec.n_assets = 6;
  spec.n_obs = 50;
  spec.blocks = {{6, 0.0}};
  const ReturnPanel a = generate_synthetic(spec, 5);
  const ReturnPanel b = generate_synthetic(spec, 5);
  CHECK((a.returns - b.returns).cwiseAbs().maxCoeff() == 0.0);
  const ReturnPanel c = generate_synthetic(spec, 6);
  CHECK((a.returns - c.returns).cwiseAbs().maxCoeff() > 0.0);

  SyntheticSpec bad = spec;
  bad.blocks = {{5, 0.0}};
  CHECK_THROWS_AS(generate_synthetic(bad, 1), std::invalid_argument);
  bad = spec;
  bad.blocks = {{6, 1.0}};
  CHECK_THROWS_AS(generate_synthetic(bad, 1), std::invalid_argument);
  bad = spec;
  bad.noise_sd = 0.0;
  CHECK_THROWS_AS(generate_synthetic(bad, 1), std::invalid_argument);
}

TEST_CASE("synthetic within-block correlation matches the target") {
  SyntheticSpec spec;
  spec.n_assets = 20;
  spec.n_obs = 4000;
  spec.blocks = {{10, 0.6}, {10, 0.6}};
  const ReturnPanel rp = generate_synthetic(spec, 99);
  const ReturnPanel z = standardize(rp);

  double within = 0.0;
  int pairs = 0;
  const double inv = 1.0 / static_cast<double>(z.n_obs() - 1);
  for (int block = 0; block < 2; ++block)
    for (Eigen::Index i = 10 * block; i < 10 * (block + 1); ++i)
      for (Eigen::Index j = i + 1; j < 10 * (block + 1); ++j) {
        within += z.returns.col(i).dot(z.returns.col(j)) * inv;
        ++pairs;
      }
  CHECK(within / pairs == doctest::Approx(0.6).epsilon(0.0834));  // +-0.05 absolute
}

TEST_CASE("pure-noise panel has vanishing mean off-diagonal correlation") {
  SyntheticSpec spec;
  spec.n_assets = 30;
  spec.n_obs = 3000;
  spec.blocks = {{30, 0.0}};
  const ReturnPanel z = standardize(generate_synthetic(spec, 3));
  double acc = 0.0;
  int pairs = 0;
  const double inv = 1.0 / static_cast<double>(z.n_obs() - 1);
  for (Eigen::Index i = 0; i < 30; ++i)
    for (Eigen::Index j = i + 1; j < 30; ++j) {
      acc += z.returns.col(i).dot(z.returns.col(j)) * inv;
      ++pairs;
    }
  CHECK(std::abs(acc / pairs) < 3.0 / std::sqrt(static_cast<double>(spec.n_obs)));
}

TEST_CASE("concat_rows stacks regimes") {
  SyntheticSpec spec;
  spec.n_assets = 4;
  spec.n_obs = 10;
  spec.blocks = {{4, 0.2}};
  const ReturnPanel a = generate_synthetic(spec, 1);
  const ReturnPanel b = generate_synthetic(spec, 2);
  const ReturnPanel ab = concat_rows(a, b);
  CHECK(ab.n_obs() == 20);
  CHECK((ab.returns.topRows(10) - a.returns).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ab.returns.bottomRows(10) - b.returns).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mean and stddev vectors") {
  ReturnPanel rp;
  rp.dates = {"d0", "d1"};
  rp.assets = {"A", "B"};
  rp.returns.resize(2, 2);
  rp.returns << 0.1, 0.3, 0.1, 0.5;
  const Eigen::VectorXd mu = mean_vector(rp);
  CHECK(mu(0) == doctest::Approx(0.1));
  CHECK(mu(1) == doctest::Approx(0.4));
  const Eigen::VectorXd sd = stddev_vector(rp);
  CHECK(sd(0) == doctest::Approx(0.0));
  CHECK(sd(1) == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
}
