// Timing comparison of the OpenMP kernels against their serial references.
// The outputs must agree exactly; the checksum column guards that here too.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "mesofolio/backtest.hpp"
#include "mesofolio/community.hpp"
#include "mesofolio/panel.hpp"
#include "mesofolio/parallel.hpp"
#include "mesofolio/rng.hpp"
#include "mesofolio/spectral.hpp"

using namespace mesofolio;

namespace {

double time_ms(const std::function<void()>& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

void row(const char* name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-28s %10.1f ms %10.1f ms   %5.2fx   %s\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, identical ? "identical" : "MISMATCH");
}

ReturnPanel make_panel(Eigen::Index n, Eigen::Index t, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_assets = n;
  spec.n_obs = t;
  spec.blocks = {{n / 4, 0.35}, {n / 4, 0.35}, {n / 4, 0.35}, {n - 3 * (n / 4), 0.35}};
  spec.market_loading = Eigen::VectorXd::Constant(n, 0.5);
  return generate_synthetic(spec, seed);
}

}  // namespace

int main() {
  std::printf("%-28s %13s %13s %8s\n", "kernel", "serial", "openmp", "speedup");

  {
    const ReturnPanel z = standardize(make_panel(400, 2000, 1));
    Eigen::MatrixXd serial_out, parallel_out;
    const double serial_ms = time_ms([&] { serial_out = correlation_matrix_serial(z); });
    const double parallel_ms = time_ms([&] { parallel_out = correlation_matrix(z); });
    row("correlation 400x2000", serial_ms, parallel_ms,
        (serial_out - parallel_out).cwiseAbs().maxCoeff() == 0.0);
  }

  {
    const ReturnPanel z = standardize(make_panel(300, 1500, 2));
    const Decomposition dec = decompose(correlation_matrix(z), mp_bounds(300, 1500));
    Partition serial_part, parallel_part;
    const double serial_ms = time_ms([&] {
      par::set_threads(1);
      serial_part = detect_communities(dec, {64, 7});
    });
    const double parallel_ms = time_ms([&] {
      par::set_threads(0);
      parallel_part = detect_communities(dec, {64, 7});
    });
    row("louvain 300 assets x64", serial_ms, parallel_ms,
        serial_part.assignment == parallel_part.assignment &&
            serial_part.modularity == parallel_part.modularity);
  }

  {
    const ReturnPanel rp = make_panel(80, 1200, 3);
    const std::vector<StrategySpec> strategies = {{Strategy::Equal, false, std::nullopt},
                                                  {Strategy::Markowitz, false, std::nullopt},
                                                  {Strategy::Mesoscopic, false, std::nullopt},
                                                  {Strategy::Community, false, std::nullopt}};
    const std::vector<BacktestWindow> windows = {{300, 300}, {600, 300}, {900, 300}};
    const BacktestSubsampling sub{{60}, 8, 11};
    BacktestReport serial_report, parallel_report;
    const double serial_ms = time_ms([&] {
      par::set_threads(1);
      serial_report = run_backtest(rp, windows, strategies, sub);
    });
    const double parallel_ms = time_ms([&] {
      par::set_threads(0);
      parallel_report = run_backtest(rp, windows, strategies, sub);
    });
    bool identical = serial_report.rows.size() == parallel_report.rows.size();
    for (std::size_t k = 0; identical && k < serial_report.rows.size(); ++k) {
      const auto& a = serial_report.rows[k];
      const auto& b = parallel_report.rows[k];
      identical = a.error == b.error && a.predicted_risk == b.predicted_risk &&
                  a.realized_risk == b.realized_risk &&
                  (a.weights - b.weights).cwiseAbs().maxCoeff() == 0.0;
    }
    row("backtest 3x8x4 grid", serial_ms, parallel_ms, identical);
  }

  par::set_threads(0);
  return 0;
}
