#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mesofolio/backtest.hpp"
#include "mesofolio/community.hpp"
#include "mesofolio/config.hpp"
#include "mesofolio/io.hpp"
#include "mesofolio/optimize.hpp"
#include "mesofolio/panel.hpp"
#include "mesofolio/parallel.hpp"
#include "mesofolio/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mesofolio;

namespace {

struct CliArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<std::string> layout;
  std::optional<std::string> input;
  int workers = -1;
};

RunConfig resolve_config(const CliArgs& args) {
  RunConfig cfg = default_config();
  if (const char* env = std::getenv("MESOFOLIO_SEED"))
    cfg.seed = std::strtoull(env, nullptr, 10);
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw std::runtime_error("cannot open config " + args.config_path);
    json j;
    in >> j;
    apply_config_json(cfg, j);
  }
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.out_dir = *args.out;
  if (args.format) cfg.format = *args.format;
  if (args.layout) cfg.layout = *args.layout == "long" ? CsvLayout::Long : CsvLayout::Wide;
  if (args.input) cfg.input_path = *args.input;
  if (args.workers >= 0) cfg.workers = args.workers;
  par::set_threads(cfg.workers);
  return cfg;
}

void write_config_echo(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  io::write_text(cfg.out_dir + "/config_resolved.json", config_to_json(cfg).dump(2) + "\n");
  io::write_text(cfg.out_dir + "/config_hash.txt", config_hash(cfg) + "\n");
}

bool want_json(const RunConfig& cfg) { return cfg.format != "csv"; }
bool want_csv(const RunConfig& cfg) { return cfg.format != "json"; }

struct Pipeline {
  PricePanel prices;
  ReturnPanel raw;       // full return panel
  ReturnPanel analysis;  // raw returns restricted to the analysis window
  LoadReport load_report;
};

Pipeline load_pipeline(const RunConfig& cfg) {
  if (cfg.input_path.empty())
    throw std::runtime_error("no input path configured (input.path or --input)");
  Pipeline p;
  p.prices = load_prices(cfg.input_path, cfg.layout, cfg.max_missing_fraction, &p.load_report);
  if (!cfg.sectors_path.empty()) load_sectors(p.prices, cfg.sectors_path);
  p.raw = to_returns(p.prices, cfg.return_kind);
  p.analysis = cfg.filter_window
                   ? slice_window(p.raw, {cfg.filter_window->t0, cfg.filter_window->delta,
                                          WindowMode::InSample})
                   : p.raw;
  return p;
}

Decomposition analysis_decomposition(const RunConfig& cfg, const ReturnPanel& analysis) {
  const ReturnPanel std_panel = standardize(analysis);
  const Eigen::MatrixXd corr = correlation_matrix(std_panel);
  DecomposeOptions opts;
  opts.sign_uniformity = cfg.sign_uniformity;
  return decompose(corr, mp_bounds(analysis.n_assets(), analysis.n_obs()), opts);
}

json index_set(const std::vector<int>& idx) {
  json out = json::array();
  for (int k : idx) out.push_back(k);
  return out;
}

json load_report_json(const LoadReport& report) {
  json dropped = json::array();
  for (const auto& d : report.dropped)
    dropped.push_back({{"asset", d.asset}, {"reason", d.reason}, {"missing", d.missing}});
  return {{"dropped", dropped}, {"filled_cells", report.filled_cells}};
}

int cmd_synth(const RunConfig& cfg) {
  write_config_echo(cfg);
  const ReturnPanel rp = generate_synthetic(cfg.synth, cfg.seed);
  if (cfg.synth_emit == "returns") {
    io::write_matrix_csv(cfg.out_dir + "/returns.csv", rp.returns, rp.assets, rp.dates, "date");
    return 0;
  }
  // integrate the returns into a positive price path
  Eigen::MatrixXd prices(rp.n_obs() + 1, rp.n_assets());
  prices.row(0).setConstant(cfg.synth_start_price);
  for (Eigen::Index t = 0; t < rp.n_obs(); ++t)
    prices.row(t + 1) = prices.row(t).array() * rp.returns.row(t).array().exp();
  std::vector<std::string> dates;
  dates.reserve(static_cast<std::size_t>(rp.n_obs()) + 1);
  for (Eigen::Index t = 0; t <= rp.n_obs(); ++t) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "d%06lld", static_cast<long long>(t));
    dates.emplace_back(buf);
  }
  io::write_matrix_csv(cfg.out_dir + "/prices.csv", prices, rp.assets, dates, "date");
  return 0;
}

int cmd_filter(const RunConfig& cfg) {
  write_config_echo(cfg);
  const Pipeline p = load_pipeline(cfg);
  const Decomposition dec = analysis_decomposition(cfg, p.analysis);
  const RiskFractions fr = risk_fractions(dec);

  if (want_csv(cfg)) {
    const auto& assets = p.analysis.assets;
    io::write_matrix_csv(cfg.out_dir + "/correlation.csv", dec.c, assets, assets, "asset");
    io::write_matrix_csv(cfg.out_dir + "/c_random.csv", dec.c_random, assets, assets, "asset");
    io::write_matrix_csv(cfg.out_dir + "/c_mesoscopic.csv", dec.c_meso, assets, assets, "asset");
    io::write_matrix_csv(cfg.out_dir + "/c_market.csv", dec.c_market, assets, assets, "asset");
    io::write_matrix_csv(cfg.out_dir + "/eigenvalues.csv", dec.eig.values, {"eigenvalue"});
  }
  if (want_json(cfg)) {
    json summary = {
        {"config_hash", config_hash(cfg)},
        {"n_assets", p.analysis.n_assets()},
        {"n_obs", p.analysis.n_obs()},
        {"bounds",
         {{"lambda_min", dec.bounds.lambda_min},
          {"lambda_max", dec.bounds.lambda_max},
          {"kappa", dec.bounds.kappa}}},
        {"indices", {{"random", index_set(dec.random_idx)},
                     {"mesoscopic", index_set(dec.meso_idx)},
                     {"market", index_set(dec.market_idx)}}},
        {"leading_sign_agreement", dec.leading_sign_agreement},
        {"market_candidate_rejected", dec.market_candidate_rejected},
        {"risk_fractions",
         {{"random", fr.random}, {"mesoscopic", fr.meso}, {"market", fr.market}}},
        {"load_report", load_report_json(p.load_report)},
    };
    io::write_text(cfg.out_dir + "/filter_summary.json", summary.dump(2) + "\n");
  }

  if (cfg.series_windows) {
    SubsampleSpec sub;
    sub.size = cfg.series_subsample_size > 0 ? cfg.series_subsample_size
                                             : p.analysis.n_assets();
    sub.draws = cfg.series_draws;
    sub.seed = cfg.seed;
    DecomposeOptions opts;
    opts.sign_uniformity = cfg.sign_uniformity;
    const RiskFractionSeries series =
        risk_fraction_series(p.raw, *cfg.series_windows, sub, opts);
    std::ostringstream out;
    out << "start,length,mean_random,mean_mesoscopic,mean_market,"
           "sd_random,sd_mesoscopic,sd_market\n";
    for (const auto& w : series.windows)
      out << w.start << ',' << w.length << ',' << io::format_double(w.mean.random) << ','
          << io::format_double(w.mean.meso) << ',' << io::format_double(w.mean.market) << ','
          << io::format_double(w.sd.random) << ',' << io::format_double(w.sd.meso) << ','
          << io::format_double(w.sd.market) << '\n';
    out << "across_sd,," << io::format_double(series.across_window_sd.random) << ','
        << io::format_double(series.across_window_sd.meso) << ','
        << io::format_double(series.across_window_sd.market) << ",,,\n";
    io::write_text(cfg.out_dir + "/risk_fraction_series.csv", out.str());
  }
  return 0;
}

int cmd_communities(const RunConfig& cfg) {
  write_config_echo(cfg);
  const Pipeline p = load_pipeline(cfg);
  const Decomposition dec = analysis_decomposition(cfg, p.analysis);
  LouvainOptions opts;
  opts.restarts = cfg.restarts;
  opts.seed = cfg.seed;
  const Partition part = detect_communities(dec, opts);

  if (want_csv(cfg)) {
    std::ostringstream out;
    out << "asset,community\n";
    for (std::size_t i = 0; i < p.analysis.assets.size(); ++i)
      out << p.analysis.assets[i] << ',' << part.assignment[i] << '\n';
    io::write_text(cfg.out_dir + "/partition.csv", out.str());
  }
  if (want_json(cfg)) {
    std::vector<int> sizes(static_cast<std::size_t>(part.n_communities), 0);
    for (int c : part.assignment) ++sizes[static_cast<std::size_t>(c)];
    json summary = {{"config_hash", config_hash(cfg)},
                    {"n_communities", part.n_communities},
                    {"modularity", part.modularity},
                    {"restarts", part.restarts},
                    {"seed", part.seed},
                    {"sizes", sizes},
                    {"assignment", part.assignment}};
    io::write_text(cfg.out_dir + "/partition.json", summary.dump(2) + "\n");
  }
  if (!p.prices.sectors.empty() && want_csv(cfg)) {
    std::map<std::pair<int, std::string>, int> counts;
    for (std::size_t i = 0; i < p.analysis.assets.size(); ++i) {
      auto it = p.prices.sectors.find(p.analysis.assets[i]);
      const std::string sector = it == p.prices.sectors.end() ? "unknown" : it->second;
      ++counts[{part.assignment[i], sector}];
    }
    std::ostringstream out;
    out << "community,sector,count\n";
    for (const auto& [key, count] : counts)
      out << key.first << ',' << key.second << ',' << count << '\n';
    io::write_text(cfg.out_dir + "/community_sectors.csv", out.str());
  }
  return 0;
}

json qp_diag_json(const QpDiagnostics& diag) {
  return {{"stationarity", diag.stationarity},
          {"constraint_violation", diag.constraint_violation},
          {"min_weight", diag.min_weight},
          {"min_multiplier", diag.min_multiplier},
          {"iterations", diag.iterations},
          {"converged", diag.converged}};
}

int cmd_optimize(const RunConfig& cfg) {
  write_config_echo(cfg);
  const Pipeline p = load_pipeline(cfg);
  const Decomposition dec = analysis_decomposition(cfg, p.analysis);
  const Eigen::VectorXd mu = mean_vector(p.analysis);

  CovOptions cov_opts;
  cov_opts.raw_diagonal = cfg.raw_diagonal;
  cov_opts.ridge_condition_threshold = cfg.ridge_condition_threshold;

  json strategies_json = json::object();
  std::vector<WeightVector> produced;
  int failures = 0;
  for (const auto& spec : cfg.optimize_strategies) {
    const std::string name = to_string(spec.name);
    try {
      QpDiagnostics diag;
      WeightVector w;
      CovSource source = CovSource::Empirical;
      if (spec.name == Strategy::Rmt) source = CovSource::RmtNoiseFree;
      if (spec.name == Strategy::Mesoscopic || spec.name == Strategy::Community)
        source = CovSource::Mesoscopic;
      if (spec.name == Strategy::Equal) {
        w = equal_weights(p.analysis.n_assets());
        diag.converged = true;
      } else if (spec.name == Strategy::Community) {
        LouvainOptions lopts;
        lopts.restarts = cfg.restarts;
        lopts.seed = cfg.seed;
        const Partition part = detect_communities(dec, lopts);
        const CovarianceInput cov = make_covariance(p.analysis, dec, source, cov_opts);
        const double* target = spec.target_return ? &*spec.target_return : nullptr;
        w = community_gmv(cov, part, target ? &mu : nullptr, target, spec.no_short, &diag);
      } else {
        const CovarianceInput cov = make_covariance(p.analysis, dec, source, cov_opts);
        const double* target = spec.target_return ? &*spec.target_return : nullptr;
        w = solve_constrained(cov, target ? &mu : nullptr, target, spec.no_short, &diag);
        w.strategy = spec.name;
      }
      produced.push_back(w);
      if (want_csv(cfg)) {
        std::ostringstream out;
        out << "asset,weight\n";
        for (Eigen::Index i = 0; i < w.weights.size(); ++i)
          out << p.analysis.assets[static_cast<std::size_t>(i)] << ','
              << io::format_double(w.weights(i)) << '\n';
        io::write_text(cfg.out_dir + "/weights_" + name + ".csv", out.str());
      }
      json entry = {{"effective_size", effective_size(w)},
                    {"covariance", to_string(source)},
                    {"no_short", spec.no_short},
                    {"diagnostics", qp_diag_json(diag)}};
      if (spec.target_return) entry["target_return"] = *spec.target_return;
      strategies_json[name] = entry;
    } catch (const std::exception& e) {
      strategies_json[name] = {{"error", e.what()}};
      ++failures;
    }
  }

  if (produced.size() > 1 && want_csv(cfg)) {
    const WeightComparison cmp = weight_comparison(produced);
    std::ostringstream out;
    out << "strategy,to_equal_l1,effective_size";
    for (const auto s : cmp.strategies) out << ",l1_" << to_string(s);
    out << '\n';
    for (Eigen::Index i = 0; i < cmp.to_equal.size(); ++i) {
      out << to_string(cmp.strategies[static_cast<std::size_t>(i)]) << ','
          << io::format_double(cmp.to_equal(i)) << ','
          << io::format_double(cmp.effective_size(i));
      for (Eigen::Index j = 0; j < cmp.to_equal.size(); ++j)
        out << ',' << io::format_double(cmp.l1(i, j));
      out << '\n';
    }
    io::write_text(cfg.out_dir + "/weight_comparison.csv", out.str());
  }

  json summary = {{"config_hash", config_hash(cfg)}, {"strategies", strategies_json}};
  if (p.analysis.n_assets() == 2) {
    const Eigen::VectorXd sd = stddev_vector(p.analysis);
    try {
      const TwoAssetShift shift =
          two_asset_shift(sd(0), sd(1), dec.c(0, 1), dec.c_meso(0, 1));
      summary["two_asset"] = {{"w1_star", shift.w1_star},
                              {"w1_adjusted", shift.w1_adjusted},
                              {"delta", shift.delta}};
    } catch (const std::exception& e) {
      summary["two_asset"] = {{"error", e.what()}};
    }
  }
  if (want_json(cfg))
    io::write_text(cfg.out_dir + "/weights.json", summary.dump(2) + "\n");
  return failures > 0 ? 1 : 0;
}

int cmd_backtest(const RunConfig& cfg) {
  write_config_echo(cfg);
  const Pipeline p = load_pipeline(cfg);

  std::vector<BacktestWindow> windows = cfg.backtest_windows;
  if (cfg.backtest_rolling) {
    // each rolling span splits at its midpoint into in/out halves
    const Eigen::Index span = cfg.backtest_rolling->length;
    for (Eigen::Index start = 0; start + span <= p.raw.n_obs();
         start += cfg.backtest_rolling->step)
      windows.push_back({start + span / 2, span / 2});
  }
  if (windows.empty())
    throw std::runtime_error("no backtest windows configured");

  BacktestSubsampling sub;
  sub.sizes = cfg.subsample_sizes;
  sub.draws = cfg.draws;
  sub.seed = cfg.seed;
  const BacktestOptions opts = backtest_options(cfg);

  const BacktestReport report =
      run_backtest(p.raw, windows, cfg.backtest_strategies, sub, opts);

  int failures = 0;
  if (want_csv(cfg)) {
    std::ostringstream rows;
    rows << "window,size,draw,strategy,target,covariance,predicted_risk,realized_risk,"
            "reliability,effective_size,error\n";
    for (const auto& row : report.rows) {
      rows << row.window << ',' << row.size << ',' << row.draw << ','
           << to_string(row.strategy) << ','
           << (row.target_return ? io::format_double(*row.target_return) : "") << ','
           << row.cov_source << ',';
      if (row.ok())
        rows << io::format_double(row.predicted_risk) << ','
             << io::format_double(row.realized_risk) << ','
             << io::format_double(row.reliability) << ','
             << io::format_double(row.effective_size) << ",\n";
      else
        rows << ",,,," << row.error << '\n';
    }
    io::write_text(cfg.out_dir + "/backtest_rows.csv", rows.str());

    std::ostringstream agg;
    agg << "strategy,window,size,mean_reliability,mean_effective_size,rows,failures\n";
    for (const auto& a : report.aggregates)
      agg << to_string(a.strategy) << ',' << a.window << ',' << a.size << ','
          << io::format_double(a.mean_reliability) << ','
          << io::format_double(a.mean_effective_size) << ',' << a.rows << ',' << a.failures
          << '\n';
    io::write_text(cfg.out_dir + "/backtest_summary.csv", agg.str());

    std::ostringstream eff;
    eff << "window,size,draw,strategy,effective_size\n";
    for (const auto& row : report.rows)
      if (row.ok())
        eff << row.window << ',' << row.size << ',' << row.draw << ','
            << to_string(row.strategy) << ',' << io::format_double(row.effective_size)
            << '\n';
    io::write_text(cfg.out_dir + "/effective_size.csv", eff.str());
  }

  json failures_json = json::array();
  for (const auto& row : report.rows)
    if (!row.ok()) {
      ++failures;
      failures_json.push_back({{"window", row.window},
                               {"size", row.size},
                               {"draw", row.draw},
                               {"strategy", to_string(row.strategy)},
                               {"error", row.error}});
    }

  if (want_json(cfg)) {
    json rows_json = json::array();
    for (const auto& row : report.rows) {
      json r = {{"window", row.window}, {"size", row.size},
                {"draw", row.draw},     {"strategy", to_string(row.strategy)},
                {"covariance", row.cov_source}};
      if (row.target_return) r["target"] = *row.target_return;
      if (row.ok()) {
        r["predicted_risk"] = row.predicted_risk;
        r["realized_risk"] = row.realized_risk;
        r["reliability"] = row.reliability;
        r["effective_size"] = row.effective_size;
        r["weights"] = std::vector<double>(row.weights.data(),
                                           row.weights.data() + row.weights.size());
      } else {
        r["error"] = row.error;
      }
      rows_json.push_back(r);
    }
    json agg_json = json::array();
    for (const auto& a : report.aggregates)
      agg_json.push_back({{"strategy", to_string(a.strategy)},
                          {"window", a.window},
                          {"size", a.size},
                          {"mean_reliability", a.mean_reliability},
                          {"mean_effective_size", a.mean_effective_size},
                          {"rows", a.rows},
                          {"failures", a.failures}});
    json overall = json::array();
    for (const auto& [strategy, s] : report.overall)
      overall.push_back({{"strategy", to_string(strategy)},
                         {"min", s.min},
                         {"q1", s.q1},
                         {"median", s.median},
                         {"mean", s.mean},
                         {"q3", s.q3},
                         {"count", s.count}});
    json out = {{"config_hash", config_hash(cfg)},
                {"config", config_to_json(cfg)},
                {"seed", report.seed},
                {"rows", rows_json},
                {"aggregates", agg_json},
                {"overall_reliability", overall},
                {"failures", failures_json}};
    io::write_text(cfg.out_dir + "/backtest.json", out.dump(2) + "\n");
  }

  if (cfg.frontier_targets) {
    json frontier_json = json::object();
    std::ostringstream frontier_csv;
    frontier_csv << "window,strategy,target,predicted_risk,realized_risk,reliability,error\n";
    for (std::size_t w = 0; w < windows.size(); ++w) {
      for (const auto& spec : cfg.backtest_strategies) {
        if (spec.name == Strategy::Equal) continue;  // no target dependence
        const std::string key =
            "w" + std::to_string(w) + "_" + to_string(spec.name);
        try {
          const FrontierReliability fr = frontier_reliability(
              p.raw, windows[w], spec, *cfg.frontier_targets, cfg.target_mode, opts);
          frontier_json[key] = {{"min", fr.summary.min},
                                {"q1", fr.summary.q1},
                                {"median", fr.summary.median},
                                {"mean", fr.summary.mean},
                                {"q3", fr.summary.q3},
                                {"count", fr.summary.count},
                                {"infeasible", fr.infeasible}};
          for (const auto& row : fr.targets) {
            frontier_csv << w << ',' << to_string(spec.name) << ','
                         << io::format_double(row.target) << ',';
            if (row.ok())
              frontier_csv << io::format_double(row.predicted_risk) << ','
                           << io::format_double(row.realized_risk) << ','
                           << io::format_double(row.reliability) << ",\n";
            else
              frontier_csv << ",,," << row.error << '\n';
          }
        } catch (const std::exception& e) {
          frontier_json[key] = {{"error", e.what()}};
          ++failures;
        }
      }
    }
    if (want_json(cfg))
      io::write_text(cfg.out_dir + "/frontier.json",
                     json{{"config_hash", config_hash(cfg)},
                          {"summaries", frontier_json}}.dump(2) + "\n");
    if (want_csv(cfg))
      io::write_text(cfg.out_dir + "/frontier.csv", frontier_csv.str());
  }

  return failures > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RMT-filtered portfolio construction and backtesting"};
  app.require_subcommand(1);

  CliArgs args;
  app.add_option("--config", args.config_path, "JSON run configuration");
  app.add_option("--seed", args.seed, "Base RNG seed (overrides config and MESOFOLIO_SEED)");
  app.add_option("--out", args.out, "Output directory");
  app.add_option("--format", args.format, "Output formats: json | csv | both")
      ->check(CLI::IsMember({"json", "csv", "both"}));
  app.add_option("--layout", args.layout, "Price CSV layout: wide | long")
      ->check(CLI::IsMember({"wide", "long"}));
  app.add_option("--input", args.input, "Price CSV path (overrides config)");
  app.add_option("--workers", args.workers, "Worker threads (0 = all cores)");

  auto* synth = app.add_subcommand("synth", "Generate a planted synthetic panel");
  auto* filter = app.add_subcommand("filter", "Correlation decomposition artifacts");
  auto* communities = app.add_subcommand("communities", "Mesoscopic community detection");
  auto* optimize = app.add_subcommand("optimize", "Per-strategy portfolio weights");
  auto* backtest = app.add_subcommand("backtest", "In/out-of-sample reliability grid");

  CLI11_PARSE(app, argc, argv);

  std::string command;
  std::string out_dir = args.out.value_or("out");
  try {
    const RunConfig cfg = resolve_config(args);
    out_dir = cfg.out_dir;
    if (synth->parsed()) return (command = "synth", cmd_synth(cfg));
    if (filter->parsed()) return (command = "filter", cmd_filter(cfg));
    if (communities->parsed()) return (command = "communities", cmd_communities(cfg));
    if (optimize->parsed()) return (command = "optimize", cmd_optimize(cfg));
    if (backtest->parsed()) return (command = "backtest", cmd_backtest(cfg));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      fs::create_directories(out_dir);
      io::write_text(out_dir + "/error.json",
                     json{{"command", command}, {"error", e.what()}}.dump(2) + "\n");
    } catch (...) {
    }
    return 2;
  }
  return 2;
}
