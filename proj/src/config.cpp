#include "mesofolio/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "mesofolio/io.hpp"

namespace mesofolio {

namespace {

using nlohmann::json;

CsvLayout layout_from_string(const std::string& s) {
  if (s == "wide") return CsvLayout::Wide;
  if (s == "long") return CsvLayout::Long;
  throw std::invalid_argument("layout must be 'wide' or 'long'");
}

std::string layout_to_string(CsvLayout l) { return l == CsvLayout::Wide ? "wide" : "long"; }

TargetMode target_mode_from_string(const std::string& s) {
  if (s == "quantile") return TargetMode::Quantile;
  if (s == "uniform") return TargetMode::Uniform;
  throw std::invalid_argument("target_mode must be 'quantile' or 'uniform'");
}

std::vector<StrategySpec> parse_strategies(const json& j, bool no_short,
                                           std::optional<double> target) {
  std::vector<StrategySpec> out;
  for (const auto& name : j) {
    StrategySpec spec;
    spec.name = strategy_from_string(name.get<std::string>());
    spec.no_short = no_short;
    spec.target_return = target;
    out.push_back(spec);
  }
  return out;
}

json strategies_to_json(const std::vector<StrategySpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) out.push_back(to_string(s.name));
  return out;
}

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw std::invalid_argument("unknown config key '" + where + it.key() + "'");
}

std::vector<BacktestWindow> parse_windows(const json& j) {
  std::vector<BacktestWindow> out;
  for (const auto& w : j) {
    BacktestWindow win;
    win.t0 = w.at("t0").get<Eigen::Index>();
    win.delta = w.at("delta").get<Eigen::Index>();
    out.push_back(win);
  }
  return out;
}

RollingSpec parse_rolling(const json& j) {
  RollingSpec r;
  r.length = j.at("length").get<Eigen::Index>();
  r.step = j.contains("step") ? j.at("step").get<Eigen::Index>() : r.length;
  return r;
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.optimize_strategies = {{Strategy::Equal, false, std::nullopt},
                             {Strategy::Markowitz, false, std::nullopt},
                             {Strategy::Rmt, false, std::nullopt},
                             {Strategy::Mesoscopic, false, std::nullopt},
                             {Strategy::Community, false, std::nullopt}};
  cfg.backtest_strategies = cfg.optimize_strategies;
  cfg.synth.n_assets = 100;
  cfg.synth.n_obs = 1000;
  cfg.synth.blocks = {{25, 0.3}, {25, 0.3}, {25, 0.3}, {25, 0.3}};
  cfg.synth.market_loading = Eigen::VectorXd::Constant(100, 0.5);
  cfg.synth.noise_sd = 1.0;
  return cfg;
}

void apply_config_json(RunConfig& cfg, const json& j) {
  reject_unknown(j, {"input", "seed", "out", "format", "workers", "filter", "communities",
                     "optimize", "backtest", "synth"},
                 "");

  if (j.contains("input")) {
    const auto& in = j.at("input");
    reject_unknown(in, {"path", "layout", "max_missing_fraction", "sectors", "returns"},
                   "input.");
    if (in.contains("path")) cfg.input_path = in.at("path").get<std::string>();
    if (in.contains("layout")) cfg.layout = layout_from_string(in.at("layout"));
    if (in.contains("max_missing_fraction"))
      cfg.max_missing_fraction = in.at("max_missing_fraction").get<double>();
    if (in.contains("sectors") && !in.at("sectors").is_null())
      cfg.sectors_path = in.at("sectors").get<std::string>();
    if (in.contains("returns"))
      cfg.return_kind = in.at("returns").get<std::string>() == "simple" ? ReturnKind::Simple
                                                                        : ReturnKind::Log;
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
  if (j.contains("format")) {
    cfg.format = j.at("format").get<std::string>();
    if (cfg.format != "json" && cfg.format != "csv" && cfg.format != "both")
      throw std::invalid_argument("format must be json, csv or both");
  }
  if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();

  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    reject_unknown(f, {"sign_uniformity", "window", "series"}, "filter.");
    if (f.contains("sign_uniformity")) cfg.sign_uniformity = f.at("sign_uniformity").get<double>();
    if (f.contains("window") && !f.at("window").is_null()) {
      BacktestWindow win;
      win.t0 = f.at("window").at("t0").get<Eigen::Index>();
      win.delta = f.at("window").at("delta").get<Eigen::Index>();
      cfg.filter_window = win;
    }
    if (f.contains("series") && !f.at("series").is_null()) {
      const auto& s = f.at("series");
      reject_unknown(s, {"length", "step", "subsample_size", "draws"}, "filter.series.");
      cfg.series_windows = parse_rolling(s);
      if (s.contains("subsample_size"))
        cfg.series_subsample_size = s.at("subsample_size").get<Eigen::Index>();
      if (s.contains("draws")) cfg.series_draws = s.at("draws").get<int>();
    }
  }

  if (j.contains("communities")) {
    const auto& c = j.at("communities");
    reject_unknown(c, {"restarts"}, "communities.");
    if (c.contains("restarts")) cfg.restarts = c.at("restarts").get<int>();
  }

  if (j.contains("optimize")) {
    const auto& o = j.at("optimize");
    reject_unknown(o,
                   {"strategies", "no_short", "target_return", "raw_diagonal",
                    "ridge_condition_threshold"},
                   "optimize.");
    const bool no_short = o.contains("no_short") && o.at("no_short").get<bool>();
    std::optional<double> target;
    if (o.contains("target_return") && !o.at("target_return").is_null())
      target = o.at("target_return").get<double>();
    if (o.contains("strategies"))
      cfg.optimize_strategies = parse_strategies(o.at("strategies"), no_short, target);
    else
      for (auto& s : cfg.optimize_strategies) {
        s.no_short = no_short;
        s.target_return = target;
      }
    if (o.contains("raw_diagonal")) cfg.raw_diagonal = o.at("raw_diagonal").get<bool>();
    if (o.contains("ridge_condition_threshold"))
      cfg.ridge_condition_threshold = o.at("ridge_condition_threshold").get<double>();
  }

  if (j.contains("backtest")) {
    const auto& b = j.at("backtest");
    reject_unknown(b,
                   {"windows", "rolling", "strategies", "no_short", "sizes", "draws",
                    "frontier_targets", "target_mode", "predict_with_empirical"},
                   "backtest.");
    if (b.contains("windows")) cfg.backtest_windows = parse_windows(b.at("windows"));
    if (b.contains("rolling") && !b.at("rolling").is_null())
      cfg.backtest_rolling = parse_rolling(b.at("rolling"));
    const bool no_short = b.contains("no_short") && b.at("no_short").get<bool>();
    if (b.contains("strategies"))
      cfg.backtest_strategies = parse_strategies(b.at("strategies"), no_short, std::nullopt);
    else
      for (auto& s : cfg.backtest_strategies) s.no_short = no_short;
    if (b.contains("sizes")) {
      cfg.subsample_sizes.clear();
      for (const auto& v : b.at("sizes")) cfg.subsample_sizes.push_back(v.get<Eigen::Index>());
    }
    if (b.contains("draws")) cfg.draws = b.at("draws").get<int>();
    if (b.contains("frontier_targets") && !b.at("frontier_targets").is_null())
      cfg.frontier_targets = b.at("frontier_targets").get<int>();
    if (b.contains("target_mode"))
      cfg.target_mode = target_mode_from_string(b.at("target_mode"));
    if (b.contains("predict_with_empirical"))
      cfg.predict_with_empirical = b.at("predict_with_empirical").get<bool>();
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown(s,
                   {"n_assets", "n_obs", "blocks", "market_loading", "noise_sd", "emit",
                    "start_price"},
                   "synth.");
    if (s.contains("n_assets")) cfg.synth.n_assets = s.at("n_assets").get<Eigen::Index>();
    if (s.contains("n_obs")) cfg.synth.n_obs = s.at("n_obs").get<Eigen::Index>();
    if (s.contains("blocks")) {
      cfg.synth.blocks.clear();
      for (const auto& blk : s.at("blocks"))
        cfg.synth.blocks.push_back(
            {blk.at(0).get<Eigen::Index>(), blk.at(1).get<double>()});
    }
    if (s.contains("market_loading")) {
      const auto& ml = s.at("market_loading");
      if (ml.is_number()) {
        cfg.synth.market_loading =
            Eigen::VectorXd::Constant(cfg.synth.n_assets, ml.get<double>());
      } else {
        cfg.synth.market_loading.resize(static_cast<Eigen::Index>(ml.size()));
        Eigen::Index i = 0;
        for (const auto& v : ml) cfg.synth.market_loading(i++) = v.get<double>();
      }
    } else if (cfg.synth.market_loading.size() != cfg.synth.n_assets) {
      cfg.synth.market_loading = Eigen::VectorXd::Zero(cfg.synth.n_assets);
    }
    if (s.contains("noise_sd")) cfg.synth.noise_sd = s.at("noise_sd").get<double>();
    if (s.contains("emit")) cfg.synth_emit = s.at("emit").get<std::string>();
    if (s.contains("start_price")) cfg.synth_start_price = s.at("start_price").get<double>();
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }
  RunConfig cfg = default_config();
  apply_config_json(cfg, j);
  return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  json j;
  j["input"] = {{"path", cfg.input_path},
                {"layout", layout_to_string(cfg.layout)},
                {"max_missing_fraction", cfg.max_missing_fraction},
                {"sectors", cfg.sectors_path},
                {"returns", cfg.return_kind == ReturnKind::Log ? "log" : "simple"}};
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["format"] = cfg.format;
  j["workers"] = cfg.workers;

  json filter = {{"sign_uniformity", cfg.sign_uniformity}};
  if (cfg.filter_window)
    filter["window"] = {{"t0", cfg.filter_window->t0}, {"delta", cfg.filter_window->delta}};
  if (cfg.series_windows)
    filter["series"] = {{"length", cfg.series_windows->length},
                        {"step", cfg.series_windows->step},
                        {"subsample_size", cfg.series_subsample_size},
                        {"draws", cfg.series_draws}};
  j["filter"] = filter;
  j["communities"] = {{"restarts", cfg.restarts}};

  json optimize = {{"strategies", strategies_to_json(cfg.optimize_strategies)},
                   {"raw_diagonal", cfg.raw_diagonal},
                   {"ridge_condition_threshold", cfg.ridge_condition_threshold}};
  if (!cfg.optimize_strategies.empty()) {
    optimize["no_short"] = cfg.optimize_strategies.front().no_short;
    if (cfg.optimize_strategies.front().target_return)
      optimize["target_return"] = *cfg.optimize_strategies.front().target_return;
  }
  j["optimize"] = optimize;

  json windows = json::array();
  for (const auto& w : cfg.backtest_windows)
    windows.push_back({{"t0", w.t0}, {"delta", w.delta}});
  json backtest = {{"windows", windows},
                   {"strategies", strategies_to_json(cfg.backtest_strategies)},
                   {"sizes", cfg.subsample_sizes},
                   {"draws", cfg.draws},
                   {"target_mode", cfg.target_mode == TargetMode::Quantile ? "quantile"
                                                                           : "uniform"},
                   {"predict_with_empirical", cfg.predict_with_empirical}};
  if (cfg.backtest_rolling)
    backtest["rolling"] = {{"length", cfg.backtest_rolling->length},
                           {"step", cfg.backtest_rolling->step}};
  if (!cfg.backtest_strategies.empty())
    backtest["no_short"] = cfg.backtest_strategies.front().no_short;
  if (cfg.frontier_targets) backtest["frontier_targets"] = *cfg.frontier_targets;
  j["backtest"] = backtest;

  json blocks = json::array();
  for (const auto& b : cfg.synth.blocks)
    blocks.push_back(json::array({b.size, b.intra_correlation}));
  std::vector<double> loading(cfg.synth.market_loading.data(),
                              cfg.synth.market_loading.data() + cfg.synth.market_loading.size());
  j["synth"] = {{"n_assets", cfg.synth.n_assets}, {"n_obs", cfg.synth.n_obs},
                {"blocks", blocks},              {"market_loading", loading},
                {"noise_sd", cfg.synth.noise_sd}, {"emit", cfg.synth_emit},
                {"start_price", cfg.synth_start_price}};
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  return io::to_hex(io::fnv1a64(config_to_json(cfg).dump()));
}

BacktestOptions backtest_options(const RunConfig& cfg) {
  BacktestOptions opts;
  opts.decompose.sign_uniformity = cfg.sign_uniformity;
  opts.louvain.restarts = cfg.restarts;
  opts.cov.raw_diagonal = cfg.raw_diagonal;
  opts.cov.ridge_condition_threshold = cfg.ridge_condition_threshold;
  opts.predict_with_empirical = cfg.predict_with_empirical;
  return opts;
}

}  // namespace mesofolio
