#include "mesofolio/panel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "mesofolio/io.hpp"
#include "mesofolio/rng.hpp"

namespace mesofolio {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

double parse_price_cell(const std::string& cell, const std::string& where) {
  if (cell.empty()) return kMissing;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("unparseable price cell '" + cell + "' at " + where);
  }
  if (pos != cell.size())
    throw std::runtime_error("trailing characters in price cell '" + cell + "' at " + where);
  if (std::isnan(v)) return kMissing;
  return v;
}

void check_dates_increasing(const std::vector<std::string>& dates) {
  for (std::size_t t = 1; t < dates.size(); ++t)
    if (!(dates[t - 1] < dates[t]))
      throw std::runtime_error("dates not strictly increasing near '" + dates[t] + "'");
}

struct RawPanel {
  std::vector<std::string> dates;
  std::vector<std::string> assets;
  Eigen::MatrixXd cells;  // NaN = missing
};

RawPanel read_wide(const io::CsvTable& table) {
  if (table.header.size() < 2 || table.header[0] != "date")
    throw std::runtime_error("wide layout expects a header starting with 'date'");
  RawPanel raw;
  raw.assets.assign(table.header.begin() + 1, table.header.end());
  raw.dates.reserve(table.rows.size());
  raw.cells.resize(static_cast<Eigen::Index>(table.rows.size()),
                   static_cast<Eigen::Index>(raw.assets.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size())
      throw std::runtime_error("row " + std::to_string(r + 2) + " has " +
                               std::to_string(row.size()) + " cells, expected " +
                               std::to_string(table.header.size()));
    raw.dates.push_back(row[0]);
    for (std::size_t c = 1; c < row.size(); ++c)
      raw.cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) =
          parse_price_cell(row[c], raw.dates.back() + "/" + raw.assets[c - 1]);
  }
  return raw;
}

RawPanel read_long(const io::CsvTable& table) {
  if (table.header.size() != 3 || table.header[0] != "date" || table.header[1] != "ticker" ||
      table.header[2] != "close")
    throw std::runtime_error("long layout expects header 'date,ticker,close'");
  std::set<std::string> date_set;
  std::vector<std::string> asset_order;
  std::set<std::string> asset_set;
  for (const auto& row : table.rows) {
    if (row.size() != 3) throw std::runtime_error("long layout rows need 3 cells");
    date_set.insert(row[0]);
    if (asset_set.insert(row[1]).second) asset_order.push_back(row[1]);
  }
  RawPanel raw;
  raw.dates.assign(date_set.begin(), date_set.end());
  raw.assets = asset_order;
  raw.cells = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(raw.dates.size()),
                                        static_cast<Eigen::Index>(raw.assets.size()), kMissing);
  for (const auto& row : table.rows) {
    auto t = std::lower_bound(raw.dates.begin(), raw.dates.end(), row[0]) - raw.dates.begin();
    auto i = std::find(raw.assets.begin(), raw.assets.end(), row[1]) - raw.assets.begin();
    raw.cells(t, i) = parse_price_cell(row[2], row[0] + "/" + row[1]);
  }
  return raw;
}

}  // namespace

PricePanel load_prices(const std::string& path, CsvLayout layout, double max_missing_fraction,
                       LoadReport* report) {
  const io::CsvTable table = io::read_csv(path);
  if (table.rows.empty()) throw std::runtime_error("no data rows in " + path);
  RawPanel raw = layout == CsvLayout::Wide ? read_wide(table) : read_long(table);
  check_dates_increasing(raw.dates);

  const Eigen::Index t_raw = raw.cells.rows();
  const Eigen::Index n_in = raw.cells.cols();
  LoadReport local;

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n_in; ++i) {
    Eigen::Index missing = 0;
    for (Eigen::Index t = 0; t < t_raw; ++t)
      if (std::isnan(raw.cells(t, i))) ++missing;
    if (static_cast<double>(missing) > max_missing_fraction * static_cast<double>(t_raw)) {
      local.dropped.push_back({raw.assets[i], "missing fraction above threshold", missing});
      continue;
    }
    if (std::isnan(raw.cells(0, i))) {
      local.dropped.push_back({raw.assets[i], "unfillable leading gap", missing});
      continue;
    }
    keep.push_back(i);
  }
  if (keep.empty()) throw std::runtime_error("no usable assets after missing-data filtering");

  PricePanel panel;
  panel.dates = raw.dates;
  panel.assets.reserve(keep.size());
  panel.prices.resize(t_raw, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const Eigen::Index i = keep[k];
    panel.assets.push_back(raw.assets[i]);
    double last = raw.cells(0, i);
    for (Eigen::Index t = 0; t < t_raw; ++t) {
      double v = raw.cells(t, i);
      if (std::isnan(v)) {
        v = last;
        ++local.filled_cells;
      }
      if (!(v > 0.0))
        throw std::runtime_error("non-positive price for " + panel.assets.back() + " at " +
                                 panel.dates[t]);
      panel.prices(t, static_cast<Eigen::Index>(k)) = v;
      last = v;
    }
  }
  if (report) *report = std::move(local);
  return panel;
}

void load_sectors(PricePanel& panel, const std::string& path) {
  const io::CsvTable table = io::read_csv(path);
  if (table.header.size() < 2)
    throw std::runtime_error("sector file needs columns 'asset,sector'");
  for (const auto& row : table.rows) {
    if (row.size() < 2) continue;
    panel.sectors[row[0]] = row[1];
  }
}

ReturnPanel to_returns(const PricePanel& panel, ReturnKind kind) {
  if (panel.n_obs() < 2)
    throw std::invalid_argument("need at least two price observations for returns");
  ReturnPanel rp;
  rp.assets = panel.assets;
  rp.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  rp.returns.resize(panel.n_obs() - 1, panel.n_assets());
  for (Eigen::Index t = 0; t + 1 < panel.n_obs(); ++t)
    for (Eigen::Index i = 0; i < panel.n_assets(); ++i) {
      const double ratio = panel.prices(t + 1, i) / panel.prices(t, i);
      rp.returns(t, i) = kind == ReturnKind::Log ? std::log(ratio) : ratio - 1.0;
    }
  return rp;
}

ReturnPanel standardize(const ReturnPanel& rp, StandardizeReport* report) {
  const Eigen::Index t_n = rp.n_obs();
  if (t_n < 2) throw std::invalid_argument("standardize needs T >= 2");
  ReturnPanel out = rp;
  StandardizeReport local;
  for (Eigen::Index i = 0; i < rp.n_assets(); ++i) {
    auto col = out.returns.col(i);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(t_n - 1);
    if (var <= 0.0) {
      col.setZero();
      local.zero_variance.push_back(i);
      continue;
    }
    col = (col.array() - mean) / std::sqrt(var);
  }
  out.standardized = true;
  if (report) *report = std::move(local);
  return out;
}

ReturnPanel slice_window(const ReturnPanel& rp, const WindowSpec& spec) {
  if (spec.delta <= 0) throw std::invalid_argument("empty window");
  const Eigen::Index begin =
      spec.mode == WindowMode::InSample ? spec.t0 - spec.delta : spec.t0;
  const Eigen::Index end = begin + spec.delta;
  if (begin < 0 || end > rp.n_obs())
    throw std::invalid_argument("window [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") outside panel of length " +
                                std::to_string(rp.n_obs()));
  ReturnPanel out;
  out.assets = rp.assets;
  out.standardized = rp.standardized;
  out.dates.assign(rp.dates.begin() + begin, rp.dates.begin() + end);
  out.returns = rp.returns.middleRows(begin, spec.delta);
  return out;
}

std::vector<ReturnPanel> rolling_windows(const ReturnPanel& rp, const RollingSpec& spec) {
  if (spec.length <= 0 || spec.step <= 0)
    throw std::invalid_argument("rolling window needs positive length and step");
  if (spec.length > rp.n_obs())
    throw std::invalid_argument("rolling window longer than available history");
  std::vector<ReturnPanel> out;
  for (Eigen::Index start = 0; start + spec.length <= rp.n_obs(); start += spec.step)
    out.push_back(slice_window(rp, {start + spec.length, spec.length, WindowMode::InSample}));
  return out;
}

std::vector<std::vector<Eigen::Index>> subsample_indices(Eigen::Index n_assets,
                                                         Eigen::Index size, int draws,
                                                         std::uint64_t seed) {
  if (size > n_assets)
    throw std::invalid_argument("subsample size exceeds asset count");
  if (size <= 0 || draws < 0) throw std::invalid_argument("invalid subsample spec");
  std::vector<std::vector<Eigen::Index>> out;
  out.reserve(static_cast<std::size_t>(draws));
  for (int d = 0; d < draws; ++d) {
    auto engine = make_engine(mix_seed(seed, static_cast<std::uint64_t>(d)));
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n_assets));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    // partial Fisher-Yates: the first `size` slots end up a uniform sample
    for (Eigen::Index k = 0; k < size; ++k) {
      std::uniform_int_distribution<Eigen::Index> pick(k, n_assets - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(engine))]);
    }
    pool.resize(static_cast<std::size_t>(size));
    std::sort(pool.begin(), pool.end());
    out.push_back(std::move(pool));
  }
  return out;
}

ReturnPanel select_assets(const ReturnPanel& rp, const std::vector<Eigen::Index>& idx) {
  ReturnPanel out;
  out.dates = rp.dates;
  out.standardized = rp.standardized;
  out.assets.reserve(idx.size());
  out.returns.resize(rp.n_obs(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= rp.n_assets())
      throw std::invalid_argument("asset index out of range");
    out.assets.push_back(rp.assets[static_cast<std::size_t>(idx[k])]);
    out.returns.col(static_cast<Eigen::Index>(k)) = rp.returns.col(idx[k]);
  }
  return out;
}

std::vector<ReturnPanel> subsample_assets(const ReturnPanel& rp, Eigen::Index size, int draws,
                                          std::uint64_t seed) {
  std::vector<ReturnPanel> out;
  for (const auto& idx : subsample_indices(rp.n_assets(), size, draws, seed))
    out.push_back(select_assets(rp, idx));
  return out;
}

ReturnPanel generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.n_assets <= 0 || spec.n_obs <= 0)
    throw std::invalid_argument("synthetic panel needs positive dimensions");
  if (!(spec.noise_sd > 0.0)) throw std::invalid_argument("noise_sd must be positive");
  Eigen::Index total = 0;
  for (const auto& b : spec.blocks) {
    if (b.size <= 0) throw std::invalid_argument("block sizes must be positive");
    if (b.intra_correlation < 0.0 || b.intra_correlation >= 1.0)
      throw std::invalid_argument("intra_correlation must lie in [0, 1)");
    total += b.size;
  }
  if (total != spec.n_assets)
    throw std::invalid_argument("block sizes must sum to n_assets");
  Eigen::VectorXd loading = spec.market_loading;
  if (loading.size() == 0) loading = Eigen::VectorXd::Zero(spec.n_assets);
  if (loading.size() != spec.n_assets)
    throw std::invalid_argument("market_loading length must match n_assets");

  const Eigen::Index t_n = spec.n_obs;
  const auto n_blocks = static_cast<Eigen::Index>(spec.blocks.size());
  auto engine = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::VectorXd market(t_n);
  for (Eigen::Index t = 0; t < t_n; ++t) market(t) = normal(engine);
  Eigen::MatrixXd group(t_n, std::max<Eigen::Index>(n_blocks, 1));
  for (Eigen::Index c = 0; c < n_blocks; ++c)
    for (Eigen::Index t = 0; t < t_n; ++t) group(t, c) = normal(engine);

  // b so that corr(b*g + e_i, b*g + e_j) = rho within a block:
  // b = noise_sd * sqrt(rho / (1 - rho))
  std::vector<double> block_scale(spec.blocks.size());
  std::vector<Eigen::Index> block_of(static_cast<std::size_t>(spec.n_assets));
  {
    Eigen::Index i = 0;
    for (std::size_t c = 0; c < spec.blocks.size(); ++c) {
      const double rho = spec.blocks[c].intra_correlation;
      block_scale[c] = spec.noise_sd * std::sqrt(rho / (1.0 - rho));
      for (Eigen::Index k = 0; k < spec.blocks[c].size; ++k)
        block_of[static_cast<std::size_t>(i++)] = static_cast<Eigen::Index>(c);
    }
  }

  ReturnPanel rp;
  rp.returns.resize(t_n, spec.n_assets);
  for (Eigen::Index i = 0; i < spec.n_assets; ++i) {
    const double b = spec.blocks.empty() ? 0.0 : block_scale[static_cast<std::size_t>(
                                                     block_of[static_cast<std::size_t>(i)])];
    const Eigen::Index c = spec.blocks.empty() ? 0 : block_of[static_cast<std::size_t>(i)];
    for (Eigen::Index t = 0; t < t_n; ++t) {
      const double e = spec.noise_sd * normal(engine);
      const double g = spec.blocks.empty() ? 0.0 : group(t, c);
      rp.returns(t, i) = loading(i) * market(t) + b * g + e;
    }
  }
  rp.assets.reserve(static_cast<std::size_t>(spec.n_assets));
  for (Eigen::Index i = 0; i < spec.n_assets; ++i)
    rp.assets.push_back("A" + std::to_string(i));
  rp.dates.reserve(static_cast<std::size_t>(t_n));
  for (Eigen::Index t = 0; t < t_n; ++t) rp.dates.push_back("t" + std::to_string(t));
  return rp;
}

ReturnPanel concat_rows(const ReturnPanel& first, const ReturnPanel& second) {
  if (first.assets != second.assets)
    throw std::invalid_argument("concat_rows needs identical asset sets");
  if (first.standardized != second.standardized)
    throw std::invalid_argument("concat_rows needs matching standardization");
  ReturnPanel out;
  out.assets = first.assets;
  out.standardized = first.standardized;
  out.dates = first.dates;
  for (std::size_t k = 0; k < second.dates.size(); ++k)
    out.dates.push_back(second.dates[k] + "+");
  out.returns.resize(first.n_obs() + second.n_obs(), first.n_assets());
  out.returns.topRows(first.n_obs()) = first.returns;
  out.returns.bottomRows(second.n_obs()) = second.returns;
  return out;
}

Eigen::VectorXd mean_vector(const ReturnPanel& rp) {
  if (rp.n_obs() < 1) throw std::invalid_argument("mean_vector needs T >= 1");
  return rp.returns.colwise().mean();
}

Eigen::VectorXd stddev_vector(const ReturnPanel& rp) {
  const Eigen::Index t_n = rp.n_obs();
  if (t_n < 2) throw std::invalid_argument("stddev_vector needs T >= 2");
  Eigen::VectorXd out(rp.n_assets());
  for (Eigen::Index i = 0; i < rp.n_assets(); ++i) {
    const double mean = rp.returns.col(i).mean();
    out(i) = std::sqrt((rp.returns.col(i).array() - mean).square().sum() /
                       static_cast<double>(t_n - 1));
  }
  return out;
}

}  // namespace mesofolio
