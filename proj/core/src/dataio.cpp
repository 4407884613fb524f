#include "hiertrade/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "hiertrade/errors.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_field(const std::string& field, const std::string& file, std::size_t lineno) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError(file + ":" + std::to_string(lineno) + ": bad numeric field '" + field + "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::int64_t> times;
  std::vector<Eigen::VectorXd> rows;  // numeric columns only
  std::vector<bool> interpolated;
  std::map<std::string, std::string> meta;
};

CsvTable read_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open file: " + path);

  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;

  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (have_header)
        throw DataError(path + ":" + std::to_string(lineno) + ": comment after header");
      std::string body = line.substr(1);
      std::size_t eq = body.find('=');
      if (eq != std::string::npos) {
        std::string key = body.substr(0, eq), value = body.substr(eq + 1);
        auto trim = [](std::string& s) {
          while (!s.empty() && s.front() == ' ') s.erase(s.begin());
          while (!s.empty() && s.back() == ' ') s.pop_back();
        };
        trim(key);
        trim(value);
        if (!key.empty()) table.meta[key] = value;
      }
      continue;
    }
    std::vector<std::string> fields = split_csv_line(line);
    if (!have_header) {
      table.header = fields;
      if (table.header.size() < 2 || table.header[0] != "timestamp")
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": header must start with 'timestamp'");
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(table.header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    try {
      table.times.push_back(parse_iso8601_utc(fields[0]));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Eigen::VectorXd row(static_cast<Eigen::Index>(fields.size() - 1));
    for (std::size_t c = 1; c < fields.size(); ++c)
      row(static_cast<Eigen::Index>(c - 1)) = parse_field(fields[c], path, lineno);
    table.rows.push_back(std::move(row));
    table.interpolated.push_back(false);
  }
  if (!have_header) throw DataError(path + ": no header row");
  if (table.times.size() < 2) throw DataError(path + ": need at least two data rows");
  return table;
}

constexpr std::int64_t kHour = 3600;

void fill_gaps(CsvTable& table, int max_gap_fill, const std::string& path) {
  CsvTable out;
  out.header = table.header;
  out.meta = table.meta;
  out.times.push_back(table.times[0]);
  out.rows.push_back(table.rows[0]);
  out.interpolated.push_back(false);

  for (std::size_t r = 1; r < table.times.size(); ++r) {
    std::int64_t prev = table.times[r - 1], cur = table.times[r];
    std::int64_t dt = cur - prev;
    if (dt <= 0)
      throw DataError(path + ": timestamps not strictly increasing at " +
                      format_iso8601_utc(cur));
    if (dt % kHour != 0)
      throw DataError(path + ": timestamp not on the hourly grid at " + format_iso8601_utc(cur));
    std::int64_t missing = dt / kHour - 1;
    if (missing > max_gap_fill)
      throw DataError(path + ": gap of " + std::to_string(missing) + " hours before " +
                      format_iso8601_utc(cur) + " exceeds the fillable maximum of " +
                      std::to_string(max_gap_fill));
    for (std::int64_t g = 1; g <= missing; ++g) {
      double frac = static_cast<double>(g) / static_cast<double>(missing + 1);
      out.times.push_back(prev + g * kHour);
      out.rows.push_back(table.rows[r - 1] + frac * (table.rows[r] - table.rows[r - 1]));
      out.interpolated.push_back(true);
    }
    out.times.push_back(cur);
    out.rows.push_back(table.rows[r]);
    out.interpolated.push_back(false);
  }
  table = std::move(out);
}

}  // namespace

RawDataset ingest_csv(const std::string& generation_path, const std::string& price_path,
                      const IngestOptions& options) {
  if (options.max_gap_fill < 0) throw ConfigError("max_gap_fill must be >= 0");
  if (!(options.coherence_tol > 0.0)) throw ConfigError("coherence_tol must be positive");

  CsvTable gen = read_table(generation_path);
  CsvTable price = read_table(price_path);
  fill_gaps(gen, options.max_gap_fill, generation_path);
  fill_gaps(price, options.max_gap_fill, price_path);

  // Generation header: timestamp,leaf_1..leaf_m[,aggregate]
  bool has_aggregate = gen.header.back() == "aggregate";
  int m = static_cast<int>(gen.header.size()) - 1 - (has_aggregate ? 1 : 0);
  if (m < 1) throw DataError(generation_path + ": no leaf columns");
  for (int i = 0; i < m; ++i) {
    std::string want = "leaf_" + std::to_string(i + 1);
    if (gen.header[static_cast<std::size_t>(i) + 1] != want)
      throw DataError(generation_path + ": expected column '" + want + "', got '" +
                      gen.header[static_cast<std::size_t>(i) + 1] + "'");
  }

  if (price.header != std::vector<std::string>{"timestamp", "spot", "up_reg", "down_reg"})
    throw DataError(price_path + ": header must be timestamp,spot,up_reg,down_reg");

  if (gen.times != price.times)
    throw DataError("generation and price files do not cover the same hourly grid");

  const std::size_t rows = gen.times.size();
  RawDataset data;
  data.times = gen.times;
  data.leaves.resize(static_cast<Eigen::Index>(rows), m);
  data.aggregate.resize(static_cast<Eigen::Index>(rows));
  data.hours.reserve(rows);
  data.interpolated.resize(rows);
  data.meta = gen.meta;
  data.meta.insert(price.meta.begin(), price.meta.end());

  for (std::size_t r = 0; r < rows; ++r) {
    const Eigen::VectorXd& row = gen.rows[r];
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      double v = row(i);
      if (!std::isfinite(v) || v < 0.0)
        throw DataError(generation_path + ": negative or non-finite generation at " +
                        format_iso8601_utc(data.times[r]));
      data.leaves(static_cast<Eigen::Index>(r), i) = v;
      sum += v;
    }
    if (has_aggregate) {
      double agg = row(m);
      if (std::abs(agg - sum) > options.coherence_tol * (1.0 + std::abs(agg)))
        throw DataError(generation_path + ": aggregate column incoherent at " +
                        format_iso8601_utc(data.times[r]) + " (column " + fmt_double(agg) +
                        ", leaf sum " + fmt_double(sum) + ")");
      data.aggregate(static_cast<Eigen::Index>(r)) = agg;
    } else {
      data.aggregate(static_cast<Eigen::Index>(r)) = sum;
    }

    const Eigen::VectorXd& prow = price.rows[r];
    try {
      data.hours.push_back(make_market_hour(data.times[r], prow(0), prow(1), prow(2)));
    } catch (const DataError& e) {
      throw DataError(price_path + ": " + e.what() + " at " + format_iso8601_utc(data.times[r]));
    }
    data.interpolated[r] = gen.interpolated[r] || price.interpolated[r];
  }

  if (options.capacities.size() > 0) {
    if (options.capacities.size() != m)
      throw ConfigError("capacities length does not match the leaf count");
    for (int i = 0; i < m; ++i) {
      double cap = options.capacities(i);
      if (!(cap > 0.0)) throw ConfigError("capacities must be positive");
      double observed = data.leaves.col(i).maxCoeff();
      if (observed > cap * (1.0 + 1e-9))
        throw DataError(generation_path + ": leaf_" + std::to_string(i + 1) + " exceeds capacity " +
                        fmt_double(cap) + " (max observed " + fmt_double(observed) + ")");
    }
    data.capacities = options.capacities;
  } else {
    data.capacities = data.leaves.colwise().maxCoeff();
    for (int i = 0; i < m; ++i)
      if (!(data.capacities(i) > 0.0))
        throw DataError(generation_path + ": leaf_" + std::to_string(i + 1) +
                        " is identically zero; supply capacities explicitly");
  }
  return data;
}

namespace {

void write_meta(std::ostream& os, const std::map<std::string, std::string>& meta) {
  for (const auto& [key, value] : meta) os << "# " << key << '=' << value << '\n';
}

}  // namespace

void write_generation_csv(const RawDataset& data, const std::string& path,
                          bool include_aggregate) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open file for writing: " + path);
  write_meta(os, data.meta);
  os << "timestamp";
  for (int i = 1; i <= data.producers(); ++i) os << ",leaf_" << i;
  if (include_aggregate) os << ",aggregate";
  os << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    os << format_iso8601_utc(data.times[r]);
    for (int i = 0; i < data.producers(); ++i)
      os << ',' << fmt_double(data.leaves(static_cast<Eigen::Index>(r), i));
    if (include_aggregate) os << ',' << fmt_double(data.aggregate(static_cast<Eigen::Index>(r)));
    os << '\n';
  }
  if (!os) throw DataError("failed writing file: " + path);
}

void write_price_csv(const RawDataset& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open file for writing: " + path);
  write_meta(os, data.meta);
  os << "timestamp,spot,up_reg,down_reg\n";
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const MarketHour& h = data.hours[r];
    os << format_iso8601_utc(data.times[r]) << ',' << fmt_double(h.spot) << ','
       << fmt_double(h.up_reg) << ',' << fmt_double(h.down_reg) << '\n';
  }
  if (!os) throw DataError("failed writing file: " + path);
}

void validate(const PriceRegimeSpec& spec) {
  if (spec.kind == "fixed") {
    validate(MarketHour{0, spec.spot, spec.up_reg, spec.down_reg});
    return;
  }
  if (spec.kind != "regime_switching")
    throw ConfigError("price regime kind must be 'fixed' or 'regime_switching'");
  if (!(spec.spot_mean > 0.0)) throw ConfigError("spot_mean must be positive");
  if (!(spec.spot_ar >= 0.0 && spec.spot_ar < 1.0))
    throw ConfigError("spot_ar must lie in [0, 1)");
  if (!(spec.spot_sd >= 0.0)) throw ConfigError("spot_sd must be >= 0");
  double p = spec.p_up + spec.p_down + spec.p_both;
  if (spec.p_up < 0.0 || spec.p_down < 0.0 || spec.p_both < 0.0 || p > 1.0)
    throw ConfigError("regime probabilities must be non-negative and sum to at most 1");
  if (!(spec.penalty_mean_up > 0.0) || !(spec.penalty_mean_down > 0.0))
    throw ConfigError("penalty means must be positive");
}

void validate(const SyntheticSpec& spec) {
  if (spec.producers < 1) throw ConfigError("producers must be >= 1");
  if (spec.capacities.size() != spec.producers)
    throw ConfigError("capacities length must equal producers");
  for (Eigen::Index i = 0; i < spec.capacities.size(); ++i)
    if (!(spec.capacities(i) > 0.0)) throw ConfigError("capacities must be positive");
  if (!(spec.latent_ar >= 0.0 && spec.latent_ar < 1.0))
    throw ConfigError("latent_ar must lie in [0, 1)");
  if (!(spec.latent_sd > 0.0)) throw ConfigError("latent_sd must be positive");
  if (!(spec.cross_correlation >= 0.0 && spec.cross_correlation < 1.0))
    throw ConfigError("cross_correlation must lie in [0, 1)");
  if (!(spec.mean_fraction > 0.0 && spec.mean_fraction < 1.0))
    throw ConfigError("mean_fraction must lie in (0, 1)");
  if (!(spec.logistic_slope > 0.0)) throw ConfigError("logistic_slope must be positive");
  if (spec.hours < 48) throw ConfigError("hours must be >= 48");
  validate(spec.prices);
}

RawDataset synthesize(const SyntheticSpec& spec) {
  validate(spec);
  const int m = spec.producers;
  const std::size_t rows = static_cast<std::size_t>(spec.hours);

  // Innovation covariance: equicorrelated, scaled so the latent process is
  // stationary with sd latent_sd.
  Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(m, m, spec.cross_correlation);
  corr.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) throw ConfigError("cross-correlation matrix not PSD");
  Eigen::MatrixXd chol = llt.matrixL();
  const double innov_sd = spec.latent_sd * std::sqrt(1.0 - spec.latent_ar * spec.latent_ar);
  const double bias = std::log(spec.mean_fraction / (1.0 - spec.mean_fraction));

  std::mt19937_64 rng(derive_seed(spec.seed, "synthesize-generation"));
  std::normal_distribution<double> normal(0.0, 1.0);

  auto draw = [&](double sd) {
    Eigen::VectorXd z(m);
    for (int i = 0; i < m; ++i) z(i) = normal(rng);
    return Eigen::VectorXd(sd * (chol * z));
  };

  RawDataset data;
  data.times.resize(rows);
  data.leaves.resize(static_cast<Eigen::Index>(rows), m);
  data.aggregate.resize(static_cast<Eigen::Index>(rows));
  data.hours.reserve(rows);
  data.interpolated.assign(rows, false);
  data.capacities = spec.capacities;

  Eigen::VectorXd x = draw(spec.latent_sd);
  for (std::size_t r = 0; r < rows; ++r) {
    if (r > 0) x = spec.latent_ar * x + draw(innov_sd);
    data.times[r] = spec.start_time + static_cast<std::int64_t>(r) * 3600;
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      double u = bias + x(i) / spec.logistic_slope;
      double g = spec.capacities(i) / (1.0 + std::exp(-u));
      data.leaves(static_cast<Eigen::Index>(r), i) = g;
      sum += g;
    }
    data.aggregate(static_cast<Eigen::Index>(r)) = sum;
  }

  std::mt19937_64 price_rng(derive_seed(spec.seed, "synthesize-prices"));
  if (spec.prices.kind == "fixed") {
    for (std::size_t r = 0; r < rows; ++r)
      data.hours.push_back(
          make_market_hour(data.times[r], spec.prices.spot, spec.prices.up_reg,
                           spec.prices.down_reg));
  } else {
    std::normal_distribution<double> pnoise(0.0, spec.prices.spot_sd *
                                                     std::sqrt(1.0 - spec.prices.spot_ar *
                                                                         spec.prices.spot_ar));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> exp_up(1.0 / spec.prices.penalty_mean_up);
    std::exponential_distribution<double> exp_down(1.0 / spec.prices.penalty_mean_down);
    double spot = spec.prices.spot_mean;
    for (std::size_t r = 0; r < rows; ++r) {
      if (r > 0)
        spot = spec.prices.spot_mean + spec.prices.spot_ar * (spot - spec.prices.spot_mean) +
               pnoise(price_rng);
      if (spot < 0.0) spot = 0.0;
      double u = unif(price_rng);
      bool up_side = false, down_side = false;
      if (u < spec.prices.p_up) {
        up_side = true;
      } else if (u < spec.prices.p_up + spec.prices.p_down) {
        down_side = true;
      } else if (u < spec.prices.p_up + spec.prices.p_down + spec.prices.p_both) {
        up_side = down_side = true;
      }
      double up = up_side ? spot + exp_up(price_rng) : spot;
      double down = down_side ? std::max(spot - exp_down(price_rng), 0.0) : spot;
      data.hours.push_back(make_market_hour(data.times[r], spot, up, down));
    }
  }

  data.meta["source"] = "synthetic";
  data.meta["seed"] = std::to_string(spec.seed);
  data.meta["producers"] = std::to_string(m);
  data.meta["price_regime"] = spec.prices.kind;
  return data;
}

void validate(const ContextSpec& spec, int lead_time) {
  if (lead_time < 1) throw ConfigError("lead_time must be >= 1");
  for (int lag : spec.generation_lags)
    if (lag < lead_time)
      throw ConfigError("generation lag " + std::to_string(lag) +
                        " would look past the trading time (lead " + std::to_string(lead_time) +
                        ")");
  if (spec.penalty_lag_hours < 0) throw ConfigError("penalty_lag_hours must be >= 0");
}

namespace {

std::size_t first_usable_index(const std::vector<FittedForecaster>& forecasters,
                               const ContextSpec& context, int lead_time) {
  std::size_t first = static_cast<std::size_t>(lead_time);
  for (const auto& f : forecasters) first = std::max(first, f.max_lag());
  for (int lag : context.generation_lags) first = std::max(first, static_cast<std::size_t>(lag));
  if (context.penalty_lag_hours > 0)
    first = std::max(first,
                     static_cast<std::size_t>(lead_time + context.penalty_lag_hours - 1));
  return first;
}

std::size_t split_count(std::size_t usable) {
  if (usable < 10) throw DataError("need at least 10 usable records to split");
  return static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(usable)));
}

}  // namespace

ExperimentDataset build_records(const RawDataset& raw,
                                const std::vector<FittedForecaster>& forecasters,
                                const ContextSpec& context, int lead_time) {
  validate(context, lead_time);
  const int m = raw.producers();
  if (static_cast<int>(forecasters.size()) != m + 1)
    throw ConfigError("need one forecaster per series (aggregate first, then leaves)");

  std::vector<std::vector<double>> series(static_cast<std::size_t>(m) + 1);
  series[0].assign(raw.aggregate.data(), raw.aggregate.data() + raw.rows());
  for (int i = 0; i < m; ++i) {
    series[static_cast<std::size_t>(i) + 1].resize(raw.rows());
    for (std::size_t r = 0; r < raw.rows(); ++r)
      series[static_cast<std::size_t>(i) + 1][r] = raw.leaves(static_cast<Eigen::Index>(r), i);
  }

  const std::size_t first = first_usable_index(forecasters, context, lead_time);
  if (raw.rows() <= first) throw DataError("dataset too short for the requested lags");

  ExperimentDataset ds;
  ds.hier = Hierarchy::total_of(m);
  ds.capacities = raw.capacities;
  ds.aggregate_capacity = raw.capacities.sum();
  ds.lead_time = lead_time;

  const int ctx_dim = static_cast<int>(context.generation_lags.size()) * (m + 1) +
                      2 * context.penalty_lag_hours;
  ds.records.reserve(raw.rows() - first);

  for (std::size_t t = first; t < raw.rows(); ++t) {
    ForecastRecord rec;
    rec.time = raw.times[t];
    rec.base.resize(m + 1);
    for (int s = 0; s <= m; ++s)
      rec.base(s) = forecasters[static_cast<std::size_t>(s)].predict_at(
          series[static_cast<std::size_t>(s)], t);

    rec.actual.resize(m + 1);
    double sum = 0.0;
    for (int i = 0; i < m; ++i) {
      double v = raw.leaves(static_cast<Eigen::Index>(t), i);
      rec.actual(1 + i) = v;
      sum += v;
    }
    rec.actual(0) = sum;

    rec.context.resize(ctx_dim);
    int c = 0;
    for (int s = 0; s <= m; ++s)
      for (int lag : context.generation_lags)
        rec.context(c++) = series[static_cast<std::size_t>(s)][t - static_cast<std::size_t>(lag)];
    for (int j = 0; j < context.penalty_lag_hours; ++j) {
      std::size_t back = static_cast<std::size_t>(lead_time + j);
      Penalties p = penalties_from(raw.hours[t - back]);
      rec.context(c++) = p.surplus;
      rec.context(c++) = p.shortfall;
    }

    rec.hour = raw.hours[t];
    rec.penalties = penalties_from(rec.hour);
    rec.degenerate_hour = degenerate(rec.penalties);
    ds.records.push_back(std::move(rec));
  }

  ds.train_count = split_count(ds.records.size());
  return ds;
}

std::span<const ForecastRecord> train_records(const ExperimentDataset& ds) {
  return {ds.records.data(), ds.train_count};
}

std::span<const ForecastRecord> test_records(const ExperimentDataset& ds) {
  return {ds.records.data() + ds.train_count, ds.records.size() - ds.train_count};
}

std::size_t train_boundary_index(const RawDataset& raw, const std::vector<int>& forecast_lags,
                                 const ContextSpec& context, int lead_time) {
  validate(context, lead_time);
  if (forecast_lags.empty()) throw ConfigError("forecast lags must be non-empty");
  std::size_t first = static_cast<std::size_t>(lead_time);
  for (int lag : forecast_lags) {
    if (lag < 1) throw ConfigError("lags must be >= 1");
    first = std::max(first, static_cast<std::size_t>(lag));
  }
  for (int lag : context.generation_lags) first = std::max(first, static_cast<std::size_t>(lag));
  if (context.penalty_lag_hours > 0)
    first = std::max(first,
                     static_cast<std::size_t>(lead_time + context.penalty_lag_hours - 1));
  if (raw.rows() <= first) throw DataError("dataset too short for the requested lags");
  return first + split_count(raw.rows() - first);
}

std::string dataset_summary(const RawDataset& data) {
  std::ostringstream os;
  os << "rows: " << data.rows() << '\n';
  os << "producers: " << data.producers() << '\n';
  os << "range: " << format_iso8601_utc(data.times.front()) << " .. "
     << format_iso8601_utc(data.times.back()) << '\n';
  os << "capacities:";
  for (Eigen::Index i = 0; i < data.capacities.size(); ++i)
    os << ' ' << fmt_double(data.capacities(i));
  os << '\n';
  std::size_t interpolated = 0, degenerate_hours = 0;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    if (data.interpolated[r]) ++interpolated;
    if (degenerate(penalties_from(data.hours[r]))) ++degenerate_hours;
  }
  os << "interpolated_rows: " << interpolated << '\n';
  os << "degenerate_hours: " << degenerate_hours << '\n';
  os << "mean_generation:";
  for (int i = 0; i < data.producers(); ++i) os << ' ' << fmt_double(data.leaves.col(i).mean());
  os << '\n';
  return os.str();
}

}  // namespace hiertrade
