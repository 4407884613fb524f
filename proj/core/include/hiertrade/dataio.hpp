#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hiertrade/base_forecast.hpp"
#include "hiertrade/hierarchy.hpp"
#include "hiertrade/market.hpp"

namespace hiertrade {

// An aligned hourly panel of generation and prices, either ingested from CSV
// or synthesized.  `aggregate` keeps the source aggregate column when one
// was supplied (within coherence tolerance of the leaf sum); otherwise it is
// the computed sum.
struct RawDataset {
  std::vector<std::int64_t> times;  // strictly increasing, hourly
  Eigen::MatrixXd leaves;           // rows x producers, MW
  Eigen::VectorXd aggregate;        // rows
  std::vector<MarketHour> hours;    // rows
  std::vector<bool> interpolated;   // rows; true for gap-filled entries
  Eigen::VectorXd capacities;       // per producer
  std::map<std::string, std::string> meta;

  std::size_t rows() const { return times.size(); }
  int producers() const { return static_cast<int>(leaves.cols()); }
};

struct IngestOptions {
  // When set, generation is validated against these instead of inferring
  // capacities from the observed per-producer maxima.
  Eigen::VectorXd capacities;
  double coherence_tol = 1e-6;
  // Gaps of up to this many missing hours are filled by linear interpolation
  // and flagged; anything longer aborts the ingestion.
  int max_gap_fill = 3;
};

// Reads the generation file (timestamp,leaf_1..leaf_m[,aggregate]) and the
// price file (timestamp,spot,up_reg,down_reg), fills short gaps, and checks
// coherence, price ordering, and grid alignment.  Leading '#' comment lines
// of the form "# key=value" land in meta.  Errors carry file and line.
RawDataset ingest_csv(const std::string& generation_path, const std::string& price_path,
                      const IngestOptions& options = {});

void write_generation_csv(const RawDataset& data, const std::string& path,
                          bool include_aggregate = true);
void write_price_csv(const RawDataset& data, const std::string& path);

struct PriceRegimeSpec {
  std::string kind = "fixed";  // fixed | regime_switching

  // fixed
  double spot = 25.0;
  double up_reg = 29.0;
  double down_reg = 13.0;

  // regime_switching: AR(1) spot around a mean, and per-hour regulation
  // states (up, down, both, or balanced) with exponential penalty sizes.
  double spot_mean = 25.0;
  double spot_ar = 0.95;
  double spot_sd = 1.5;
  double p_up = 0.25;
  double p_down = 0.25;
  double p_both = 0.05;
  double penalty_mean_up = 6.0;
  double penalty_mean_down = 8.0;
};

void validate(const PriceRegimeSpec& spec);

// Generation: per-producer latent AR(1) processes with cross-correlated
// Gaussian innovations, squashed through a logistic and scaled by capacity,
// so output lives in (0, capacity) with wind-like persistence.
struct SyntheticSpec {
  int producers = 4;
  Eigen::VectorXd capacities;  // required, length == producers
  double latent_ar = 0.97;
  double latent_sd = 1.0;          // stationary sd of the latent process
  double cross_correlation = 0.5;  // innovation correlation between producers
  double mean_fraction = 0.35;     // long-run mean as a fraction of capacity
  double logistic_slope = 1.0;     // latent units per logistic unit
  int hours = 17000;
  std::int64_t start_time = 1546300800;  // 2019-01-01T00:00:00Z
  PriceRegimeSpec prices;
  std::uint64_t seed = 42;
};

void validate(const SyntheticSpec& spec);

RawDataset synthesize(const SyntheticSpec& spec);

// Contextual features attached to each record, all measured at or before the
// trading time (delivery minus lead_time).
struct ContextSpec {
  std::vector<int> generation_lags{1, 2, 3};  // per series, offsets from delivery
  int penalty_lag_hours = 0;                  // pairs (surplus, shortfall) at lags 1..h
};

void validate(const ContextSpec& spec, int lead_time);

struct ExperimentDataset {
  Hierarchy hier = Hierarchy::total_of(1);
  Eigen::VectorXd capacities;        // leaves
  double aggregate_capacity = 0.0;
  int lead_time = 1;
  std::vector<ForecastRecord> records;
  std::size_t train_count = 0;       // chronological 80/20 split point
};

// Builds one record per usable delivery hour: base forecasts from the fitted
// per-series forecasters (aggregate first, then leaves), contextual features
// per ContextSpec, exact-coherent actuals, and the hour's market outcome.
ExperimentDataset build_records(const RawDataset& raw,
                                const std::vector<FittedForecaster>& forecasters,
                                const ContextSpec& context, int lead_time);

std::span<const ForecastRecord> train_records(const ExperimentDataset& ds);
std::span<const ForecastRecord> test_records(const ExperimentDataset& ds);

// The raw-series index of the first test delivery, for fitting base
// forecasters strictly on pre-test data.  Matches the record split.
std::size_t train_boundary_index(const RawDataset& raw,
                                 const std::vector<int>& forecast_lags,
                                 const ContextSpec& context, int lead_time);

std::string dataset_summary(const RawDataset& data);

}  // namespace hiertrade
