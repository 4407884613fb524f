#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hiertrade/allocation.hpp"
#include "hiertrade/dataio.hpp"
#include "hiertrade/reconcile.hpp"

namespace hiertrade {

// Per-producer average hourly profit of trading the base leaf forecasts
// independently: spot revenue on realized generation minus each producer's
// own imbalance cost.
Eigen::VectorXd average_profit_independent(std::span<const ForecastRecord> records);

// Per-producer average hourly profit when the portfolio trades the
// reconciled aggregate offer and charges everyone through the allocation
// policy: spot revenue minus the allocated cost share.
Eigen::VectorXd average_profit_aggregated(const ReconModel& model, const Hierarchy& hier,
                                          std::span<const ForecastRecord> records,
                                          const AllocationPolicy& policy);

// Root mean squared forecast error pooled over all records and all series,
// aggregate included.  The independent strategy scores its base vector;
// every other strategy scores the reconciled vector.
double hierarchical_rmse(const ReconModel& model, const Hierarchy& hier,
                         std::span<const ForecastRecord> records);

// Fraction of decidable records (positive total realized generation) where
// the per-unit-cost ordering holds for every producer.  NaN when no record
// is decidable or the strategy has no reconciled offers.
double condition_rate(const ReconModel& model, const Hierarchy& hier,
                      std::span<const ForecastRecord> records);

struct StrategyResult {
  std::string strategy;
  double w = 0.0;
  Eigen::VectorXd ap;             // currency per hour, one entry per producer
  Eigen::VectorXd ap_change;      // versus independent trading; identically 0 for it
  Eigen::VectorXd ap_change_pct;  // 100 * change / |independent|; NaN when near zero
  double rmse = 0.0;
  double condition_frac = 0.0;
  std::string status = "ok";
};

// Test-window metrics for one strategy at one allocation weight.  `model` is
// null for the independent strategy.  The caller supplies the independent
// baseline so the change columns are consistent across a whole sweep.
StrategyResult evaluate_strategy(const ExperimentDataset& ds, const ReconModel* model,
                                 Strategy kind, double w, ShareRule rule,
                                 const Eigen::VectorXd& independent_ap);

struct SweepSpec {
  std::vector<Strategy> strategies;
  std::vector<double> weights;
  TrainConfig train;  // the weight field is overridden per cell for value strategies
  ShareRule rule = ShareRule::generation_share;
  int jobs = 1;
};

struct SweepReport {
  std::vector<StrategyResult> cells;  // strategy-major, weights ascending within
  int producers = 0;
  std::uint64_t seed = 0;
  std::string fingerprint;  // "config_hash=<hex> seed=<n>", embedded in every file
};

// Evaluates every strategy at every weight.  Quality strategies train once
// (their loss never sees the allocation weight); value strategies retrain
// per weight since the allocation enters their objective.  A failed cell
// keeps its slot with NaN metrics and an explanatory status.  Value cells
// may train on up to `jobs` threads; results do not depend on the schedule.
SweepReport run_sweep(const ExperimentDataset& ds, const SweepSpec& spec,
                      const std::string& fingerprint);

// strategy,w,producer,ap,ap_change,ap_change_pct,rmse,condition_rate,status
// with one row per producer; the pct field is empty where the independent
// baseline is too close to zero for a meaningful ratio.
void write_sweep_csv(const SweepReport& report, const std::string& path);

// strategy,w,rmse,status
void write_rmse_csv(const SweepReport& report, const std::string& path);

// One whitespace table per strategy (x = weight, one AP-change column per
// producer) plus a gnuplot script rendering each to a PNG.
void write_plot_files(const SweepReport& report, const std::string& dir);

}  // namespace hiertrade
