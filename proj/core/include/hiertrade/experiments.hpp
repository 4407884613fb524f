#pragma once

#include <string>
#include <vector>

#include "hiertrade/base_forecast.hpp"
#include "hiertrade/config.hpp"
#include "hiertrade/dataio.hpp"

namespace hiertrade {

struct PreparedExperiment {
  RawDataset raw;
  std::vector<FittedForecaster> forecasters;  // aggregate first, then leaves
  ExperimentDataset dataset;
  double quantile_level = 0.0;  // nonzero only when base forecasts are quantiles
};

// Full data pipeline: synthesize or ingest the raw series, locate the
// chronological train boundary, fit one base forecaster per series strictly
// on pre-boundary data (quantile forecasters use the nominal level implied
// by the training window's mean penalties), then assemble per-hour records.
PreparedExperiment prepare_experiment(const RunConfig& cfg);

// Command bodies behind the CLI.  Each writes its outputs under cfg.out_dir
// and returns a process exit code: 0 on success, 3 when nothing completed.
int cmd_synth(const RunConfig& cfg);
int cmd_fit(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);
int cmd_case(const RunConfig& cfg, const std::string& which);  // case1 | case2 | casestudy
int cmd_verify(const RunConfig& cfg);

}  // namespace hiertrade
