#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hiertrade/allocation.hpp"
#include "hiertrade/base_forecast.hpp"
#include "hiertrade/dataio.hpp"
#include "hiertrade/reconcile.hpp"

namespace hiertrade {

// Fully resolved experiment configuration.  Every field has a default, a
// config file overrides selectively, and command-line flags override the
// file.  The canonical serialized document and its hash ride along so every
// output can be traced to the exact configuration that produced it.
struct RunConfig {
  // data
  std::string source = "synthetic";  // synthetic | csv
  std::string generation_csv;
  std::string price_csv;
  SyntheticSpec synthetic;

  // base forecasts
  std::string base_kind = "mean";  // mean | quantile
  std::vector<int> base_lags{1, 2, 3, 24};
  LearningSpec base_learning;

  // record assembly
  ContextSpec context;
  int lead_time = 1;

  // experiment grid
  std::vector<Strategy> strategies{Strategy::independent,    Strategy::bottom_up,
                                   Strategy::quality_learned, Strategy::quality_linear,
                                   Strategy::value_learned,   Strategy::value_linear};
  std::vector<double> weights{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  TrainConfig train;  // weight/rule/seed mirror the sections below after resolution
  AllocationPolicy allocation{0.9, ShareRule::generation_share};

  std::uint64_t seed = 42;
  int jobs = 1;
  std::string out_dir = "out";

  std::string canonical;  // resolved document, compact, sorted keys
  std::string hash_hex;   // 16 hex digits over `canonical`

  std::string fingerprint() const;  // "config_hash=<hex> seed=<n>"
};

// Flag-level overrides; `out_dir` already reflects --out or the OUTPUT_DIR
// environment fallback when the caller resolved one.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;
};

RunConfig default_config();

// Parses `path` (JSON, one level of sections; empty path = pure defaults),
// overlays it on the defaults, applies the CLI overrides, validates every
// field, and computes the canonical form and hash.  Unknown sections or
// keys, wrong types, and out-of-range values all raise ConfigError naming
// the offending key.
RunConfig load_config(const std::string& path, const CliOverrides& overrides = {});

// Same resolution applied to an in-memory document (used by tests).
RunConfig resolve_config(const std::string& json_text, const CliOverrides& overrides = {});

// Writes the resolved document, including its own hash, as pretty JSON.
void write_resolved_config(const RunConfig& cfg, const std::string& path);

}  // namespace hiertrade
