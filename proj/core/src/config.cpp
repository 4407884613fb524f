#include "hiertrade/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hiertrade/errors.hpp"
#include "hiertrade/mlp.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

namespace {

using nlohmann::json;

json default_document() {
  RunConfig d;
  json doc;
  doc["data"] = {{"source", d.source},
                 {"generation_csv", d.generation_csv},
                 {"price_csv", d.price_csv}};
  doc["synthetic"] = {{"producers", d.synthetic.producers},
                      {"capacities", std::vector<double>{1.7496, 2.9646, 3.3777, 2.5272}},
                      {"latent_ar", d.synthetic.latent_ar},
                      {"latent_sd", d.synthetic.latent_sd},
                      {"cross_correlation", d.synthetic.cross_correlation},
                      {"mean_fraction", d.synthetic.mean_fraction},
                      {"logistic_slope", d.synthetic.logistic_slope},
                      {"hours", d.synthetic.hours},
                      {"start_time", format_iso8601_utc(d.synthetic.start_time)},
                      {"price_regime", d.synthetic.prices.kind},
                      {"spot", d.synthetic.prices.spot},
                      {"up_reg", d.synthetic.prices.up_reg},
                      {"down_reg", d.synthetic.prices.down_reg},
                      {"spot_mean", d.synthetic.prices.spot_mean},
                      {"spot_ar", d.synthetic.prices.spot_ar},
                      {"spot_sd", d.synthetic.prices.spot_sd},
                      {"p_up", d.synthetic.prices.p_up},
                      {"p_down", d.synthetic.prices.p_down},
                      {"p_both", d.synthetic.prices.p_both},
                      {"penalty_mean_up", d.synthetic.prices.penalty_mean_up},
                      {"penalty_mean_down", d.synthetic.prices.penalty_mean_down}};
  doc["base"] = {{"kind", d.base_kind},
                 {"lags", d.base_lags},
                 {"step", d.base_learning.step},
                 {"epochs", d.base_learning.epochs}};
  doc["context"] = {{"generation_lags", d.context.generation_lags},
                    {"penalty_lag_hours", d.context.penalty_lag_hours}};
  std::vector<std::string> strategy_tags;
  for (Strategy s : d.strategies) strategy_tags.emplace_back(strategy_tag(s));
  doc["run"] = {{"lead_time", d.lead_time}, {"seed", d.seed},
                {"jobs", d.jobs},           {"out", d.out_dir},
                {"strategies", strategy_tags}, {"weights", d.weights}};
  doc["train"] = {{"hidden_width", d.train.hidden_width},
                  {"hidden_layers", d.train.hidden_layers},
                  {"step", d.train.step},
                  {"dual_step", d.train.dual_step},
                  {"epochs", d.train.epochs},
                  {"batch", d.train.batch},
                  {"epsilon_log", d.train.epsilon_log},
                  {"epsilon_log_scale", d.train.epsilon_log_scale},
                  {"constraint_tol_scale", d.train.constraint_tol_scale},
                  {"allow_dual_decrease", d.train.allow_dual_decrease},
                  {"transform", transform_tag(d.train.transform)},
                  {"eval_every", d.train.eval_every}};
  doc["allocation"] = {{"weight", d.allocation.weight},
                       {"rule", share_rule_tag(d.allocation.rule)}};
  return doc;
}

void merge_document(json& base, const json& overlay) {
  if (!overlay.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& [section, content] : overlay.items()) {
    if (!base.contains(section)) throw ConfigError("unknown config section '" + section + "'");
    if (!content.is_object())
      throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : content.items()) {
      if (!base[section].contains(key))
        throw ConfigError("unknown config key '" + section + "." + key + "'");
      base[section][key] = value;
    }
  }
}

template <typename T>
T pull(const json& doc, const char* section, const char* key) {
  try {
    return doc.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + section + "." + key +
                      "' has the wrong type: " + e.what());
  }
}

std::string key_path(const char* section, const char* key) {
  return std::string("'") + section + "." + key + "'";
}

RunConfig from_document(const json& doc) {
  RunConfig cfg;
  cfg.source = pull<std::string>(doc, "data", "source");
  if (cfg.source != "synthetic" && cfg.source != "csv")
    throw ConfigError("config key " + key_path("data", "source") +
                      " must be \"synthetic\" or \"csv\"");
  cfg.generation_csv = pull<std::string>(doc, "data", "generation_csv");
  cfg.price_csv = pull<std::string>(doc, "data", "price_csv");
  if (cfg.source == "csv" && (cfg.generation_csv.empty() || cfg.price_csv.empty()))
    throw ConfigError("csv data source needs both data.generation_csv and data.price_csv");

  cfg.synthetic.producers = pull<int>(doc, "synthetic", "producers");
  std::vector<double> caps = pull<std::vector<double>>(doc, "synthetic", "capacities");
  cfg.synthetic.capacities =
      Eigen::Map<const Eigen::VectorXd>(caps.data(), static_cast<Eigen::Index>(caps.size()));
  cfg.synthetic.latent_ar = pull<double>(doc, "synthetic", "latent_ar");
  cfg.synthetic.latent_sd = pull<double>(doc, "synthetic", "latent_sd");
  cfg.synthetic.cross_correlation = pull<double>(doc, "synthetic", "cross_correlation");
  cfg.synthetic.mean_fraction = pull<double>(doc, "synthetic", "mean_fraction");
  cfg.synthetic.logistic_slope = pull<double>(doc, "synthetic", "logistic_slope");
  cfg.synthetic.hours = pull<int>(doc, "synthetic", "hours");
  std::string start = pull<std::string>(doc, "synthetic", "start_time");
  try {
    cfg.synthetic.start_time = parse_iso8601_utc(start);
  } catch (const Error& e) {
    throw ConfigError("config key " + key_path("synthetic", "start_time") + ": " + e.what());
  }
  cfg.synthetic.prices.kind = pull<std::string>(doc, "synthetic", "price_regime");
  cfg.synthetic.prices.spot = pull<double>(doc, "synthetic", "spot");
  cfg.synthetic.prices.up_reg = pull<double>(doc, "synthetic", "up_reg");
  cfg.synthetic.prices.down_reg = pull<double>(doc, "synthetic", "down_reg");
  cfg.synthetic.prices.spot_mean = pull<double>(doc, "synthetic", "spot_mean");
  cfg.synthetic.prices.spot_ar = pull<double>(doc, "synthetic", "spot_ar");
  cfg.synthetic.prices.spot_sd = pull<double>(doc, "synthetic", "spot_sd");
  cfg.synthetic.prices.p_up = pull<double>(doc, "synthetic", "p_up");
  cfg.synthetic.prices.p_down = pull<double>(doc, "synthetic", "p_down");
  cfg.synthetic.prices.p_both = pull<double>(doc, "synthetic", "p_both");
  cfg.synthetic.prices.penalty_mean_up = pull<double>(doc, "synthetic", "penalty_mean_up");
  cfg.synthetic.prices.penalty_mean_down =
      pull<double>(doc, "synthetic", "penalty_mean_down");

  cfg.base_kind = pull<std::string>(doc, "base", "kind");
  if (cfg.base_kind != "mean" && cfg.base_kind != "quantile")
    throw ConfigError("config key " + key_path("base", "kind") +
                      " must be \"mean\" or \"quantile\"");
  cfg.base_lags = pull<std::vector<int>>(doc, "base", "lags");
  if (cfg.base_lags.empty())
    throw ConfigError("config key " + key_path("base", "lags") + " must be nonempty");
  cfg.base_learning.step = pull<double>(doc, "base", "step");
  cfg.base_learning.epochs = pull<int>(doc, "base", "epochs");

  cfg.context.generation_lags = pull<std::vector<int>>(doc, "context", "generation_lags");
  cfg.context.penalty_lag_hours = pull<int>(doc, "context", "penalty_lag_hours");

  cfg.lead_time = pull<int>(doc, "run", "lead_time");
  if (cfg.lead_time < 1)
    throw ConfigError("config key " + key_path("run", "lead_time") + " must be >= 1");
  cfg.seed = pull<std::uint64_t>(doc, "run", "seed");
  cfg.jobs = pull<int>(doc, "run", "jobs");
  if (cfg.jobs < 1)
    throw ConfigError("config key " + key_path("run", "jobs") + " must be >= 1");
  cfg.out_dir = pull<std::string>(doc, "run", "out");
  if (cfg.out_dir.empty())
    throw ConfigError("config key " + key_path("run", "out") + " must be nonempty");
  cfg.strategies.clear();
  for (const std::string& tag : pull<std::vector<std::string>>(doc, "run", "strategies"))
    cfg.strategies.push_back(parse_strategy(tag));
  if (cfg.strategies.empty())
    throw ConfigError("config key " + key_path("run", "strategies") + " must be nonempty");
  cfg.weights = pull<std::vector<double>>(doc, "run", "weights");
  if (cfg.weights.empty())
    throw ConfigError("config key " + key_path("run", "weights") + " must be nonempty");
  for (double w : cfg.weights)
    if (!(w >= 0.0 && w <= 1.0))
      throw ConfigError("config key " + key_path("run", "weights") +
                        " entries must lie in [0, 1]");

  cfg.train.hidden_width = pull<int>(doc, "train", "hidden_width");
  cfg.train.hidden_layers = pull<int>(doc, "train", "hidden_layers");
  cfg.train.step = pull<double>(doc, "train", "step");
  cfg.train.dual_step = pull<double>(doc, "train", "dual_step");
  cfg.train.epochs = pull<int>(doc, "train", "epochs");
  cfg.train.batch = pull<int>(doc, "train", "batch");
  cfg.train.epsilon_log = pull<double>(doc, "train", "epsilon_log");
  cfg.train.epsilon_log_scale = pull<double>(doc, "train", "epsilon_log_scale");
  cfg.train.constraint_tol_scale = pull<double>(doc, "train", "constraint_tol_scale");
  cfg.train.allow_dual_decrease = pull<bool>(doc, "train", "allow_dual_decrease");
  try {
    cfg.train.transform = parse_transform(pull<std::string>(doc, "train", "transform"));
  } catch (const DataError& e) {
    throw ConfigError("config key " + key_path("train", "transform") + ": " + e.what());
  }
  cfg.train.eval_every = pull<int>(doc, "train", "eval_every");

  cfg.allocation.weight = pull<double>(doc, "allocation", "weight");
  try {
    cfg.allocation.rule = parse_share_rule(pull<std::string>(doc, "allocation", "rule"));
  } catch (const Error& e) {
    throw ConfigError("config key " + key_path("allocation", "rule") + ": " + e.what());
  }
  hiertrade::validate(cfg.allocation);

  // The trainer sees one source of truth for blend, rule, and seed.
  cfg.train.weight = cfg.allocation.weight;
  cfg.train.rule = cfg.allocation.rule;
  cfg.train.seed = cfg.seed;
  hiertrade::validate(cfg.train);

  cfg.synthetic.seed = cfg.seed;
  if (cfg.source == "synthetic") hiertrade::validate(cfg.synthetic);

  return cfg;
}

RunConfig resolve_document(json doc, const CliOverrides& overrides) {
  if (overrides.seed) doc["run"]["seed"] = *overrides.seed;
  if (overrides.jobs) doc["run"]["jobs"] = *overrides.jobs;
  if (overrides.out_dir) doc["run"]["out"] = *overrides.out_dir;
  RunConfig cfg = from_document(doc);
  // The canonical form identifies the experiment, so delivery details
  // (where files land, how many threads ran) are excluded: results are
  // schedule-independent and path-independent by construction.
  doc["run"].erase("out");
  doc["run"].erase("jobs");
  cfg.canonical = doc.dump();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.canonical)));
  cfg.hash_hex = hex;
  return cfg;
}

}  // namespace

std::string RunConfig::fingerprint() const {
  return "config_hash=" + hash_hex + " seed=" + std::to_string(seed);
}

RunConfig default_config() { return resolve_document(default_document(), {}); }

RunConfig resolve_config(const std::string& json_text, const CliOverrides& overrides) {
  json overlay;
  try {
    overlay = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  // Emitted resolved configs carry their own hash; accept them back as-is.
  if (overlay.is_object()) overlay.erase("config_hash");
  json doc = default_document();
  merge_document(doc, overlay);
  return resolve_document(std::move(doc), overrides);
}

RunConfig load_config(const std::string& path, const CliOverrides& overrides) {
  if (path.empty()) return resolve_document(default_document(), overrides);
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << is.rdbuf();
  try {
    return resolve_config(buffer.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_resolved_config(const RunConfig& cfg, const std::string& path) {
  json doc = json::parse(cfg.canonical);
  doc["config_hash"] = cfg.hash_hex;
  std::ofstream os(path);
  if (!os) throw DataError("cannot open resolved config for writing: " + path);
  os << doc.dump(2) << '\n';
  if (!os) throw DataError("failed writing resolved config: " + path);
}

}  // namespace hiertrade
