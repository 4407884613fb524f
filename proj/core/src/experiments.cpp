#include "hiertrade/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>

#include <json.hpp>

#include "hiertrade/errors.hpp"
#include "hiertrade/evaluate.hpp"
#include "hiertrade/properties.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

namespace {

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return cfg.out_dir + "/" + name;
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

void note(const std::string& path) { std::cout << "wrote " << path << '\n'; }

std::ofstream open_report(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open file for writing: " + path);
  return os;
}

// Nominal quantile of the training window: the level that minimizes expected
// imbalance cost under the window's average penalty asymmetry.
double training_window_level(const RawDataset& raw, std::size_t boundary) {
  double surplus = 0.0;
  double shortfall = 0.0;
  for (std::size_t t = 0; t < boundary; ++t) {
    Penalties p = penalties_from(raw.hours[t]);
    surplus += p.surplus;
    shortfall += p.shortfall;
  }
  if (!(surplus + shortfall > 0.0))
    throw DataError("cannot infer a quantile level: training-window penalties are all zero");
  return surplus / (surplus + shortfall);
}

std::span<const double> train_span(const Eigen::VectorXd& series, std::size_t boundary) {
  return {series.data(), boundary};
}

FittedForecaster fit_series(const RunConfig& cfg, std::span<const double> series,
                            double capacity, double level) {
  RegressionSpec spec;
  spec.lags = cfg.base_lags;
  spec.capacity = capacity;
  spec.learning = cfg.base_learning;
  if (cfg.base_kind == "quantile") return fit_quantile(series, spec, level);
  return fit_mean(series, spec);
}

// Patches one level of section keys on the resolved document and reresolves,
// so the derived config hash always matches what actually ran.
RunConfig with_overrides(const RunConfig& cfg, const nlohmann::json& patches,
                         const std::string& sub_dir) {
  nlohmann::json doc = nlohmann::json::parse(cfg.canonical);
  for (const auto& [section, keys] : patches.items())
    for (const auto& [key, value] : keys.items()) doc[section][key] = value;
  CliOverrides overrides;
  overrides.out_dir = cfg.out_dir + "/" + sub_dir;
  overrides.jobs = cfg.jobs;
  return resolve_config(doc.dump(), overrides);
}

std::vector<std::string> tags(std::initializer_list<Strategy> kinds) {
  std::vector<std::string> out;
  for (Strategy s : kinds) out.push_back(strategy_tag(s));
  return out;
}

struct SeedRun {
  bool ok = false;
  Eigen::VectorXd ap;
};

}  // namespace

PreparedExperiment prepare_experiment(const RunConfig& cfg) {
  PreparedExperiment prep;
  if (cfg.source == "synthetic") {
    prep.raw = synthesize(cfg.synthetic);
  } else {
    prep.raw = ingest_csv(cfg.generation_csv, cfg.price_csv);
  }

  std::size_t boundary = train_boundary_index(prep.raw, cfg.base_lags, cfg.context, cfg.lead_time);
  if (cfg.base_kind == "quantile")
    prep.quantile_level = training_window_level(prep.raw, boundary);

  prep.forecasters.push_back(fit_series(cfg, train_span(prep.raw.aggregate, boundary),
                                        prep.raw.capacities.sum(), prep.quantile_level));
  for (int j = 0; j < prep.raw.producers(); ++j) {
    Eigen::VectorXd column = prep.raw.leaves.col(j);
    prep.forecasters.push_back(
        fit_series(cfg, train_span(column, boundary), prep.raw.capacities(j), prep.quantile_level));
  }

  prep.dataset = build_records(prep.raw, prep.forecasters, cfg.context, cfg.lead_time);
  return prep;
}

int cmd_synth(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  RawDataset raw = synthesize(cfg.synthetic);
  raw.meta["config_hash"] = cfg.hash_hex;

  std::string gen_path = out_path(cfg, "generation.csv");
  std::string price_path = out_path(cfg, "prices.csv");
  write_generation_csv(raw, gen_path);
  write_price_csv(raw, price_path);
  write_resolved_config(cfg, out_path(cfg, "resolved_config.json"));
  std::cout << dataset_summary(raw);
  note(gen_path);
  note(price_path);
  return 0;
}

int cmd_fit(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  PreparedExperiment prep = prepare_experiment(cfg);
  std::size_t boundary =
      train_boundary_index(prep.raw, cfg.base_lags, cfg.context, cfg.lead_time);

  std::string path = out_path(cfg, "base_fit.csv");
  std::ofstream os = open_report(path);
  os << "# " << cfg.fingerprint() << '\n';
  os << "series,kind,capacity,level,intercept";
  for (int lag : cfg.base_lags) os << ",w_lag_" << lag;
  os << ",train_rmse\n";

  for (std::size_t i = 0; i < prep.forecasters.size(); ++i) {
    const FittedForecaster& f = prep.forecasters[i];
    Eigen::VectorXd column =
        i == 0 ? prep.raw.aggregate : Eigen::VectorXd(prep.raw.leaves.col(i - 1));
    double rmse = std::sqrt(
        forecaster_mse(f, train_span(column, boundary), f.max_lag(), boundary));
    os << (i == 0 ? std::string("aggregate") : "producer_" + std::to_string(i)) << ','
       << cfg.base_kind << ',' << fmt_double(f.capacity) << ','
       << fmt_double(prep.quantile_level) << ',' << fmt_double(f.intercept);
    for (Eigen::Index k = 0; k < f.weights.size(); ++k) os << ',' << fmt_double(f.weights(k));
    os << ',' << fmt_double(rmse) << '\n';
  }
  if (!os) throw DataError("failed writing file: " + path);
  os.close();

  write_resolved_config(cfg, out_path(cfg, "resolved_config.json"));
  note(path);
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  PreparedExperiment prep = prepare_experiment(cfg);

  int attempted = 0;
  int failed = 0;
  for (Strategy kind : cfg.strategies) {
    if (!is_quality_strategy(kind) && !is_value_strategy(kind)) continue;
    ++attempted;
    std::string tag = strategy_tag(kind);
    try {
      auto [model, report] = is_quality_strategy(kind)
                                 ? train_quality(prep.dataset, kind, cfg.train)
                                 : train_value(prep.dataset, kind, cfg.train);
      std::string model_path = out_path(cfg, tag + ".model");
      save_model(model, model_path);
      write_train_report_csv(report, out_path(cfg, tag + "_train.csv"), cfg.fingerprint());
      std::cout << tag << ": " << report.status << " (objective "
                << fmt_double(report.final_objective) << ")\n";
      note(model_path);
    } catch (const Error& e) {
      ++failed;
      std::cerr << tag << ": training failed: " << e.what() << '\n';
    }
  }

  write_resolved_config(cfg, out_path(cfg, "resolved_config.json"));
  if (attempted == 0) {
    std::cout << "no trainable strategies configured\n";
    return 0;
  }
  return failed == attempted ? 3 : 0;
}

int cmd_sweep(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  PreparedExperiment prep = prepare_experiment(cfg);

  SweepSpec spec;
  spec.strategies = cfg.strategies;
  spec.weights = cfg.weights;
  spec.train = cfg.train;
  spec.rule = cfg.allocation.rule;
  spec.jobs = cfg.jobs;
  SweepReport report = run_sweep(prep.dataset, spec, cfg.fingerprint());

  std::string sweep_path = out_path(cfg, "sweep.csv");
  write_sweep_csv(report, sweep_path);
  write_rmse_csv(report, out_path(cfg, "rmse.csv"));
  write_plot_files(report, cfg.out_dir);
  write_resolved_config(cfg, out_path(cfg, "resolved_config.json"));

  int errored = 0;
  for (const StrategyResult& cell : report.cells)
    if (cell.status.rfind("error:", 0) == 0) ++errored;
  std::cout << report.cells.size() << " cells (" << errored << " failed), "
            << report.producers << " producers\n";
  note(sweep_path);
  return errored == static_cast<int>(report.cells.size()) && !report.cells.empty() ? 3 : 0;
}

namespace {

int run_case_study(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  PreparedExperiment prep = prepare_experiment(cfg);
  const ExperimentDataset& ds = prep.dataset;
  const int m = ds.hier.leaves();
  const int runs = 10;

  Eigen::VectorXd independent_ap = average_profit_independent(test_records(ds));
  std::vector<Strategy> kinds = cfg.strategies;

  std::string path = out_path(cfg, "casestudy.csv");
  std::ofstream os = open_report(path);
  os << "# " << cfg.fingerprint() << '\n';
  os << "strategy,producer,ap_mean,ap_std,ok_runs\n";

  int written = 0;
  for (Strategy kind : kinds) {
    std::vector<SeedRun> per_seed;
    bool trains = is_quality_strategy(kind) || is_value_strategy(kind);
    int seeds = trains ? runs : 1;
    for (int i = 0; i < seeds; ++i) {
      SeedRun run;
      try {
        StrategyResult cell;
        if (trains) {
          TrainConfig tc = cfg.train;
          tc.seed = cfg.seed + static_cast<std::uint64_t>(i);
          auto [model, report] = is_quality_strategy(kind)
                                     ? train_quality(ds, kind, tc)
                                     : train_value(ds, kind, tc);
          (void)report;
          cell = evaluate_strategy(ds, &model, kind, cfg.allocation.weight,
                                   cfg.allocation.rule, independent_ap);
        } else {
          ReconModel bu = bottom_up_model(ds);
          cell = evaluate_strategy(ds, kind == Strategy::independent ? nullptr : &bu, kind,
                                   cfg.allocation.weight, cfg.allocation.rule, independent_ap);
        }
        run.ok = true;
        run.ap = cell.ap;
      } catch (const Error& e) {
        std::cerr << strategy_tag(kind) << " seed " << cfg.seed + i
                  << ": " << e.what() << '\n';
      }
      per_seed.push_back(std::move(run));
    }

    int ok_runs = 0;
    for (const SeedRun& r : per_seed)
      if (r.ok) ++ok_runs;
    for (int j = 0; j < m; ++j) {
      os << strategy_tag(kind) << ',' << (j + 1) << ',';
      if (ok_runs > 0) {
        double mean = 0.0;
        for (const SeedRun& r : per_seed)
          if (r.ok) mean += r.ap(j);
        mean /= ok_runs;
        double var = 0.0;
        for (const SeedRun& r : per_seed)
          if (r.ok) var += (r.ap(j) - mean) * (r.ap(j) - mean);
        double sd = ok_runs > 1 ? std::sqrt(var / (ok_runs - 1)) : 0.0;
        os << fmt_double(mean) << ',' << fmt_double(sd);
        ++written;
      } else {
        os << ',';
      }
      os << ',' << ok_runs << '\n';
    }
  }
  if (!os) throw DataError("failed writing file: " + path);
  os.close();

  write_resolved_config(cfg, out_path(cfg, "resolved_config.json"));
  note(path);
  return written == 0 ? 3 : 0;
}

}  // namespace

int cmd_case(const RunConfig& cfg, const std::string& which) {
  nlohmann::json patches;
  if (which == "case1") {
    patches["base"]["kind"] = "mean";
    patches["run"]["strategies"] =
        tags({Strategy::independent, Strategy::bottom_up, Strategy::quality_learned,
              Strategy::quality_linear, Strategy::value_learned, Strategy::value_linear});
    patches["run"]["weights"] = std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5,
                                                    0.6, 0.7, 0.8, 0.9, 1.0};
    return cmd_sweep(with_overrides(cfg, patches, which));
  }
  if (which == "case2") {
    patches["base"]["kind"] = "quantile";
    patches["run"]["strategies"] = tags({Strategy::independent, Strategy::bottom_up,
                                         Strategy::quality_learned, Strategy::value_learned});
    patches["run"]["weights"] = std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5,
                                                    0.6, 0.7, 0.8, 0.9, 1.0};
    return cmd_sweep(with_overrides(cfg, patches, which));
  }
  if (which == "casestudy") {
    patches["base"]["kind"] = "mean";
    patches["context"]["penalty_lag_hours"] = 24;
    patches["run"]["strategies"] = tags({Strategy::independent, Strategy::bottom_up,
                                         Strategy::quality_learned, Strategy::value_learned});
    patches["run"]["weights"] = std::vector<double>{0.9};
    return run_case_study(with_overrides(cfg, patches, which));
  }
  throw ConfigError("unknown case '" + which + "' (expected case1, case2, or casestudy)");
}

int cmd_verify(const RunConfig& cfg) {
  std::vector<PropertyResult> results = run_property_suites(cfg.seed);
  bool all_passed = true;
  for (const PropertyResult& r : results) {
    std::cout << format_property_result(r) << '\n';
    if (!r.passed) all_passed = false;
  }
  return all_passed ? 0 : 1;
}

}  // namespace hiertrade
