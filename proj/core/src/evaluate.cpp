#include "hiertrade/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include "hiertrade/errors.hpp"
#include "hiertrade/market.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

Eigen::VectorXd average_profit_independent(std::span<const ForecastRecord> records) {
  if (records.empty()) throw DataError("no records to evaluate");
  const Eigen::Index m = records.front().base.size() - 1;
  Eigen::VectorXd ap = Eigen::VectorXd::Zero(m);
  for (const ForecastRecord& rec : records)
    for (Eigen::Index i = 0; i < m; ++i)
      ap(i) += trade_profit_split(rec.base(1 + i), rec.actual(1 + i), rec.hour);
  return ap / static_cast<double>(records.size());
}

Eigen::VectorXd average_profit_aggregated(const ReconModel& model, const Hierarchy& hier,
                                          std::span<const ForecastRecord> records,
                                          const AllocationPolicy& policy) {
  if (records.empty()) throw DataError("no records to evaluate");
  const int m = model.leaves;
  Eigen::VectorXd ap = Eigen::VectorXd::Zero(m);
  for (const ForecastRecord& rec : records) {
    Eigen::VectorXd full = reconcile(model, hier, rec);
    SettlementBreakdown s = allocate(policy, hier, full, rec.actual, rec.penalties);
    for (int i = 0; i < m; ++i)
      ap(i) += rec.hour.spot * rec.actual(1 + i) - s.allocated(i);
  }
  return ap / static_cast<double>(records.size());
}

double hierarchical_rmse(const ReconModel& model, const Hierarchy& hier,
                         std::span<const ForecastRecord> records) {
  if (records.empty()) throw DataError("no records to evaluate");
  double total = 0.0;
  Eigen::Index n = 0;
  for (const ForecastRecord& rec : records) {
    Eigen::VectorXd v =
        model.kind == Strategy::independent ? rec.base : reconcile(model, hier, rec);
    n = v.size();
    total += (v - rec.actual).squaredNorm();
  }
  return std::sqrt(total / (static_cast<double>(records.size()) * static_cast<double>(n)));
}

double condition_rate(const ReconModel& model, const Hierarchy& hier,
                      std::span<const ForecastRecord> records) {
  if (model.kind == Strategy::independent)
    return std::numeric_limits<double>::quiet_NaN();
  std::size_t holds = 0, decidable = 0;
  for (const ForecastRecord& rec : records) {
    Eigen::VectorXd full = reconcile(model, hier, rec);
    UnitCostCondition c = unit_cost_condition(hier, full, rec.actual, rec.penalties);
    if (c == UnitCostCondition::degenerate) continue;
    ++decidable;
    if (c == UnitCostCondition::holds) ++holds;
  }
  if (decidable == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(holds) / static_cast<double>(decidable);
}

StrategyResult evaluate_strategy(const ExperimentDataset& ds, const ReconModel* model,
                                 Strategy kind, double w, ShareRule rule,
                                 const Eigen::VectorXd& independent_ap) {
  StrategyResult cell;
  cell.strategy = strategy_tag(kind);
  cell.w = w;
  std::span<const ForecastRecord> test = test_records(ds);
  const Eigen::Index m = independent_ap.size();

  if (kind == Strategy::independent) {
    cell.ap = average_profit_independent(test);
    ReconModel raw_base;
    raw_base.kind = Strategy::independent;
    raw_base.leaves = static_cast<int>(m);
    cell.rmse = hierarchical_rmse(raw_base, ds.hier, test);
    cell.condition_frac = std::numeric_limits<double>::quiet_NaN();
  } else {
    if (model == nullptr) throw ConfigError("missing model for strategy evaluation");
    AllocationPolicy policy{w, rule};
    cell.ap = average_profit_aggregated(*model, ds.hier, test, policy);
    cell.rmse = hierarchical_rmse(*model, ds.hier, test);
    cell.condition_frac = condition_rate(*model, ds.hier, test);
  }

  cell.ap_change = cell.ap - independent_ap;
  cell.ap_change_pct.resize(m);
  for (Eigen::Index i = 0; i < m; ++i)
    cell.ap_change_pct(i) = std::abs(independent_ap(i)) < 1e-9
                                ? std::numeric_limits<double>::quiet_NaN()
                                : 100.0 * cell.ap_change(i) / std::abs(independent_ap(i));
  return cell;
}

namespace {

StrategyResult failed_cell(Strategy kind, double w, int m, const std::string& status) {
  StrategyResult cell;
  cell.strategy = strategy_tag(kind);
  cell.w = w;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  cell.ap = Eigen::VectorXd::Constant(m, nan);
  cell.ap_change = cell.ap;
  cell.ap_change_pct = cell.ap;
  cell.rmse = nan;
  cell.condition_frac = nan;
  cell.status = status;
  return cell;
}

}  // namespace

SweepReport run_sweep(const ExperimentDataset& ds, const SweepSpec& spec,
                      const std::string& fingerprint) {
  if (spec.strategies.empty()) throw ConfigError("sweep needs at least one strategy");
  if (spec.weights.empty()) throw ConfigError("sweep needs at least one weight");
  for (double w : spec.weights)
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("sweep weights must lie in [0, 1]");
  validate(spec.train);

  SweepReport report;
  report.producers = ds.hier.leaves();
  report.seed = spec.train.seed;
  report.fingerprint = fingerprint;
  const int m = report.producers;

  Eigen::VectorXd ind_ap = average_profit_independent(test_records(ds));

  // Quality models do not depend on the allocation weight: one fit each.
  ReconModel bu = bottom_up_model(ds);
  std::vector<std::pair<Strategy, ReconModel>> quality;
  std::vector<std::pair<Strategy, std::string>> quality_failures;
  for (Strategy s : spec.strategies) {
    if (!is_quality_strategy(s)) continue;
    try {
      auto [model, train_report] = train_quality(ds, s, spec.train);
      quality.emplace_back(s, std::move(model));
    } catch (const Error& e) {
      quality_failures.emplace_back(s, std::string("error: ") + e.what());
    }
  }

  struct ValueTask {
    Strategy kind;
    double w;
    std::size_t slot;
  };
  std::vector<ValueTask> tasks;
  report.cells.resize(spec.strategies.size() * spec.weights.size());

  std::size_t slot = 0;
  for (Strategy s : spec.strategies) {
    for (double w : spec.weights) {
      if (is_value_strategy(s)) {
        tasks.push_back({s, w, slot});
      } else if (is_quality_strategy(s)) {
        const ReconModel* model = nullptr;
        for (const auto& [kind, trained] : quality)
          if (kind == s) model = &trained;
        if (model != nullptr) {
          report.cells[slot] = evaluate_strategy(ds, model, s, w, spec.rule, ind_ap);
        } else {
          std::string status = "error: training failed";
          for (const auto& [kind, why] : quality_failures)
            if (kind == s) status = why;
          report.cells[slot] = failed_cell(s, w, m, status);
        }
      } else if (s == Strategy::bottom_up) {
        report.cells[slot] = evaluate_strategy(ds, &bu, s, w, spec.rule, ind_ap);
      } else {
        report.cells[slot] = evaluate_strategy(ds, nullptr, s, w, spec.rule, ind_ap);
      }
      ++slot;
    }
  }

  auto run_task = [&](const ValueTask& task) {
    TrainConfig cfg = spec.train;
    cfg.weight = task.w;
    cfg.rule = spec.rule;
    try {
      auto [model, train_report] = train_value(ds, task.kind, cfg);
      StrategyResult cell =
          evaluate_strategy(ds, &model, task.kind, task.w, spec.rule, ind_ap);
      cell.status = train_report.status;
      report.cells[task.slot] = std::move(cell);
    } catch (const Error& e) {
      report.cells[task.slot] =
          failed_cell(task.kind, task.w, m, std::string("error: ") + e.what());
    }
  };

  const int jobs = std::max(1, spec.jobs);
  if (jobs == 1 || tasks.size() <= 1) {
    for (const ValueTask& task : tasks) run_task(task);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        run_task(tasks[i]);
      }
    };
    std::vector<std::thread> pool;
    const std::size_t count = std::min<std::size_t>(jobs, tasks.size());
    pool.reserve(count);
    for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return report;
}

namespace {

std::string csv_field(double v) {
  return std::isnan(v) ? std::string() : fmt_double(v);
}

}  // namespace

void write_sweep_csv(const SweepReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open sweep file for writing: " + path);
  os << "# " << report.fingerprint << '\n';
  os << "strategy,w,producer,ap,ap_change,ap_change_pct,rmse,condition_rate,status\n";
  for (const StrategyResult& cell : report.cells) {
    for (Eigen::Index i = 0; i < cell.ap.size(); ++i) {
      os << cell.strategy << ',' << fmt_double(cell.w) << ',' << (i + 1) << ','
         << csv_field(cell.ap(i)) << ',' << csv_field(cell.ap_change(i)) << ','
         << csv_field(cell.ap_change_pct(i)) << ',' << csv_field(cell.rmse) << ','
         << csv_field(cell.condition_frac) << ',' << cell.status << '\n';
    }
  }
  if (!os) throw DataError("failed writing sweep file: " + path);
}

void write_rmse_csv(const SweepReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open rmse file for writing: " + path);
  os << "# " << report.fingerprint << '\n';
  os << "strategy,w,rmse,status\n";
  for (const StrategyResult& cell : report.cells)
    os << cell.strategy << ',' << fmt_double(cell.w) << ',' << csv_field(cell.rmse) << ','
       << cell.status << '\n';
  if (!os) throw DataError("failed writing rmse file: " + path);
}

void write_plot_files(const SweepReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> strategies;
  for (const StrategyResult& cell : report.cells)
    if (std::find(strategies.begin(), strategies.end(), cell.strategy) == strategies.end())
      strategies.push_back(cell.strategy);

  for (const std::string& strategy : strategies) {
    std::string data_path = dir + "/ap_change_" + strategy + ".dat";
    std::ofstream os(data_path);
    if (!os) throw DataError("cannot open plot data file for writing: " + data_path);
    os << "# " << report.fingerprint << '\n';
    os << "# w";
    for (int i = 1; i <= report.producers; ++i) os << " ap_change_" << i;
    os << '\n';
    for (const StrategyResult& cell : report.cells) {
      if (cell.strategy != strategy) continue;
      os << fmt_double(cell.w);
      for (Eigen::Index i = 0; i < cell.ap_change.size(); ++i)
        os << ' ' << (std::isnan(cell.ap_change(i)) ? "?" : fmt_double(cell.ap_change(i)));
      os << '\n';
    }
    if (!os) throw DataError("failed writing plot data file: " + data_path);
  }

  std::string script_path = dir + "/plots.gp";
  std::ofstream gp(script_path);
  if (!gp) throw DataError("cannot open plot script for writing: " + script_path);
  gp << "# " << report.fingerprint << '\n';
  gp << "set terminal pngcairo size 900,600\n";
  gp << "set datafile missing \"?\"\n";
  gp << "set xlabel \"allocation weight w\"\n";
  gp << "set ylabel \"AP change vs independent (currency/hour)\"\n";
  gp << "set key outside\n";
  gp << "set grid\n";
  for (const std::string& strategy : strategies) {
    gp << "set output \"ap_change_" << strategy << ".png\"\n";
    gp << "set title \"" << strategy << "\"\n";
    gp << "plot";
    for (int i = 1; i <= report.producers; ++i) {
      if (i > 1) gp << ',';
      gp << " \"ap_change_" << strategy << ".dat\" using 1:" << (i + 1)
         << " with linespoints title \"producer " << i << "\"";
    }
    gp << '\n';
  }
  if (!gp) throw DataError("failed writing plot script: " + script_path);
}

}  // namespace hiertrade
