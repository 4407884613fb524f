#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <hiertrade/errors.hpp>
#include <hiertrade/evaluate.hpp>
#include <hiertrade/market.hpp>
#include <hiertrade/util.hpp>

using namespace hiertrade;

namespace {

ForecastRecord make_rec(int t_idx, const Eigen::VectorXd& base_leaves,
                        const Eigen::VectorXd& actual_leaves, double spot, double up,
                        double down) {
  ForecastRecord rec;
  rec.time = 1546300800 + static_cast<std::int64_t>(t_idx) * 3600;
  const Eigen::Index m = base_leaves.size();
  rec.base.resize(m + 1);
  rec.base(0) = base_leaves.sum();
  rec.base.tail(m) = base_leaves;
  rec.actual.resize(m + 1);
  rec.actual(0) = actual_leaves.sum();
  rec.actual.tail(m) = actual_leaves;
  rec.hour = MarketHour{rec.time, spot, up, down};
  rec.penalties = penalties_from(rec.hour);
  rec.degenerate_hour = degenerate(rec.penalties);
  return rec;
}

ExperimentDataset noisy_dataset(int hours, std::uint64_t seed) {
  ExperimentDataset ds;
  ds.hier = Hierarchy::total_of(3);
  ds.capacities = Eigen::Vector3d(2.0, 3.0, 2.5);
  ds.aggregate_capacity = 7.5;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.4);
  for (int t = 0; t < hours; ++t) {
    double phase = 2.0 * M_PI * t / 24.0;
    Eigen::Vector3d y(1.0 + 0.5 * std::sin(phase), 1.6 - 0.6 * std::sin(phase),
                      1.2 + 0.4 * std::cos(phase));
    Eigen::Vector3d base;
    for (int i = 0; i < 3; ++i)
      base(i) = std::clamp(y(i) + noise(rng), 0.05, ds.capacities(i) - 0.05);
    ds.records.push_back(make_rec(t, base, y, 25.0, 29.0, 13.0));
  }
  ds.train_count = static_cast<std::size_t>(hours * 4 / 5);
  return ds;
}

bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

std::string temp_dir(const char* stem) {
  std::string dir = (std::filesystem::temp_directory_path() / stem).string();
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("independent average profit matches a per-record recomputation") {
  ExperimentDataset ds = noisy_dataset(50, 1);
  std::span<const ForecastRecord> test = test_records(ds);
  Eigen::VectorXd ap = average_profit_independent(test);
  for (int i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (const ForecastRecord& rec : test)
      sum += rec.hour.spot * rec.actual(1 + i) -
             imbalance_cost(rec.base(1 + i), rec.actual(1 + i), rec.penalties);
    CHECK(ap(i) == doctest::Approx(sum / static_cast<double>(test.size())).epsilon(1e-12));
  }
  CHECK_THROWS_AS(average_profit_independent({}), DataError);
}

TEST_CASE("perfect base forecasts earn exactly the spot revenue") {
  ExperimentDataset ds;
  ds.hier = Hierarchy::total_of(2);
  ds.capacities = Eigen::Vector2d(2.0, 3.0);
  ds.aggregate_capacity = 5.0;
  for (int t = 0; t < 30; ++t) {
    Eigen::Vector2d y(1.0 + 0.01 * t, 2.0 - 0.01 * t);
    ds.records.push_back(make_rec(t, y, y, 25.0, 29.0, 13.0));
  }
  ds.train_count = 24;
  Eigen::VectorXd ap = average_profit_independent(ds.records);
  Eigen::VectorXd revenue = Eigen::VectorXd::Zero(2);
  for (const ForecastRecord& rec : ds.records)
    revenue += 25.0 * rec.actual.tail(2);
  revenue /= static_cast<double>(ds.records.size());
  CHECK((ap - revenue).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a single record evaluates to that record's profit") {
  ExperimentDataset ds = noisy_dataset(30, 2);
  std::vector<ForecastRecord> one(ds.records.begin(), ds.records.begin() + 1);
  Eigen::VectorXd ap = average_profit_independent(one);
  for (int i = 0; i < 3; ++i)
    CHECK(ap(i) == trade_profit_split(one[0].base(1 + i), one[0].actual(1 + i), one[0].hour));
}

TEST_CASE("bottom-up at w=0 reproduces independent profits exactly") {
  ExperimentDataset ds = noisy_dataset(200, 3);
  ReconModel bu = bottom_up_model(ds);
  std::span<const ForecastRecord> test = test_records(ds);
  Eigen::VectorXd ind = average_profit_independent(test);
  for (ShareRule rule : {ShareRule::generation_share, ShareRule::pseudo_cost_share}) {
    Eigen::VectorXd ap =
        average_profit_aggregated(bu, ds.hier, test, AllocationPolicy{0.0, rule});
    CHECK((ap - ind).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("value is conserved across producers and the portfolio manager") {
  ExperimentDataset ds = noisy_dataset(60, 4);
  ReconModel bu = bottom_up_model(ds);
  for (ShareRule rule : {ShareRule::generation_share, ShareRule::pseudo_cost_share}) {
    AllocationPolicy policy{0.7, rule};
    for (const ForecastRecord& rec : ds.records) {
      Eigen::VectorXd full = reconcile(bu, ds.hier, rec);
      SettlementBreakdown s = allocate(policy, ds.hier, full, rec.actual, rec.penalties);
      double producer_profit = 0.0;
      for (int i = 0; i < 3; ++i)
        producer_profit += rec.hour.spot * rec.actual(1 + i) - s.allocated(i);
      double total = rec.hour.spot * rec.actual(0) - s.aggregate_cost;
      CHECK(producer_profit + s.pm_payoff == doctest::Approx(total).epsilon(1e-12));
    }
  }
}

TEST_CASE("profit of fixed offers is affine in the allocation weight") {
  ExperimentDataset ds = noisy_dataset(150, 5);
  ReconModel bu = bottom_up_model(ds);
  std::span<const ForecastRecord> test = test_records(ds);
  for (ShareRule rule : {ShareRule::generation_share, ShareRule::pseudo_cost_share}) {
    Eigen::VectorXd lo =
        average_profit_aggregated(bu, ds.hier, test, AllocationPolicy{0.1, rule});
    Eigen::VectorXd mid =
        average_profit_aggregated(bu, ds.hier, test, AllocationPolicy{0.5, rule});
    Eigen::VectorXd hi =
        average_profit_aggregated(bu, ds.hier, test, AllocationPolicy{1.0, rule});
    for (int i = 0; i < 3; ++i) {
      double slope_a = (mid(i) - lo(i)) / 0.4;
      double slope_b = (hi(i) - mid(i)) / 0.5;
      double rel = std::abs(slope_a - slope_b) /
                   (std::abs(slope_a) + std::abs(slope_b) + 1e-12);
      CHECK(rel < 1e-9);
    }
  }
}

TEST_CASE("hierarchical rmse scores constant bias as that bias") {
  ExperimentDataset ds;
  ds.hier = Hierarchy::total_of(2);
  ds.capacities = Eigen::Vector2d(4.0, 4.0);
  ds.aggregate_capacity = 8.0;
  const double bias = 0.25;
  for (int t = 0; t < 40; ++t) {
    Eigen::Vector2d y(1.0 + 0.01 * t, 2.0);
    Eigen::Vector2d base = y.array() + bias;
    ds.records.push_back(make_rec(t, base, y, 25.0, 29.0, 13.0));
  }
  ds.train_count = 32;
  // The aggregate base entry carries bias 2b, the two leaves b each.
  double expected = std::sqrt((4.0 * bias * bias + 2.0 * bias * bias) / 3.0);
  ReconModel ind;
  ind.kind = Strategy::independent;
  ind.leaves = 2;
  CHECK(hierarchical_rmse(ind, ds.hier, ds.records) ==
        doctest::Approx(expected).epsilon(1e-12));

  ReconModel bu = bottom_up_model(ds);
  CHECK(hierarchical_rmse(bu, ds.hier, ds.records) ==
        doctest::Approx(expected).epsilon(1e-12));

  ExperimentDataset perfect = ds;
  for (ForecastRecord& rec : perfect.records) rec.base = rec.actual;
  CHECK(hierarchical_rmse(bu, perfect.hier, perfect.records) == 0.0);
}

TEST_CASE("condition rate counts decidable records only") {
  ExperimentDataset ds = noisy_dataset(80, 6);
  ReconModel bu = bottom_up_model(ds);
  double rate = condition_rate(bu, ds.hier, ds.records);
  CHECK(rate >= 0.0);
  CHECK(rate <= 1.0);

  std::size_t holds = 0, decidable = 0;
  for (const ForecastRecord& rec : ds.records) {
    Eigen::VectorXd full = reconcile(bu, ds.hier, rec);
    UnitCostCondition c = unit_cost_condition(ds.hier, full, rec.actual, rec.penalties);
    if (c == UnitCostCondition::degenerate) continue;
    ++decidable;
    if (c == UnitCostCondition::holds) ++holds;
  }
  CHECK(rate == static_cast<double>(holds) / static_cast<double>(decidable));

  ReconModel ind;
  ind.kind = Strategy::independent;
  ind.leaves = 3;
  CHECK(std::isnan(condition_rate(ind, ds.hier, ds.records)));
}

TEST_CASE("strategy evaluation fills the change columns consistently") {
  ExperimentDataset ds = noisy_dataset(120, 7);
  std::span<const ForecastRecord> test = test_records(ds);
  Eigen::VectorXd ind = average_profit_independent(test);

  StrategyResult self =
      evaluate_strategy(ds, nullptr, Strategy::independent, 0.5,
                        ShareRule::generation_share, ind);
  CHECK(self.ap_change.cwiseAbs().maxCoeff() == 0.0);
  CHECK(self.status == "ok");

  ReconModel bu = bottom_up_model(ds);
  StrategyResult cell = evaluate_strategy(ds, &bu, Strategy::bottom_up, 0.5,
                                          ShareRule::generation_share, ind);
  CHECK((cell.ap_change - (cell.ap - ind)).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i)
    CHECK(cell.ap_change_pct(i) ==
          doctest::Approx(100.0 * cell.ap_change(i) / std::abs(ind(i))).epsilon(1e-12));
}

TEST_CASE("the sweep grid is complete and ordered") {
  ExperimentDataset ds = noisy_dataset(300, 8);
  SweepSpec spec;
  spec.strategies = {Strategy::independent, Strategy::bottom_up, Strategy::quality_linear,
                     Strategy::value_linear};
  spec.weights = {0.25, 0.5, 0.75};
  spec.train.epochs = 40;
  spec.train.batch = 16;
  spec.train.step = 1e-3;
  SweepReport report = run_sweep(ds, spec, "config_hash=abc seed=42");
  REQUIRE(report.cells.size() == 12);
  REQUIRE(report.producers == 3);

  std::size_t slot = 0;
  for (Strategy s : spec.strategies) {
    for (double w : spec.weights) {
      const StrategyResult& cell = report.cells[slot++];
      CHECK(cell.strategy == strategy_tag(s));
      CHECK(cell.w == w);
      CHECK(cell.ap.size() == 3);
      if (s == Strategy::independent) {
        CHECK(cell.ap_change.cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }

  // Independent cells are constant across w; quality cells share one model.
  CHECK(same(report.cells[0].ap, report.cells[1].ap));
  CHECK(report.cells[6].rmse == report.cells[7].rmse);
  CHECK(report.cells[7].rmse == report.cells[8].rmse);
}

TEST_CASE("sweeps are deterministic and schedule-independent") {
  ExperimentDataset ds = noisy_dataset(250, 9);
  SweepSpec spec;
  spec.strategies = {Strategy::bottom_up, Strategy::value_linear};
  spec.weights = {0.3, 0.6, 0.9};
  spec.train.epochs = 30;
  spec.train.batch = 16;
  spec.train.step = 1e-3;
  spec.jobs = 1;
  SweepReport serial = run_sweep(ds, spec, "fp");
  spec.jobs = 3;
  SweepReport parallel = run_sweep(ds, spec, "fp");
  REQUIRE(serial.cells.size() == parallel.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    const StrategyResult& a = serial.cells[i];
    const StrategyResult& b = parallel.cells[i];
    CHECK(a.strategy == b.strategy);
    CHECK(a.status == b.status);
    for (Eigen::Index j = 0; j < a.ap.size(); ++j) {
      CHECK(a.ap(j) == b.ap(j));
      CHECK(a.ap_change(j) == b.ap_change(j));
    }
    CHECK(a.rmse == b.rmse);
  }
}

TEST_CASE("report files carry the fingerprint and full grid") {
  ExperimentDataset ds = noisy_dataset(200, 10);
  SweepSpec spec;
  spec.strategies = {Strategy::independent, Strategy::bottom_up};
  spec.weights = {0.5, 1.0};
  SweepReport report = run_sweep(ds, spec, "config_hash=f00 seed=7");
  std::string dir = temp_dir("hiertrade_eval_test");

  write_sweep_csv(report, dir + "/sweep.csv");
  std::ifstream sweep(dir + "/sweep.csv");
  std::string line;
  REQUIRE(std::getline(sweep, line));
  CHECK(line == "# config_hash=f00 seed=7");
  REQUIRE(std::getline(sweep, line));
  CHECK(line == "strategy,w,producer,ap,ap_change,ap_change_pct,rmse,condition_rate,status");
  int rows = 0;
  while (std::getline(sweep, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2 * 2 * 3);

  write_rmse_csv(report, dir + "/rmse.csv");
  std::ifstream rmse(dir + "/rmse.csv");
  REQUIRE(std::getline(rmse, line));
  CHECK(line == "# config_hash=f00 seed=7");
  REQUIRE(std::getline(rmse, line));
  CHECK(line == "strategy,w,rmse,status");
  rows = 0;
  while (std::getline(rmse, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);

  write_plot_files(report, dir);
  CHECK(std::filesystem::exists(dir + "/ap_change_independent.dat"));
  CHECK(std::filesystem::exists(dir + "/ap_change_bottom_up.dat"));
  CHECK(std::filesystem::exists(dir + "/plots.gp"));
  std::ifstream dat(dir + "/ap_change_bottom_up.dat");
  REQUIRE(std::getline(dat, line));
  CHECK(line == "# config_hash=f00 seed=7");

  std::filesystem::remove_all(dir);
}

TEST_CASE("independent cells report empty condition rates in the csv") {
  ExperimentDataset ds = noisy_dataset(100, 11);
  SweepSpec spec;
  spec.strategies = {Strategy::independent};
  spec.weights = {0.5};
  SweepReport report = run_sweep(ds, spec, "fp");
  std::string dir = temp_dir("hiertrade_eval_nan");
  write_sweep_csv(report, dir + "/sweep.csv");
  std::ifstream is(dir + "/sweep.csv");
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  REQUIRE(std::getline(is, line));
  // strategy,w,producer,ap,ap_change,ap_change_pct,rmse,condition_rate,status
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  REQUIRE(fields.size() == 9);
  CHECK(fields[7].empty());
  CHECK(fields[8] == "ok");
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweep rejects empty or out-of-range grids") {
  ExperimentDataset ds = noisy_dataset(60, 12);
  SweepSpec spec;
  spec.weights = {0.5};
  CHECK_THROWS_AS(run_sweep(ds, spec, "fp"), ConfigError);
  spec.strategies = {Strategy::bottom_up};
  spec.weights = {};
  CHECK_THROWS_AS(run_sweep(ds, spec, "fp"), ConfigError);
  spec.weights = {1.5};
  CHECK_THROWS_AS(run_sweep(ds, spec, "fp"), ConfigError);
}
