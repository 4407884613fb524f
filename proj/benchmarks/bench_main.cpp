#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hiertrade/allocation.hpp"
#include "hiertrade/dataio.hpp"
#include "hiertrade/hierarchy.hpp"
#include "hiertrade/market.hpp"
#include "hiertrade/mlp.hpp"
#include "hiertrade/reconcile.hpp"
#include "hiertrade/util.hpp"

namespace {

using namespace hiertrade;

constexpr double kSpot = 25.0;
constexpr double kUp = 29.0;
constexpr double kDown = 13.0;

ExperimentDataset bench_dataset(int producers, int hours) {
  SyntheticSpec spec;
  spec.producers = producers;
  spec.capacities = Eigen::VectorXd::LinSpaced(producers, 1.5, 3.5);
  spec.hours = hours;
  spec.seed = 9;
  RawDataset raw = synthesize(spec);

  std::vector<FittedForecaster> forecasters;
  RegressionSpec reg;
  reg.capacity = spec.capacities.sum();
  forecasters.push_back(fit_mean({raw.aggregate.data(), raw.rows()}, reg));
  for (int j = 0; j < producers; ++j) {
    Eigen::VectorXd col = raw.leaves.col(j);
    reg.capacity = spec.capacities(j);
    forecasters.push_back(fit_mean({col.data(), raw.rows()}, reg));
  }
  return build_records(raw, forecasters, ContextSpec{}, 1);
}

void settle_hour(benchmark::State& state) {
  MarketHour hour{0, kSpot, kUp, kDown};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (auto _ : state) {
    double profit = trade_profit(u(rng), u(rng), hour);
    benchmark::DoNotOptimize(profit);
  }
}
BENCHMARK(settle_hour);

void allocate_portfolio(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  Hierarchy hier = Hierarchy::total_of(m);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  Eigen::VectorXd offers(m);
  Eigen::VectorXd actual(m);
  for (int i = 0; i < m; ++i) {
    offers(i) = u(rng);
    actual(i) = u(rng);
  }
  Eigen::VectorXd full = hier.aggregate(offers);
  Eigen::VectorXd y = hier.aggregate(actual);
  AllocationPolicy policy{0.9, ShareRule::generation_share};
  Penalties pen{kSpot - kDown, kUp - kSpot};
  for (auto _ : state) {
    SettlementBreakdown s = allocate(policy, hier, full, y, pen);
    benchmark::DoNotOptimize(s.allocated);
  }
}
BENCHMARK(allocate_portfolio)->Arg(4)->Arg(16)->Arg(64);

void mlp_forward_backward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  Eigen::VectorXd caps = Eigen::VectorXd::Constant(4, 2.5);
  Mlp net = make_mlp({8, width, 4}, Activation::tanh_fn, OutputTransform::scaled_sigmoid,
                     caps, 3);
  Eigen::VectorXd x = Eigen::VectorXd::Random(8);
  Eigen::VectorXd out_grad = Eigen::VectorXd::Random(4);
  for (auto _ : state) {
    MlpTrace trace;
    Eigen::VectorXd h = forward_trace(net, x, trace);
    MlpGrad grad = zero_grad(net);
    Eigen::VectorXd in_grad = backward(net, trace, out_grad, grad);
    benchmark::DoNotOptimize(h);
    benchmark::DoNotOptimize(in_grad);
    benchmark::DoNotOptimize(grad.layers);
  }
}
BENCHMARK(mlp_forward_backward)->Arg(8)->Arg(32)->Arg(128);

void reconcile_record(benchmark::State& state) {
  static ExperimentDataset ds = bench_dataset(4, 600);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 4;
  auto [model, report] = train_quality(ds, Strategy::quality_learned, cfg);
  const ForecastRecord& rec = ds.records.front();
  for (auto _ : state) {
    Eigen::VectorXd full = reconcile(model, ds.hier, rec);
    benchmark::DoNotOptimize(full);
  }
}
BENCHMARK(reconcile_record);

void value_training_epoch(benchmark::State& state) {
  static ExperimentDataset ds = bench_dataset(4, 2200);
  const auto batch_size = state.range(0);
  for (auto _ : state) {
    state.PauseTiming();
    TrainConfig cfg;
    cfg.epochs = static_cast<int>(state.range(1));
    cfg.batch = static_cast<int>(batch_size);
    cfg.step = 1e-4;
    cfg.seed = 5;
    state.ResumeTiming();
    auto [model, report] = train_value(ds, Strategy::value_learned, cfg);
    benchmark::DoNotOptimize(report.rows);
  }
}
BENCHMARK(value_training_epoch)->Args({64, 50})->Args({256, 50});

}  // namespace

BENCHMARK_MAIN();
