#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hiertrade/allocation.hpp"
#include "hiertrade/dataio.hpp"
#include "hiertrade/hierarchy.hpp"
#include "hiertrade/mlp.hpp"

namespace hiertrade {

// How the portfolio decides its offers.
//   independent:      every producer trades its own base forecast; no
//                     aggregate offer exists (evaluation-only tag)
//   bottom_up:        aggregate offer = sum of the base leaf forecasts
//   quality_*:        leaf offers learned to minimize forecast MSE
//   value_*:          leaf offers learned to maximize the bargaining gain
//                     subject to every producer gaining on average
// The *_linear variants combine base forecasts affinely; the *_learned
// variants run a hidden-layer network over base forecasts plus context.
enum class Strategy {
  independent,
  bottom_up,
  quality_learned,
  quality_linear,
  value_learned,
  value_linear,
};

const char* strategy_tag(Strategy s);
Strategy parse_strategy(const std::string& tag);
bool is_value_strategy(Strategy s);
bool is_quality_strategy(Strategy s);

// A reconciliation map: base forecasts (plus optional context) -> leaf
// offers.  The full offer vector is the coherent lift S * h, so the
// aggregate offer is always the sum of the leaf offers.
struct ReconModel {
  Strategy kind = Strategy::bottom_up;
  int leaves = 0;
  bool use_context = false;
  Mlp net;  // unused for bottom_up
  FeatureScaler scaler;

  Eigen::VectorXd features(const ForecastRecord& rec) const;
};

ReconModel bottom_up_model(const ExperimentDataset& ds);

// Leaf offers for one record, then lifted through the hierarchy.
Eigen::VectorXd leaf_offers(const ReconModel& model, const ForecastRecord& rec);
Eigen::VectorXd reconcile(const ReconModel& model, const Hierarchy& hier,
                          const ForecastRecord& rec);

void save_model(const ReconModel& model, const std::string& path);
ReconModel load_model(const std::string& path);

struct TrainConfig {
  int hidden_width = 32;
  int hidden_layers = 1;
  double step = 1e-3;       // primal step
  double dual_step = 1e-2;  // dual ascent step, shared by all producers
  int epochs = 500;
  int batch = 64;
  double weight = 0.9;  // allocation blend during value training
  ShareRule rule = ShareRule::generation_share;
  // Barrier floor for the log terms: absolute when epsilon_log > 0, else
  // epsilon_log_scale times the mean independent cost on the training set.
  double epsilon_log = 0.0;
  double epsilon_log_scale = 1e-6;
  // Full-set constraint verdict at the end of value training: a producer may
  // fall short of breaking even by at most this fraction of the mean
  // independent cost before the run is declared a constraint failure.
  double constraint_tol_scale = 1e-6;
  std::uint64_t seed = 42;
  // Conventional projected dual update (can decrease when the constraint is
  // slack) instead of the default monotone non-decreasing ascent.
  bool allow_dual_decrease = false;
  OutputTransform transform = OutputTransform::scaled_sigmoid;
  int eval_every = 25;  // cadence of full-set snapshots during quality training
};

void validate(const TrainConfig& cfg);

struct EpochRow {
  int epoch = 0;
  double batch_loss = 0.0;       // batch Lagrangian (value) or batch MSE (quality)
  Eigen::VectorXd avg_excess;    // batch mean of independent minus allocated cost
  Eigen::VectorXd mu;            // dual variables after this epoch's update
};

struct TrainReport {
  std::vector<EpochRow> rows;
  Eigen::VectorXd final_mu;
  Eigen::VectorXd final_excess;  // full training set, per producer
  double final_objective = 0.0;  // bargaining objective (value) or MSE (quality)
  double epsilon_used = 0.0;
  std::string status;  // "ok" or "constraint_failure"
};

// epoch,L_batch,avg_excess_1..m,mu_1..m with a fingerprint comment line.
void write_train_report_csv(const TrainReport& report, const std::string& path,
                            const std::string& fingerprint);

// Per-producer imbalance cost of trading the base leaf forecasts alone.
Eigen::VectorXd independent_leaf_costs(const ForecastRecord& rec);

// Mean per-producer excess (independent cost minus allocated cost) of a
// model over records; skips degenerate hours, which carry no settlement.
Eigen::VectorXd mean_excess(const ReconModel& model, std::span<const ForecastRecord> records,
                            const AllocationPolicy& policy);

// The bargaining objective sum_i -log(max(mean_excess_i, eps)).
double nash_objective(const ReconModel& model, std::span<const ForecastRecord> records,
                      const AllocationPolicy& policy, double eps);

// Empirical Lagrangian of one batch: objective plus sum_i mu_i times the
// hinged average constraint violation.  The span IS the batch.
double value_lagrangian(const ReconModel& model, std::span<const ForecastRecord> batch,
                        const Eigen::VectorXd& mu, const AllocationPolicy& policy, double eps);

// Analytic d(value_lagrangian)/d(network parameters) at the same point,
// using subgradient 0 at every hinge kink and under the barrier floor.
MlpGrad value_lagrangian_grad(const ReconModel& model, std::span<const ForecastRecord> batch,
                              const Eigen::VectorXd& mu, const AllocationPolicy& policy,
                              double eps);

// Minimize leaf-offer MSE against realized generation.  Deterministic given
// the config seed; returns the best full-set snapshot, so the final MSE
// never exceeds the initial one.
std::pair<ReconModel, TrainReport> train_quality(const ExperimentDataset& ds, Strategy kind,
                                                 const TrainConfig& cfg);

// Constrained bargaining training: one sampled batch per epoch, a primal
// step on the batch Lagrangian, then dual ascent on the batch violations.
// The dual variables start at 1 and (by default) never decrease.
std::pair<ReconModel, TrainReport> train_value(const ExperimentDataset& ds, Strategy kind,
                                               const TrainConfig& cfg);

}  // namespace hiertrade
