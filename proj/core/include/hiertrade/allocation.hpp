#pragma once

#include <string>

#include <Eigen/Dense>

#include "hiertrade/hierarchy.hpp"
#include "hiertrade/market.hpp"

namespace hiertrade {

// How the realized aggregate imbalance cost is keyed out to producers.
//   generation_share:  gamma_i proportional to delivered energy y_i
//   pseudo_cost_share: gamma_i proportional to the cost producer i would
//                      have caused had its reconciled forecast traded alone
// Both fall back to the uniform split 1/m when their denominator is zero.
enum class ShareRule { generation_share, pseudo_cost_share };

const char* share_rule_tag(ShareRule rule);
ShareRule parse_share_rule(const std::string& tag);

// Blends individual accountability with mutualized cost: producer i is
// charged (1 - weight) times its own pseudo-cost plus weight times its share
// of the aggregate cost.  weight in [0, 1]; weight 1 passes the aggregate
// cost through exactly, weight 0 bills everyone as if trading alone.
struct AllocationPolicy {
  double weight = 0.9;
  ShareRule rule = ShareRule::generation_share;
};

void validate(const AllocationPolicy& policy);

// Per-hour settlement of one aggregate trade.  Layout of the per-producer
// vectors matches the hierarchy leaves.
struct SettlementBreakdown {
  Eigen::VectorXd pseudo;     // c(reconciled_i, actual_i), per leaf
  Eigen::VectorXd shares;     // gamma, sums to 1
  Eigen::VectorXd allocated;  // charge per leaf
  double aggregate_cost = 0.0;  // c(reconciled_total, actual_total)
  double pm_payoff = 0.0;       // sum(allocated) - aggregate_cost
  double extra_profit = 0.0;    // vs. independent trading; NaN unless settle() fills it
};

// Requires a single-aggregate hierarchy and a coherent reconciled vector
// (tolerance 1e-6).  Throws CoherenceError otherwise.
Eigen::VectorXd share_weights(ShareRule rule, const Hierarchy& hier,
                              const Eigen::VectorXd& reconciled, const Eigen::VectorXd& actual,
                              const Penalties& penalties);

SettlementBreakdown allocate(const AllocationPolicy& policy, const Hierarchy& hier,
                             const Eigen::VectorXd& reconciled, const Eigen::VectorXd& actual,
                             const Penalties& penalties);

// Cost saved by trading the portfolio as one offer instead of each producer
// trading its own base forecast: sum_i c(base_i, y_i) - c(total, y_total).
double extra_profit(const Eigen::VectorXd& base_leaf_offers, double reconciled_total,
                    const Eigen::VectorXd& actual_leaves, double actual_total,
                    const Penalties& penalties);

// allocate() plus the extra profit against the given base offers.
SettlementBreakdown settle(const AllocationPolicy& policy, const Hierarchy& hier,
                           const Eigen::VectorXd& reconciled, const Eigen::VectorXd& base,
                           const Eigen::VectorXd& actual, const Penalties& penalties);

// Whether the aggregate trades at a unit cost no worse than every producer's
// own unit pseudo-cost this hour (cross-multiplied, so zero-generation
// producers pass trivially).  Under generation shares this is exactly the
// condition for the allocated charge to undercut the pseudo-cost for all
// producers at any blend weight.
enum class UnitCostCondition { holds, fails, degenerate };

UnitCostCondition unit_cost_condition(const Hierarchy& hier, const Eigen::VectorXd& reconciled,
                                      const Eigen::VectorXd& actual, const Penalties& penalties);

// CSV row schema shared by the reporting commands:
// t,w,gamma_mode,c_sum,c_agg_1..m,c_pseudo_1..m,gamma_1..m,R,R_pm
std::string settlement_csv_header(int leaves);
std::string settlement_csv_row(std::int64_t time, const AllocationPolicy& policy,
                               const SettlementBreakdown& breakdown);

}  // namespace hiertrade
