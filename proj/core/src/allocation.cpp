#include "hiertrade/allocation.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hiertrade/errors.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

const char* share_rule_tag(ShareRule rule) {
  return rule == ShareRule::generation_share ? "generation_share" : "pseudo_cost_share";
}

ShareRule parse_share_rule(const std::string& tag) {
  if (tag == "generation_share") return ShareRule::generation_share;
  if (tag == "pseudo_cost_share") return ShareRule::pseudo_cost_share;
  throw ConfigError("unknown share rule '" + tag + "'");
}

void validate(const AllocationPolicy& policy) {
  if (!(policy.weight >= 0.0 && policy.weight <= 1.0))
    throw ConfigError("allocation weight must lie in [0, 1]");
}

namespace {

void check_portfolio(const Hierarchy& hier, const Eigen::VectorXd& reconciled,
                     const Eigen::VectorXd& actual) {
  if (hier.aggregates() != 1)
    throw ConfigError("settlement requires a single-aggregate hierarchy");
  if (reconciled.size() != hier.series() || actual.size() != hier.series())
    throw DataError("settlement vectors must cover every series");
  if (!hier.is_coherent(reconciled, 1e-6))
    throw CoherenceError("reconciled offers are not coherent");
}

}  // namespace

Eigen::VectorXd share_weights(ShareRule rule, const Hierarchy& hier,
                              const Eigen::VectorXd& reconciled, const Eigen::VectorXd& actual,
                              const Penalties& penalties) {
  check_portfolio(hier, reconciled, actual);
  const int m = hier.leaves();
  Eigen::VectorXd gamma(m);

  if (rule == ShareRule::generation_share) {
    double total = actual(0);
    if (total > 0.0) {
      for (int i = 0; i < m; ++i) gamma(i) = actual(1 + i) / total;
    } else {
      gamma.setConstant(1.0 / m);
    }
    return gamma;
  }

  double denom = 0.0;
  for (int i = 0; i < m; ++i) {
    gamma(i) = imbalance_cost(reconciled(1 + i), actual(1 + i), penalties);
    denom += gamma(i);
  }
  if (denom > 0.0) {
    gamma /= denom;
  } else {
    gamma.setConstant(1.0 / m);
  }
  return gamma;
}

SettlementBreakdown allocate(const AllocationPolicy& policy, const Hierarchy& hier,
                             const Eigen::VectorXd& reconciled, const Eigen::VectorXd& actual,
                             const Penalties& penalties) {
  validate(policy);
  validate(penalties);
  check_portfolio(hier, reconciled, actual);
  const int m = hier.leaves();

  SettlementBreakdown out;
  out.pseudo.resize(m);
  for (int i = 0; i < m; ++i)
    out.pseudo(i) = imbalance_cost(reconciled(1 + i), actual(1 + i), penalties);
  out.shares = share_weights(policy.rule, hier, reconciled, actual, penalties);
  out.aggregate_cost = imbalance_cost(reconciled(0), actual(0), penalties);

  out.allocated.resize(m);
  const double w = policy.weight;
  for (int i = 0; i < m; ++i)
    out.allocated(i) = (1.0 - w) * out.pseudo(i) + w * out.shares(i) * out.aggregate_cost;

  out.pm_payoff = out.allocated.sum() - out.aggregate_cost;
  out.extra_profit = std::numeric_limits<double>::quiet_NaN();
  return out;
}

double extra_profit(const Eigen::VectorXd& base_leaf_offers, double reconciled_total,
                    const Eigen::VectorXd& actual_leaves, double actual_total,
                    const Penalties& penalties) {
  if (base_leaf_offers.size() != actual_leaves.size())
    throw DataError("base offers and actuals must have equal length");
  double independent = 0.0;
  for (Eigen::Index i = 0; i < base_leaf_offers.size(); ++i)
    independent += imbalance_cost(base_leaf_offers(i), actual_leaves(i), penalties);
  return independent - imbalance_cost(reconciled_total, actual_total, penalties);
}

SettlementBreakdown settle(const AllocationPolicy& policy, const Hierarchy& hier,
                           const Eigen::VectorXd& reconciled, const Eigen::VectorXd& base,
                           const Eigen::VectorXd& actual, const Penalties& penalties) {
  SettlementBreakdown out = allocate(policy, hier, reconciled, actual, penalties);
  if (base.size() != hier.series()) throw DataError("base vector must cover every series");
  out.extra_profit = extra_profit(hier.leaves_of(base), reconciled(0), hier.leaves_of(actual),
                                  actual(0), penalties);
  return out;
}

UnitCostCondition unit_cost_condition(const Hierarchy& hier, const Eigen::VectorXd& reconciled,
                                      const Eigen::VectorXd& actual, const Penalties& penalties) {
  check_portfolio(hier, reconciled, actual);
  const int m = hier.leaves();
  const double total = actual(0);
  if (total <= 0.0) return UnitCostCondition::degenerate;
  const double agg_cost = imbalance_cost(reconciled(0), total, penalties);
  for (int i = 0; i < m; ++i) {
    double pseudo = imbalance_cost(reconciled(1 + i), actual(1 + i), penalties);
    // Unit-cost comparison (agg_cost / total <= pseudo / y_i), cross-multiplied.
    if (actual(1 + i) * agg_cost > total * pseudo) return UnitCostCondition::fails;
  }
  return UnitCostCondition::holds;
}

std::string settlement_csv_header(int leaves) {
  std::ostringstream os;
  os << "t,w,gamma_mode,c_sum";
  for (int i = 1; i <= leaves; ++i) os << ",c_agg_" << i;
  for (int i = 1; i <= leaves; ++i) os << ",c_pseudo_" << i;
  for (int i = 1; i <= leaves; ++i) os << ",gamma_" << i;
  os << ",R,R_pm";
  return os.str();
}

std::string settlement_csv_row(std::int64_t time, const AllocationPolicy& policy,
                               const SettlementBreakdown& breakdown) {
  std::ostringstream os;
  os << format_iso8601_utc(time) << ',' << fmt_double(policy.weight) << ','
     << share_rule_tag(policy.rule) << ',' << fmt_double(breakdown.aggregate_cost);
  for (Eigen::Index i = 0; i < breakdown.allocated.size(); ++i)
    os << ',' << fmt_double(breakdown.allocated(i));
  for (Eigen::Index i = 0; i < breakdown.pseudo.size(); ++i)
    os << ',' << fmt_double(breakdown.pseudo(i));
  for (Eigen::Index i = 0; i < breakdown.shares.size(); ++i)
    os << ',' << fmt_double(breakdown.shares(i));
  os << ',' << fmt_double(breakdown.extra_profit) << ',' << fmt_double(breakdown.pm_payoff);
  return os.str();
}

}  // namespace hiertrade
