#pragma once

#include <cstdint>

namespace hiertrade {

// One delivery hour of a dual-price balancing market.  The producer sells a
// forward quantity at `spot`; deviations settle at the regulation prices:
// shortfall is bought back at `up_reg`, surplus is paid `down_reg`.
// Invariant: up_reg >= spot >= down_reg, all finite and non-negative, so a
// deviation never pays better than the forward trade.
struct MarketHour {
  std::int64_t time = 0;  // Unix seconds, start of the delivery hour
  double spot = 0.0;
  double up_reg = 0.0;
  double down_reg = 0.0;
};

// Throws DataError unless prices are finite, non-negative, and ordered.
void validate(const MarketHour& hour);

MarketHour make_market_hour(std::int64_t time, double spot, double up_reg, double down_reg);

// Per-MWh cost of deviating from the forward offer, relative to settling the
// same energy at the spot price.  `surplus` applies to energy above the
// offer (paid down_reg instead of spot), `shortfall` to energy below it
// (bought back at up_reg).  Both are >= 0 by the price ordering.
struct Penalties {
  double surplus = 0.0;    // spot - down_reg
  double shortfall = 0.0;  // up_reg - spot
};

void validate(const Penalties& p);

Penalties penalties_from(const MarketHour& hour);

// An hour where both penalties vanish: any imbalance settles at the spot
// price, so the offer quantity does not matter.
bool degenerate(const Penalties& p);

// c(offer, actual) = surplus * [actual - offer]^+ + shortfall * [offer - actual]^+.
// Piecewise linear and convex in the offer, zero at offer == actual.
double imbalance_cost(double offer, double actual, const Penalties& p);

// Realized profit of offering `offer` and delivering `actual`:
//   spot * offer - up_reg * [offer - actual]^+ + down_reg * [actual - offer]^+.
double trade_profit(double offer, double actual, const MarketHour& hour);

// Same quantity rewritten as perfect-information revenue minus the imbalance
// cost: spot * actual - c(offer, actual).  Equal to trade_profit for every
// (offer, actual) pair; the tests pin this identity down.
double trade_profit_split(double offer, double actual, const MarketHour& hour);

// The quantile level that minimizes expected imbalance cost when the offer
// is chosen ahead of an uncertain delivery: surplus / (surplus + shortfall).
// Requires a non-degenerate hour.
double nominal_level(const Penalties& p);

// Clamps a quantity into the feasible offer range [0, capacity].
double clamp_offer(double quantity, double capacity);

}  // namespace hiertrade
