#include "hiertrade/market.hpp"

#include <cmath>

#include "hiertrade/errors.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

void validate(const MarketHour& hour) {
  if (!std::isfinite(hour.spot) || !std::isfinite(hour.up_reg) || !std::isfinite(hour.down_reg))
    throw DataError("market hour has non-finite price");
  if (hour.spot < 0.0 || hour.down_reg < 0.0)
    throw DataError("market hour has negative price");
  if (hour.up_reg < hour.spot || hour.down_reg > hour.spot)
    throw DataError("regulation prices must bracket the spot price (up_reg >= spot >= down_reg)");
}

MarketHour make_market_hour(std::int64_t time, double spot, double up_reg, double down_reg) {
  MarketHour hour{time, spot, up_reg, down_reg};
  validate(hour);
  return hour;
}

void validate(const Penalties& p) {
  if (!std::isfinite(p.surplus) || !std::isfinite(p.shortfall))
    throw DataError("non-finite imbalance penalty");
  if (p.surplus < 0.0 || p.shortfall < 0.0) throw DataError("negative imbalance penalty");
}

Penalties penalties_from(const MarketHour& hour) {
  validate(hour);
  return Penalties{hour.spot - hour.down_reg, hour.up_reg - hour.spot};
}

bool degenerate(const Penalties& p) { return p.surplus + p.shortfall == 0.0; }

namespace {

void check_quantities(double offer, double actual) {
  if (!std::isfinite(offer) || !std::isfinite(actual))
    throw DataError("non-finite quantity in settlement");
  if (offer < 0.0 || actual < 0.0) throw DataError("negative quantity in settlement");
}

}  // namespace

double imbalance_cost(double offer, double actual, const Penalties& p) {
  check_quantities(offer, actual);
  return p.surplus * pos(actual - offer) + p.shortfall * pos(offer - actual);
}

double trade_profit(double offer, double actual, const MarketHour& hour) {
  check_quantities(offer, actual);
  return hour.spot * offer - hour.up_reg * pos(offer - actual) +
         hour.down_reg * pos(actual - offer);
}

double trade_profit_split(double offer, double actual, const MarketHour& hour) {
  return hour.spot * actual - imbalance_cost(offer, actual, penalties_from(hour));
}

double nominal_level(const Penalties& p) {
  validate(p);
  if (degenerate(p)) throw DataError("nominal level undefined for a degenerate hour");
  return p.surplus / (p.surplus + p.shortfall);
}

double clamp_offer(double quantity, double capacity) {
  if (!(capacity >= 0.0)) throw ConfigError("capacity must be non-negative");
  if (std::isnan(quantity)) throw DataError("NaN offer quantity");
  if (quantity < 0.0) return 0.0;
  if (quantity > capacity) return capacity;
  return quantity;
}

}  // namespace hiertrade
