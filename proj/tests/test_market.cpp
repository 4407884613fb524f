#include <doctest.h>

#include <random>

#include "hiertrade/errors.hpp"
#include "hiertrade/market.hpp"

using namespace hiertrade;

TEST_CASE("market hour validation enforces price bracketing") {
  CHECK_NOTHROW(make_market_hour(0, 25.0, 29.0, 13.0));
  CHECK_NOTHROW(make_market_hour(0, 25.0, 25.0, 25.0));
  CHECK_THROWS_AS(make_market_hour(0, 25.0, 24.0, 13.0), DataError);   // up < spot
  CHECK_THROWS_AS(make_market_hour(0, 25.0, 29.0, 26.0), DataError);   // down > spot
  CHECK_THROWS_AS(make_market_hour(0, -1.0, 29.0, -2.0), DataError);   // negative
  CHECK_THROWS_AS(make_market_hour(0, 25.0, 1.0 / 0.0, 13.0), DataError);
}

TEST_CASE("penalties derive from the price wedge") {
  MarketHour hour = make_market_hour(0, 25.0, 29.0, 13.0);
  Penalties p = penalties_from(hour);
  CHECK(p.surplus == doctest::Approx(12.0));
  CHECK(p.shortfall == doctest::Approx(4.0));
  CHECK_FALSE(degenerate(p));

  Penalties flat = penalties_from(make_market_hour(0, 25.0, 25.0, 25.0));
  CHECK(degenerate(flat));
  CHECK_THROWS_AS(nominal_level(flat), DataError);
}

TEST_CASE("worked settlement example") {
  // Offer 10, deliver 12 at spot 25, up 29, down 13: the 2 MWh surplus earns
  // the down-regulation price, so profit = 250 + 2 * 13 = 276.
  MarketHour hour = make_market_hour(0, 25.0, 29.0, 13.0);
  CHECK(trade_profit(10.0, 12.0, hour) == doctest::Approx(276.0));
  CHECK(trade_profit_split(10.0, 12.0, hour) == doctest::Approx(276.0));

  // Shortfall side: offer 12, deliver 10, buy back 2 MWh at 29.
  CHECK(trade_profit(12.0, 10.0, hour) == doctest::Approx(12.0 * 25.0 - 2.0 * 29.0));

  Penalties p = penalties_from(hour);
  CHECK(imbalance_cost(10.0, 12.0, p) == doctest::Approx(24.0));
  CHECK(imbalance_cost(12.0, 10.0, p) == doctest::Approx(8.0));
  CHECK(imbalance_cost(10.0, 10.0, p) == 0.0);
}

TEST_CASE("profit forms agree on random triples") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> qty(0.0, 50.0);
  std::uniform_real_distribution<double> price(0.0, 60.0);
  for (int i = 0; i < 2000; ++i) {
    double spot = price(rng);
    double up = spot + price(rng);
    double down = spot * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    MarketHour hour = make_market_hour(0, spot, up, down);
    double offer = qty(rng), actual = qty(rng);
    double a = trade_profit(offer, actual, hour);
    double b = trade_profit_split(offer, actual, hour);
    CHECK(std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a)));
  }
}

TEST_CASE("nominal level is the penalty fractile") {
  CHECK(nominal_level(Penalties{12.0, 4.0}) == doctest::Approx(0.75));
  CHECK(nominal_level(Penalties{4.0, 12.0}) == doctest::Approx(0.25));
  CHECK(nominal_level(Penalties{5.0, 5.0}) == doctest::Approx(0.5));
  CHECK(nominal_level(Penalties{5.0, 0.0}) == doctest::Approx(1.0));
}

TEST_CASE("imbalance cost is convex and positively homogeneous") {
  Penalties p{7.0, 3.0};
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> qty(0.0, 20.0);
  for (int i = 0; i < 500; ++i) {
    double y = qty(rng), f1 = qty(rng), f2 = qty(rng);
    double mid = imbalance_cost(0.5 * (f1 + f2), y, p);
    double avg = 0.5 * imbalance_cost(f1, y, p) + 0.5 * imbalance_cost(f2, y, p);
    CHECK(mid <= avg + 1e-12 * (1.0 + avg));

    double k = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
    CHECK(imbalance_cost(k * f1, k * y, p) ==
          doctest::Approx(k * imbalance_cost(f1, y, p)));
  }
}

TEST_CASE("settlement rejects invalid quantities") {
  MarketHour hour = make_market_hour(0, 25.0, 29.0, 13.0);
  CHECK_THROWS_AS(trade_profit(-1.0, 5.0, hour), DataError);
  CHECK_THROWS_AS(imbalance_cost(1.0, -5.0, penalties_from(hour)), DataError);
}

TEST_CASE("offers clamp to capacity") {
  CHECK(clamp_offer(-2.0, 10.0) == 0.0);
  CHECK(clamp_offer(12.0, 10.0) == 10.0);
  CHECK(clamp_offer(7.0, 10.0) == 7.0);
  CHECK_THROWS_AS(clamp_offer(1.0, -1.0), ConfigError);
  CHECK_THROWS_AS(clamp_offer(0.0 / 0.0, 1.0), DataError);
}
