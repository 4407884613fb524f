#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "hiertrade/dataio.hpp"
#include "hiertrade/errors.hpp"

using namespace hiertrade;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.producers = 3;
  spec.capacities = Eigen::VectorXd(3);
  spec.capacities << 1.5, 2.5, 3.5;
  spec.hours = 400;
  spec.seed = 7;
  return spec;
}

std::filesystem::path tmp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hiertrade_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

const char* kPriceHeader = "timestamp,spot,up_reg,down_reg\n";

}  // namespace

TEST_CASE("synthesis is deterministic and respects bounds") {
  SyntheticSpec spec = small_spec();
  RawDataset a = synthesize(spec);
  RawDataset b = synthesize(spec);
  CHECK(a.leaves == b.leaves);
  CHECK(a.hours[13].spot == b.hours[13].spot);

  spec.seed = 8;
  RawDataset c = synthesize(spec);
  CHECK(a.leaves != c.leaves);

  REQUIRE(a.rows() == 400);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.leaves.col(i).minCoeff() > 0.0);
    CHECK(a.leaves.col(i).maxCoeff() < a.capacities(i));
  }
  for (std::size_t r = 0; r < a.rows(); ++r) {
    CHECK(a.aggregate(static_cast<Eigen::Index>(r)) ==
          doctest::Approx(a.leaves.row(static_cast<Eigen::Index>(r)).sum()));
    CHECK(a.times[r] == a.times[0] + static_cast<std::int64_t>(r) * 3600);
  }
}

TEST_CASE("fixed price regime fills constant hours") {
  RawDataset d = synthesize(small_spec());
  for (const MarketHour& h : d.hours) {
    CHECK(h.spot == 25.0);
    CHECK(h.up_reg == 29.0);
    CHECK(h.down_reg == 13.0);
  }
}

TEST_CASE("regime-switching prices stay ordered and mix states") {
  SyntheticSpec spec = small_spec();
  spec.hours = 3000;
  spec.prices.kind = "regime_switching";
  RawDataset d = synthesize(spec);

  int up = 0, down = 0, balanced = 0;
  for (const MarketHour& h : d.hours) {
    CHECK(h.up_reg >= h.spot);
    CHECK(h.down_reg <= h.spot);
    CHECK(h.down_reg >= 0.0);
    Penalties p = penalties_from(h);
    if (degenerate(p)) ++balanced;
    if (p.shortfall > 0.0) ++up;
    if (p.surplus > 0.0) ++down;
  }
  CHECK(up > 300);
  CHECK(down > 300);
  CHECK(balanced > 300);
}

TEST_CASE("csv write and ingest round-trip exactly") {
  SyntheticSpec spec = small_spec();
  RawDataset d = synthesize(spec);
  auto gen_path = tmp_file("roundtrip_gen.csv");
  auto price_path = tmp_file("roundtrip_price.csv");
  write_generation_csv(d, gen_path.string());
  write_price_csv(d, price_path.string());

  IngestOptions opts;
  opts.capacities = d.capacities;
  RawDataset back = ingest_csv(gen_path.string(), price_path.string(), opts);

  REQUIRE(back.rows() == d.rows());
  CHECK(back.leaves == d.leaves);
  CHECK(back.aggregate == d.aggregate);
  CHECK(back.capacities == d.capacities);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    CHECK(back.times[r] == d.times[r]);
    CHECK(back.hours[r].spot == d.hours[r].spot);
    CHECK_FALSE(back.interpolated[r]);
  }
  CHECK(back.meta.at("source") == "synthetic");
  CHECK(back.meta.at("seed") == "7");
}

TEST_CASE("short gaps interpolate and long gaps abort") {
  auto gen_path = tmp_file("gap_gen.csv");
  auto price_path = tmp_file("gap_price.csv");
  write_file(price_path,
             std::string(kPriceHeader) +
                 "2019-01-01T00:00:00Z,25,29,13\n"
                 "2019-01-01T01:00:00Z,25,29,13\n"
                 "2019-01-01T02:00:00Z,25,29,13\n"
                 "2019-01-01T03:00:00Z,25,29,13\n"
                 "2019-01-01T04:00:00Z,25,29,13\n");

  SUBCASE("two missing hours are filled linearly") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-01T00:00:00Z,1.0\n"
               "2019-01-01T01:00:00Z,2.0\n"
               "2019-01-01T04:00:00Z,5.0\n");
    RawDataset d = ingest_csv(gen_path.string(), price_path.string());
    REQUIRE(d.rows() == 5);
    CHECK(d.leaves(2, 0) == doctest::Approx(3.0));
    CHECK(d.leaves(3, 0) == doctest::Approx(4.0));
    CHECK_FALSE(d.interpolated[1]);
    CHECK(d.interpolated[2]);
    CHECK(d.interpolated[3]);
    CHECK_FALSE(d.interpolated[4]);
  }

  SUBCASE("gaps beyond the maximum abort") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-01T00:00:00Z,1.0\n"
               "2019-01-01T05:00:00Z,5.0\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }

  SUBCASE("off-grid timestamps abort") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-01T00:00:00Z,1.0\n"
               "2019-01-01T00:30:00Z,2.0\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }

  SUBCASE("non-increasing timestamps abort") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-01T01:00:00Z,1.0\n"
               "2019-01-01T01:00:00Z,2.0\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }
}

TEST_CASE("ingestion rejects bad data") {
  auto gen_path = tmp_file("bad_gen.csv");
  auto price_path = tmp_file("bad_price.csv");
  write_file(price_path, std::string(kPriceHeader) +
                             "2019-01-01T00:00:00Z,25,29,13\n"
                             "2019-01-01T01:00:00Z,25,29,13\n");

  SUBCASE("incoherent aggregate column") {
    write_file(gen_path,
               "timestamp,leaf_1,leaf_2,aggregate\n"
               "2019-01-01T00:00:00Z,1.0,2.0,9.0\n"
               "2019-01-01T01:00:00Z,1.0,2.0,3.0\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }

  SUBCASE("negative generation") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-01T00:00:00Z,-0.5\n"
               "2019-01-01T01:00:00Z,1.0\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }

  SUBCASE("bad price ordering") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-01T00:00:00Z,0.5\n"
               "2019-01-01T01:00:00Z,1.0\n");
    write_file(price_path, std::string(kPriceHeader) +
                               "2019-01-01T00:00:00Z,25,20,13\n"
                               "2019-01-01T01:00:00Z,25,29,13\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }

  SUBCASE("mismatched grids") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-02T00:00:00Z,0.5\n"
               "2019-01-02T01:00:00Z,1.0\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }

  SUBCASE("wrong leaf column names") {
    write_file(gen_path,
               "timestamp,gen_a\n"
               "2019-01-01T00:00:00Z,0.5\n"
               "2019-01-01T01:00:00Z,1.0\n");
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string()), DataError);
  }

  SUBCASE("capacity violation") {
    write_file(gen_path,
               "timestamp,leaf_1\n"
               "2019-01-01T00:00:00Z,5.0\n"
               "2019-01-01T01:00:00Z,1.0\n");
    IngestOptions opts;
    opts.capacities = Eigen::VectorXd::Constant(1, 2.0);
    CHECK_THROWS_AS(ingest_csv(gen_path.string(), price_path.string(), opts), DataError);
  }
}

TEST_CASE("record assembly wires forecasts, context, and split") {
  SyntheticSpec spec = small_spec();
  spec.hours = 500;
  RawDataset raw = synthesize(spec);

  RegressionSpec reg;
  reg.lags = {1, 2, 3, 24};
  std::vector<FittedForecaster> forecasters;
  // Aggregate first, then leaves; fit on the pre-test prefix only.
  ContextSpec ctx;
  ctx.penalty_lag_hours = 2;
  std::size_t boundary = train_boundary_index(raw, reg.lags, ctx, 1);

  std::vector<double> agg(raw.aggregate.data(), raw.aggregate.data() + raw.rows());
  reg.capacity = raw.capacities.sum();
  forecasters.push_back(fit_mean(std::span(agg).subspan(0, boundary), reg));
  for (int i = 0; i < raw.producers(); ++i) {
    std::vector<double> col(raw.rows());
    for (std::size_t r = 0; r < raw.rows(); ++r) col[r] = raw.leaves(static_cast<Eigen::Index>(r), i);
    reg.capacity = raw.capacities(i);
    forecasters.push_back(fit_mean(std::span(col).subspan(0, boundary), reg));
  }

  ExperimentDataset ds = build_records(raw, forecasters, ctx, 1);
  REQUIRE(ds.records.size() == raw.rows() - 24);
  CHECK(ds.hier.leaves() == 3);
  CHECK(ds.train_count == static_cast<std::size_t>(0.8 * static_cast<double>(ds.records.size())));
  CHECK(train_records(ds).size() + test_records(ds).size() == ds.records.size());

  // The record split lines up with the raw-series boundary used for fitting.
  CHECK(test_records(ds).front().time == raw.times[boundary]);

  const int m = raw.producers();
  for (const ForecastRecord& rec : ds.records) {
    REQUIRE(rec.base.size() == m + 1);
    REQUIRE(rec.actual.size() == m + 1);
    REQUIRE(rec.context.size() == 3 * (m + 1) + 2 * ctx.penalty_lag_hours);
    CHECK(ds.hier.is_coherent(rec.actual, 1e-9));
    CHECK(rec.base(0) >= 0.0);
    CHECK(rec.base(0) <= ds.aggregate_capacity);
    for (int i = 0; i < m; ++i) {
      CHECK(rec.base(1 + i) >= 0.0);
      CHECK(rec.base(1 + i) <= ds.capacities(i) + 1e-12);
    }
    CHECK_FALSE(rec.degenerate_hour);  // fixed prices
  }

  // Context layout: aggregate lags first, then leaves, then penalty pairs.
  std::size_t t0 = 24;  // raw index of the first record
  const ForecastRecord& rec = ds.records.front();
  CHECK(rec.context(0) == raw.aggregate(static_cast<Eigen::Index>(t0 - 1)));
  CHECK(rec.context(1) == raw.aggregate(static_cast<Eigen::Index>(t0 - 2)));
  CHECK(rec.context(2) == raw.aggregate(static_cast<Eigen::Index>(t0 - 3)));
  CHECK(rec.context(3) == raw.leaves(static_cast<Eigen::Index>(t0 - 1), 0));
  int pbase = 3 * (m + 1);
  Penalties p1 = penalties_from(raw.hours[t0 - 1]);
  CHECK(rec.context(pbase) == p1.surplus);
  CHECK(rec.context(pbase + 1) == p1.shortfall);
}

TEST_CASE("context validation blocks lookahead") {
  ContextSpec ctx;
  ctx.generation_lags = {1, 2};
  CHECK_THROWS_AS(validate(ctx, 2), ConfigError);  // lag 1 < lead 2
  CHECK_NOTHROW(validate(ctx, 1));
  ctx.penalty_lag_hours = -1;
  CHECK_THROWS_AS(validate(ctx, 1), ConfigError);
}

TEST_CASE("dataset summary mentions the essentials") {
  RawDataset d = synthesize(small_spec());
  std::string s = dataset_summary(d);
  CHECK(s.find("rows: 400") != std::string::npos);
  CHECK(s.find("producers: 3") != std::string::npos);
  CHECK(s.find("degenerate_hours: 0") != std::string::npos);
}
