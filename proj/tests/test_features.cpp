#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <set>

#include "ssf/features.hpp"
#include "ssf/util.hpp"

using namespace ssf;

namespace {

LatLonGrid tiny_grid() {
  LatLonGrid g;
  g.lat_start = 30;
  g.lat_step = 2;
  g.n_lat = 2;
  g.lon_start = -100;
  g.lon_step = 2;
  g.n_lon = 2;
  return g;
}

// Feature table + targets with deterministic pseudo-random content covering
// [start, start + n_days).
struct Fixture {
  FeatureTable table;
  GriddedField target;
  GriddedField anom;
};

Fixture make_fixture(Date start, int n_days, std::uint64_t seed = 5) {
  Rng rng(seed);
  std::vector<PcSeries> pcs;
  for (const char* name : kFieldNames) {
    PcSeries s;
    s.variable = name;
    s.date_start = start;
    s.pcs.resize(n_days, kPcPerField);
    for (int i = 0; i < n_days; ++i)
      for (int k = 0; k < kPcPerField; ++k) s.pcs(i, k) = rng.normal();
    pcs.push_back(std::move(s));
  }
  std::vector<IndexSeries> idx;
  for (const char* name : kIndexNames) {
    IndexSeries s;
    s.name = name;
    for (int i = 0; i < n_days; ++i) {
      s.dates.push_back(add_days(start, i));
      s.values.push_back(rng.normal());
    }
    idx.push_back(std::move(s));
  }
  Fixture f;
  f.table = build_feature_table(pcs, idx);
  f.target = GriddedField::zeros("y", tiny_grid(), start, n_days);
  f.anom = GriddedField::zeros("recent_anomaly", tiny_grid(), start, n_days);
  for (int t = 0; t < n_days; ++t)
    for (int c = 0; c < 4; ++c) {
      f.target.set(t, c, rng.normal());
      f.anom.set(t, c, rng.normal());
    }
  return f;
}

}  // namespace

TEST_CASE("lag_schedule matches the documented 18-date pattern") {
  const auto sched = lag_schedule(Date{2018, 3, 1});
  REQUIRE(sched.size() == 18);
  const std::set<Date> s(sched.begin(), sched.end());
  CHECK(s.count(Date{2018, 2, 1}) == 1);   // t - 28
  CHECK(s.count(Date{2017, 3, 8}) == 1);   // same doy last year + 7
  CHECK(s.count(Date{2016, 2, 16}) == 1);  // same doy 2 years ago - 14
  CHECK(s.count(Date{2018, 3, 1}) == 1);   // t itself
  CHECK(sched.back() == Date{2018, 3, 1});
  CHECK(sched.front() == add_days(same_doy_in_year(Date{2018, 3, 1}, 2016), -28));
}

TEST_CASE("lag_schedule cardinality and ordering over random dates") {
  Rng rng(1);
  for (int it = 0; it < 1000; ++it) {
    const Date t = add_days(Date{1990, 1, 1},
                            static_cast<std::int64_t>(rng.uniform_index(15000)));
    const auto sched = lag_schedule(t);
    REQUIRE(sched.size() == 18);
    std::set<Date> uniq(sched.begin(), sched.end());
    CHECK(uniq.size() == 18);  // duplicates forbidden
    CHECK(sched.back() == t);  // max date is t
    for (const auto& d : sched) CHECK(d <= t);
    CHECK(sched.front() == add_days(same_doy_in_year(t, t.year - 2), -28));
  }
}

TEST_CASE("mode schedules") {
  const Date t{2018, 3, 1};
  CHECK(schedule_for_mode(t, Mode::one_day) == std::vector<Date>{t});
  CHECK(schedule_for_mode(t, Mode::four_days) ==
        std::vector<Date>{Date{2018, 2, 1}, Date{2018, 2, 15}, Date{2018, 2, 22}, t});
  CHECK(schedule_for_mode(t, Mode::all_days) == lag_schedule(t));
}

TEST_CASE("sample shapes and determinism") {
  const auto fx = make_fixture(Date{2010, 1, 1}, 365 * 4);
  const Date t{2013, 6, 15};

  const auto one = sample_features(fx.table, t, Mode::one_day);
  CHECK(one.rows() == 1);
  CHECK(one.cols() == 88);

  const auto all = sample_features(fx.table, t, Mode::all_days);
  CHECK(all.rows() == 18);
  CHECK(all.cols() == 88);

  // identical inputs give identical samples
  const auto again = sample_features(fx.table, t, Mode::all_days);
  CHECK((all - again).cwiseAbs().maxCoeff() == 0.0);

  // last row of all_days equals the one_day block
  CHECK((all.row(17) - one.row(0)).cwiseAbs().maxCoeff() == 0.0);

  SECTION("uncovered schedule dates raise") {
    CHECK_THROWS_AS(sample_features(fx.table, Date{2011, 1, 1}, Mode::all_days),
                    DataError);
  }

  SECTION("build_sample carries the target vector") {
    const auto s = build_sample(fx.table, fx.target, t, Mode::all_days);
    CHECK(s.features.rows() == 18);
    CHECK(s.target.size() == 4);
  }
}

TEST_CASE("local scope admits only months within two of the test month") {
  CHECK(month_in_local_scope(4, 6));
  CHECK(month_in_local_scope(8, 6));
  CHECK_FALSE(month_in_local_scope(3, 6));
  CHECK_FALSE(month_in_local_scope(9, 6));
  // circular wrap: November is within two months of January
  CHECK(month_in_local_scope(11, 1));
  CHECK(month_in_local_scope(12, 1));
  CHECK_FALSE(month_in_local_scope(10, 1));
}

TEST_CASE("assemble_dataset") {
  const auto fx = make_fixture(Date{2008, 1, 1}, 365 * 6 + 2);

  const Date lo{2010, 2, 10};  // full 18-lag history fits the data range
  const Date hi{2013, 12, 1};
  const auto global = assemble_dataset(fx.table, fx.target, fx.anom,
                                       Mode::one_day, Scope::global, 0, lo, hi);

  SECTION("global admits every schedule-covered date in range") {
    // valid dates start two years + 28 days into the data
    CHECK(global.dates.front() == lo);
    CHECK(global.dates.back() == hi);
    CHECK(global.p() == 88);
    CHECK(global.g() == 4);
  }

  SECTION("local(June) admits only April..August") {
    const auto local = assemble_dataset(fx.table, fx.target, fx.anom,
                                        Mode::one_day, Scope::local, 6, lo, hi);
    for (const auto& d : local.dates) {
      CHECK(d.month >= 4);
      CHECK(d.month <= 8);
    }
    // subset of the global scope
    std::set<Date> g(global.dates.begin(), global.dates.end());
    for (const auto& d : local.dates) CHECK(g.count(d) == 1);

    // union over all test months covers the global scope exactly
    std::set<Date> uni;
    for (int m = 1; m <= 12; ++m) {
      const auto lm = assemble_dataset(fx.table, fx.target, fx.anom,
                                       Mode::one_day, Scope::local, m, lo, hi);
      uni.insert(lm.dates.begin(), lm.dates.end());
    }
    CHECK(uni == g);
  }

  SECTION("all_days flattens slot-major with t last") {
    const auto all = assemble_dataset(fx.table, fx.target, fx.anom,
                                      Mode::all_days, Scope::global, 0, lo, hi);
    CHECK(all.p() == 18 * 88);
    CHECK(all.dates == global.dates);  // identical rows across modes
    // last slot equals the one_day block
    const Eigen::MatrixXd tail = all.X.rightCols(88);
    CHECK((tail - global.X).cwiseAbs().maxCoeff() == 0.0);
    // index columns sit at the tail of the last slot
    const auto ix = all.index_columns_at_t();
    REQUIRE(ix.size() == 8);
    CHECK(ix.front() == 17 * 88 + 80);
    const auto mask = all.pc_column_mask();
    CHECK(mask[static_cast<std::size_t>(ix.front())] == 0);
    CHECK(mask[0] == 1);
  }

  SECTION("empty result raises") {
    CHECK_THROWS_AS(
        assemble_dataset(fx.table, fx.target, fx.anom, Mode::one_day,
                         Scope::global, 0, Date{2008, 1, 2}, Date{2008, 1, 3}),
        DataError);
  }
}

TEST_CASE("dataset persistence round-trips bit-exactly") {
  const auto fx = make_fixture(Date{2008, 1, 1}, 365 * 4);
  const auto ds = assemble_dataset(fx.table, fx.target, fx.anom, Mode::four_days,
                                   Scope::global, 0, Date{2010, 2, 10},
                                   Date{2011, 2, 10});
  const auto dir = std::filesystem::temp_directory_path() / "ssf_ds_test";
  std::filesystem::create_directories(dir);
  const auto header = (dir / "ds.json").string();
  save_dataset(ds, header);
  const auto back = load_dataset(header);
  CHECK(back.mode == ds.mode);
  CHECK(back.dates == ds.dates);
  CHECK(back.columns == ds.columns);
  CHECK(back.X == ds.X);
  CHECK(back.Y == ds.Y);
  CHECK(back.recent_anom == ds.recent_anom);
  std::filesystem::remove_all(dir);
}

TEST_CASE("split plan reproduces the documented anchors") {
  const Date data_start{1986, 1, 1};
  const auto plan = make_split_plan(2017, 1, data_start);

  CHECK(plan.test_dates.front() == Date{2017, 1, 1});
  CHECK(plan.final_train.end == Date{2016, 12, 4});
  CHECK(plan.final_train.start == Date{1986, 12, 4});

  // fold 1 validates on Jan 2016 and trains Dec 4 2005 .. Dec 4 2015
  REQUIRE(plan.folds.size() == 5);
  CHECK(plan.folds[0].validation_dates.front() == Date{2016, 1, 1});
  CHECK(plan.folds[0].train.end == Date{2015, 12, 4});
  CHECK(plan.folds[0].train.start == Date{2005, 12, 4});
  // folds walk back one year at a time
  CHECK(plan.folds[4].validation_dates.front() == Date{2012, 1, 1});

  CHECK(count_leakage_violations(plan) == 0);
}

TEST_CASE("24 monthly plans over two years cover 105 weekly test dates") {
  const auto plans = make_campaign(2017, 1, 24, Date{1986, 1, 1});
  REQUIRE(plans.size() == 24);
  std::size_t total = 0;
  std::set<Date> all;
  for (const auto& p : plans) {
    total += p.test_dates.size();
    all.insert(p.test_dates.begin(), p.test_dates.end());
    for (const auto& d : p.test_dates) {
      CHECK(d.year == p.test_year);
      CHECK(d.month == p.test_month);
    }
  }
  CHECK(total == 105);
  CHECK(all.size() == 105);
  // consecutive campaign dates are exactly 7 days apart
  Date prev = *all.begin();
  for (auto it = std::next(all.begin()); it != all.end(); ++it) {
    CHECK(days_between(prev, *it) == 7);
    prev = *it;
  }
}

TEST_CASE("randomized plans never leak") {
  Rng rng(99);
  for (int it = 0; it < 300; ++it) {
    const int year = 2000 + static_cast<int>(rng.uniform_index(20));
    const int month = 1 + static_cast<int>(rng.uniform_index(12));
    const Date data_start =
        add_days(Date{year - 16, 1, 1},
                 static_cast<std::int64_t>(rng.uniform_index(300)));
    PlanParams params;
    params.test_step_days = 3 + static_cast<int>(rng.uniform_index(9));
    if (rng.uniform() < 0.5)
      params.cadence_anchor =
          add_days(Date{year, 1, 1},
                   -static_cast<std::int64_t>(rng.uniform_index(200)));
    const auto plan = make_split_plan(year, month, data_start, params);
    CHECK(count_leakage_violations(plan) == 0);
    // paired invariant: every train range ends >= 28 days before its eval set
    CHECK(days_between(plan.final_train.end, plan.test_dates.front()) >= 28);
    for (const auto& f : plan.folds) {
      CHECK(days_between(f.train.end, f.validation_dates.front()) >= 28);
      // fold validation month matches the test month in earlier years
      CHECK(f.validation_dates.front().month == month);
    }
  }
}

TEST_CASE("insufficient history raises") {
  CHECK_THROWS_AS(make_split_plan(2017, 1, Date{2016, 6, 1}), DataError);
}

TEST_CASE("column scaler standardises PC columns and passes indices through") {
  Eigen::MatrixXd X(6, 3);
  X << 1, 10, 5, 2, 20, 5, 3, 30, 5, 4, 40, 5, 5, 50, 5, 6, 60, 5;
  const std::vector<std::uint8_t> pc_mask{1, 0, 1};  // column 1 is an index
  const std::vector<int> rows{0, 1, 2, 3, 4, 5};
  const auto scaler = ColumnScaler::fit(X, rows, pc_mask);
  const auto Z = scaler.apply(X, rows);

  // scaled column: mean 0, sample std 1
  CHECK(Z.col(0).mean() == Catch::Approx(0.0).margin(1e-12));
  const double sd = std::sqrt(Z.col(0).squaredNorm() / 5.0);
  CHECK(sd == Catch::Approx(1.0));
  // index column untouched
  CHECK((Z.col(1) - X.col(1)).cwiseAbs().maxCoeff() == 0.0);
  // zero-variance PC column centres to zero without blowing up
  CHECK(Z.col(2).cwiseAbs().maxCoeff() == Catch::Approx(0.0).margin(1e-12));
}
