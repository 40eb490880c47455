#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssf/eof.hpp"
#include "ssf/field.hpp"
#include "ssf/timegrid.hpp"

namespace ssf {

inline constexpr std::array<const char*, 8> kFieldNames = {
    "tmp2m", "sm", "sst_pacific", "sst_atlantic",
    "rhum",  "slp", "hgt10",       "hgt500"};

inline constexpr std::array<const char*, 8> kIndexNames = {
    "mei", "nino12", "nino3", "nino34", "nino4", "nao", "mjo_phase",
    "mjo_amplitude"};

inline constexpr int kPcPerField = 10;
inline constexpr int kFeatureWidth = 88;  // 8 fields x 10 PCs + 8 indices

enum class Mode { one_day, four_days, all_days };

inline int mode_steps(Mode m) {
  switch (m) {
    case Mode::one_day: return 1;
    case Mode::four_days: return 4;
    case Mode::all_days: return 18;
  }
  return 0;
}

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::one_day: return "one_day";
    case Mode::four_days: return "four_days";
    case Mode::all_days: return "all_days";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "one_day") return Mode::one_day;
  if (s == "four_days") return Mode::four_days;
  if (s == "all_days") return Mode::all_days;
  throw DataError("unknown mode: " + s);
}

/// The 18-date history for a target date t: {t, t-7, t-14, t-28} plus, for
/// the same day-of-year in each of the previous two years, that date and its
/// +/-7, +/-14, +/-28 day neighbours. Sorted ascending; t is last.
inline std::vector<Date> lag_schedule(const Date& t) {
  std::vector<Date> out;
  out.reserve(18);
  for (int back = 2; back >= 1; --back) {
    const Date s = same_doy_in_year(t, t.year - back);
    for (int off : {-28, -14, -7, 0, 7, 14, 28}) out.push_back(add_days(s, off));
  }
  for (int off : {-28, -14, -7, 0}) out.push_back(add_days(t, off));
  for (std::size_t i = 1; i < out.size(); ++i)
    if (!(out[i - 1] < out[i]))
      throw NumericError("lag_schedule produced a non-increasing date pair");
  return out;
}

/// Schedule restricted to the sequence-length mode.
inline std::vector<Date> schedule_for_mode(const Date& t, Mode mode) {
  switch (mode) {
    case Mode::one_day:
      return {t};
    case Mode::four_days:
      return {add_days(t, -28), add_days(t, -14), add_days(t, -7), t};
    case Mode::all_days:
      return lag_schedule(t);
  }
  return {};
}

/// Stable labels for the 18 schedule slots, ascending like the schedule.
inline std::vector<std::string> slot_labels(Mode mode) {
  switch (mode) {
    case Mode::one_day:
      return {"y0"};
    case Mode::four_days:
      return {"y0_m28", "y0_m14", "y0_m7", "y0"};
    case Mode::all_days: {
      std::vector<std::string> out;
      for (int back = 2; back >= 1; --back)
        for (const char* off : {"_m28", "_m14", "_m7", "", "_p7", "_p14", "_p28"})
          out.push_back("y" + std::to_string(back) + off);
      for (const char* off : {"_m28", "_m14", "_m7", ""})
        out.push_back(std::string("y0") + off);
      return out;
    }
  }
  return {};
}

/// One-day feature block column names: 80 PC columns then 8 index columns.
inline std::vector<std::string> base_column_names() {
  std::vector<std::string> out;
  out.reserve(kFeatureWidth);
  for (const char* v : kFieldNames)
    for (int k = 1; k <= kPcPerField; ++k)
      out.push_back(std::string(v) + "_pc" + std::to_string(k));
  for (const char* ix : kIndexNames) out.push_back(ix);
  return out;
}

/// PC projections of one variable over a daily date range.
struct PcSeries {
  std::string variable;
  Date date_start;
  Eigen::MatrixXd pcs;  // n_dates x k

  int n_dates() const { return static_cast<int>(pcs.rows()); }
};

inline PcSeries project_series(const GriddedField& f, const EofBasis& basis) {
  PcSeries s;
  s.variable = f.name;
  s.date_start = f.date_start;
  s.pcs = project_all(f, basis);
  return s;
}

/// Per-date one-day feature rows for the whole data range: the 8x10 PC block
/// followed by the 8 index values, in the declared order.
struct FeatureTable {
  Date date_start;
  int n_dates = 0;
  Eigen::MatrixXd base;  // n_dates x 88
  std::vector<std::string> columns = base_column_names();

  bool covers(const Date& d) const {
    const auto off = days_between(date_start, d);
    return off >= 0 && off < n_dates;
  }
  int row_of(const Date& d) const {
    const auto off = days_between(date_start, d);
    if (off < 0 || off >= n_dates)
      throw DataError("feature table does not cover " + to_iso(d));
    return static_cast<int>(off);
  }
};

/// Assemble the per-date table from 8 PC series and 8 daily index series
/// (declared order). The range is the intersection of all inputs.
inline FeatureTable build_feature_table(const std::vector<PcSeries>& pcs,
                                        const std::vector<IndexSeries>& indices) {
  if (pcs.size() != kFieldNames.size())
    throw DataError("build_feature_table expects 8 PC series");
  if (indices.size() != kIndexNames.size())
    throw DataError("build_feature_table expects 8 index series");
  for (std::size_t i = 0; i < pcs.size(); ++i) {
    if (pcs[i].variable != kFieldNames[i])
      throw DataError("PC series out of order: expected " +
                      std::string(kFieldNames[i]) + ", got " + pcs[i].variable);
    if (pcs[i].pcs.cols() != kPcPerField)
      throw DataError("PC series must hold 10 components per variable");
  }

  auto start = serial_day(pcs[0].date_start);
  auto end = start + pcs[0].n_dates() - 1;
  for (const auto& s : pcs) {
    start = std::max(start, serial_day(s.date_start));
    end = std::min(end, serial_day(s.date_start) + s.n_dates() - 1);
  }
  for (const auto& ix : indices) {
    if (ix.size() < 2) throw DataError("index series too short: " + ix.name);
    for (std::size_t i = 1; i < ix.size(); ++i)
      if (days_between(ix.dates[i - 1], ix.dates[i]) != 1)
        throw DataError("index series not daily: " + ix.name);
    start = std::max(start, serial_day(ix.dates.front()));
    end = std::min(end, serial_day(ix.dates.back()));
  }
  if (end < start) throw DataError("feature inputs have no common date range");

  FeatureTable t;
  t.date_start = date_from_serial(start);
  t.n_dates = static_cast<int>(end - start + 1);
  t.base.resize(t.n_dates, kFeatureWidth);
  for (int d = 0; d < t.n_dates; ++d) {
    int col = 0;
    for (const auto& s : pcs) {
      const auto row = serial_day(t.date_start) + d - serial_day(s.date_start);
      t.base.block(d, col, 1, kPcPerField) =
          s.pcs.row(static_cast<Eigen::Index>(row));
      col += kPcPerField;
    }
    for (const auto& ix : indices) {
      const auto row =
          serial_day(t.date_start) + d - serial_day(ix.dates.front());
      t.base(d, col++) = ix.values[static_cast<std::size_t>(row)];
    }
  }
  return t;
}

/// Feature matrix plus target vector for one forecast date.
struct SequenceSample {
  Date target_date;
  Eigen::MatrixXd features;  // H x 88, schedule ascending, t last
  Eigen::VectorXd target;    // G
};

inline Eigen::MatrixXd sample_features(const FeatureTable& table, const Date& t,
                                       Mode mode) {
  const auto sched = schedule_for_mode(t, mode);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(sched.size()), kFeatureWidth);
  for (std::size_t i = 0; i < sched.size(); ++i) {
    if (!table.covers(sched[i]))
      throw DataError("schedule date " + to_iso(sched[i]) +
                      " not covered by the feature table");
    out.row(static_cast<Eigen::Index>(i)) = table.base.row(table.row_of(sched[i]));
  }
  return out;
}

enum class Scope { global, local };

inline Scope parse_scope(const std::string& s) {
  if (s == "global") return Scope::global;
  if (s == "local") return Scope::local;
  throw DataError("unknown scope: " + s);
}

/// Months within +/-2 calendar months (circular) of the test month.
inline bool month_in_local_scope(int month, int test_month) {
  int diff = std::abs(month - test_month);
  diff = std::min(diff, 12 - diff);
  return diff <= 2;
}

/// Flattened per-date dataset: row t = the schedule blocks of date t laid out
/// slot-major (earliest slot first; within a slot 80 PCs then 8 indices).
struct Dataset {
  Mode mode = Mode::one_day;
  std::vector<Date> dates;
  std::vector<std::string> columns;  // H * 88
  Eigen::MatrixXd X;                 // n x (H*88)
  Eigen::MatrixXd Y;                 // n x G
  Eigen::MatrixXd recent_anom;       // n x G
  std::vector<int> target_cells;     // grid cells behind Y's columns

  int n() const { return static_cast<int>(dates.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  int g() const { return static_cast<int>(Y.cols()); }

  /// Column positions of the date-t index block (the last slot's tail).
  std::vector<int> index_columns_at_t() const {
    std::vector<int> out;
    const int base = (mode_steps(mode) - 1) * kFeatureWidth;
    for (int i = 0; i < 8; ++i) out.push_back(base + 80 + i);
    return out;
  }

  /// True for columns holding PC features (anything except index columns).
  std::vector<std::uint8_t> pc_column_mask() const {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(p()), 1);
    for (int s = 0; s < mode_steps(mode); ++s)
      for (int i = 0; i < 8; ++i)
        mask[static_cast<std::size_t>(s * kFeatureWidth + 80 + i)] = 0;
    return mask;
  }
};

inline std::vector<std::string> dataset_columns(Mode mode) {
  const auto slots = slot_labels(mode);
  const auto base = base_column_names();
  std::vector<std::string> out;
  out.reserve(slots.size() * base.size());
  for (const auto& s : slots)
    for (const auto& b : base) out.push_back(s + ":" + b);
  return out;
}

/// Build the dataset over [range_start, range_end]. A date enters when its
/// full 18-lag schedule is covered and the target and recent anomaly are
/// defined at every target cell, so all modes share identical rows.
inline Dataset assemble_dataset(const FeatureTable& table,
                                const GriddedField& target,
                                const GriddedField& recent_anom, Mode mode,
                                Scope scope, int scope_month,
                                const Date& range_start, const Date& range_end) {
  if (!(range_start <= range_end))
    throw DataError("assemble_dataset: empty date range");
  Dataset ds;
  ds.mode = mode;
  ds.columns = dataset_columns(mode);
  ds.target_cells = target.grid.target_cells();
  const int G = static_cast<int>(ds.target_cells.size());
  const int H = mode_steps(mode);

  std::vector<Date> dates;
  for (auto d = serial_day(range_start); d <= serial_day(range_end); ++d) {
    const Date t = date_from_serial(d);
    if (scope == Scope::local && !month_in_local_scope(t.month, scope_month))
      continue;
    const auto sched = lag_schedule(t);
    if (!table.covers(sched.front()) || !table.covers(sched.back())) continue;
    bool ok = true;
    for (const auto& s : sched)
      if (!table.covers(s)) {
        ok = false;
        break;
      }
    if (!ok) continue;
    if (!target.covers(t) || !recent_anom.covers(t)) continue;
    const int ty = target.date_index(t);
    const int ta = recent_anom.date_index(t);
    for (int cell : ds.target_cells) {
      if (target.is_missing(ty, cell) || recent_anom.is_missing(ta, cell)) {
        ok = false;
        break;
      }
    }
    if (ok) dates.push_back(t);
  }
  if (dates.empty()) throw DataError("assemble_dataset: no valid dates in range");

  ds.dates = dates;
  const int n = static_cast<int>(dates.size());
  ds.X.resize(n, H * kFeatureWidth);
  ds.Y.resize(n, G);
  ds.recent_anom.resize(n, G);
  for (int i = 0; i < n; ++i) {
    const auto feats = sample_features(table, dates[i], mode);
    for (int s = 0; s < H; ++s)
      ds.X.block(i, s * kFeatureWidth, 1, kFeatureWidth) = feats.row(s);
    const int ty = target.date_index(dates[i]);
    const int ta = recent_anom.date_index(dates[i]);
    for (int gi = 0; gi < G; ++gi) {
      ds.Y(i, gi) = target.at(ty, ds.target_cells[static_cast<std::size_t>(gi)]);
      ds.recent_anom(i, gi) =
          recent_anom.at(ta, ds.target_cells[static_cast<std::size_t>(gi)]);
    }
  }
  return ds;
}

inline SequenceSample build_sample(const FeatureTable& table,
                                   const GriddedField& target, const Date& t,
                                   Mode mode) {
  SequenceSample s;
  s.target_date = t;
  s.features = sample_features(table, t, mode);
  const auto cells = target.grid.target_cells();
  s.target.resize(static_cast<Eigen::Index>(cells.size()));
  const int ty = target.date_index(t);
  for (std::size_t gi = 0; gi < cells.size(); ++gi) {
    if (target.is_missing(ty, cells[gi]))
      throw DataError("target missing at " + to_iso(t));
    s.target(static_cast<Eigen::Index>(gi)) = target.at(ty, cells[gi]);
  }
  if (!s.features.allFinite() || !s.target.allFinite())
    throw NumericError("non-finite entries in sample at " + to_iso(t));
  return s;
}

// --- split plans ---

struct DateRange {
  Date start;
  Date end;
  bool contains(const Date& d) const { return start <= d && d <= end; }
};

struct Fold {
  DateRange train;
  std::vector<Date> validation_dates;
};

/// Leakage-safe monthly evaluation plan: weekly test dates inside one test
/// month, a long final training range, and 5 sliding train/validation folds
/// anchored on the same calendar month of the preceding years.
struct SplitPlan {
  int test_year = 0;
  int test_month = 0;
  std::vector<Date> test_dates;
  DateRange final_train;
  std::vector<Fold> folds;
};

struct PlanParams {
  int n_folds = 5;
  int fold_train_years = 10;
  int final_train_years = 30;
  int test_step_days = 7;
  /// Weekly anchor for the test cadence; the first day of the test month
  /// when unset (kept global across a multi-month campaign).
  std::optional<Date> cadence_anchor;
  int min_train_days = 365;
};

inline std::vector<Date> dates_in_month_on_cadence(int year, int month,
                                                   const Date& anchor,
                                                   int step_days) {
  const Date first{year, month, 1};
  const Date last = add_days(Date{year, month, days_in_month(year, month)}, 0);
  const auto a = serial_day(anchor);
  auto d = a;
  if (d < serial_day(first))
    d += ((serial_day(first) - d + step_days - 1) / step_days) * step_days;
  std::vector<Date> out;
  for (; d <= serial_day(last); d += step_days)
    if (d >= serial_day(first)) out.push_back(date_from_serial(d));
  return out;
}

/// Dependence horizon of a training target: its raw window closes 28 days
/// after the target date, so evaluation may start 28 days past train end.
inline constexpr int kTrainEvalGapDays = 28;

inline SplitPlan make_split_plan(int test_year, int test_month,
                                 const Date& data_start,
                                 const PlanParams& params = {}) {
  SplitPlan plan;
  plan.test_year = test_year;
  plan.test_month = test_month;
  const Date anchor =
      params.cadence_anchor.value_or(Date{test_year, test_month, 1});
  plan.test_dates = dates_in_month_on_cadence(test_year, test_month, anchor,
                                              params.test_step_days);
  if (plan.test_dates.empty())
    throw DataError("split plan has no test dates in month " +
                    std::to_string(test_month));

  const Date first_test = plan.test_dates.front();
  plan.final_train.end = add_days(first_test, -kTrainEvalGapDays);
  const Date want_start = same_doy_in_year(
      plan.final_train.end, plan.final_train.end.year - params.final_train_years);
  plan.final_train.start = std::max(data_start, want_start);
  if (days_between(plan.final_train.start, plan.final_train.end) <
      params.min_train_days)
    throw DataError("insufficient history before " + to_iso(first_test));

  for (int i = 1; i <= params.n_folds; ++i) {
    Fold fold;
    fold.validation_dates = dates_in_month_on_cadence(
        test_year - i, test_month, Date{test_year - i, test_month, 1},
        params.test_step_days);
    const Date first_val = fold.validation_dates.front();
    fold.train.end = add_days(first_val, -kTrainEvalGapDays);
    const Date fold_want = same_doy_in_year(
        fold.train.end, fold.train.end.year - params.fold_train_years);
    fold.train.start = std::max(data_start, fold_want);
    if (days_between(fold.train.start, fold.train.end) < params.min_train_days)
      throw DataError("insufficient history for fold " + std::to_string(i) +
                      " of test month " + to_iso(first_test));
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

/// All monthly plans covering n_months starting at (year0, month0), sharing
/// one weekly cadence anchored at the campaign's first day.
inline std::vector<SplitPlan> make_campaign(int year0, int month0, int n_months,
                                            const Date& data_start,
                                            PlanParams params = {}) {
  if (!params.cadence_anchor) params.cadence_anchor = Date{year0, month0, 1};
  std::vector<SplitPlan> plans;
  int y = year0, m = month0;
  for (int i = 0; i < n_months; ++i) {
    plans.push_back(make_split_plan(y, m, data_start, params));
    if (++m > 12) {
      m = 1;
      ++y;
    }
  }
  return plans;
}

/// Number of (train, eval) pairs whose gap is under 28 days. Zero for every
/// plan this module produces.
inline int count_leakage_violations(const SplitPlan& plan) {
  int bad = 0;
  auto check = [&](const DateRange& train, const std::vector<Date>& eval) {
    if (eval.empty() || !(train.start <= train.end)) {
      ++bad;
      return;
    }
    if (days_between(train.end, eval.front()) < kTrainEvalGapDays) ++bad;
    for (const Date& d : eval)
      if (d <= train.end) ++bad;
  };
  check(plan.final_train, plan.test_dates);
  for (const auto& f : plan.folds) check(f.train, f.validation_dates);
  return bad;
}

/// Per-column standardisation fitted on training rows; index columns pass
/// through untouched.
struct ColumnScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::vector<std::uint8_t> scaled;  // per column

  static ColumnScaler fit(const Eigen::MatrixXd& X,
                          const std::vector<int>& rows,
                          const std::vector<std::uint8_t>& pc_mask) {
    ColumnScaler s;
    const auto p = X.cols();
    s.mean = Eigen::VectorXd::Zero(p);
    s.scale = Eigen::VectorXd::Ones(p);
    s.scaled.assign(static_cast<std::size_t>(p), 0);
    if (rows.empty()) throw DataError("ColumnScaler: no training rows");
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!pc_mask[static_cast<std::size_t>(j)]) continue;
      double m = 0;
      for (int r : rows) m += X(r, j);
      m /= static_cast<double>(rows.size());
      double ss = 0;
      for (int r : rows) ss += (X(r, j) - m) * (X(r, j) - m);
      const double sd = rows.size() > 1
                            ? std::sqrt(ss / static_cast<double>(rows.size() - 1))
                            : 0.0;
      s.mean(j) = m;
      s.scale(j) = sd > 1e-12 ? sd : 1.0;
      s.scaled[static_cast<std::size_t>(j)] = 1;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X,
                        const std::vector<int>& rows) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (!scaled[static_cast<std::size_t>(j)]) continue;
      out.col(j) = (out.col(j).array() - mean(j)) / scale(j);
    }
    return out;
  }
};

// --- dataset persistence: JSON header + float64 payload ---

inline void save_dataset(const Dataset& ds, const std::string& header_path) {
  namespace fs = std::filesystem;
  const auto payload_name = fs::path(header_path).stem().string() + ".f64";
  nlohmann::json j{{"mode", mode_name(ds.mode)},
                   {"columns", ds.columns},
                   {"target_cells", ds.target_cells},
                   {"n", ds.n()},
                   {"p", ds.p()},
                   {"g", ds.g()},
                   {"payload", payload_name}};
  std::vector<std::string> dates;
  dates.reserve(ds.dates.size());
  for (const auto& d : ds.dates) dates.push_back(to_iso(d));
  j["dates"] = dates;
  const auto dir = fs::path(header_path).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::ofstream out(header_path);
  if (!out) throw DataError("cannot open for writing: " + header_path);
  out << j.dump(2) << "\n";

  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(ds.n()) *
                  static_cast<std::size_t>(ds.p() + 2 * ds.g()));
  for (int i = 0; i < ds.n(); ++i) {
    for (int c = 0; c < ds.p(); ++c) payload.push_back(ds.X(i, c));
    for (int c = 0; c < ds.g(); ++c) payload.push_back(ds.Y(i, c));
    for (int c = 0; c < ds.g(); ++c) payload.push_back(ds.recent_anom(i, c));
  }
  write_f64_payload((dir / payload_name).string(), payload);
}

inline Dataset load_dataset(const std::string& header_path) {
  std::ifstream in(header_path);
  if (!in) throw DataError("cannot open dataset header: " + header_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("unparseable dataset header: " + std::string(e.what()));
  }
  Dataset ds;
  ds.mode = parse_mode(j.at("mode").get<std::string>());
  ds.columns = j.at("columns").get<std::vector<std::string>>();
  ds.target_cells = j.at("target_cells").get<std::vector<int>>();
  const int n = j.at("n").get<int>();
  const int p = j.at("p").get<int>();
  const int g = j.at("g").get<int>();
  for (const auto& s : j.at("dates").get<std::vector<std::string>>())
    ds.dates.push_back(parse_iso_date(s));
  const auto payload_path =
      (std::filesystem::path(header_path).parent_path() /
       j.at("payload").get<std::string>())
          .string();
  const auto payload = read_f64_payload(payload_path);
  const std::size_t expected = static_cast<std::size_t>(n) *
                               static_cast<std::size_t>(p + 2 * g);
  if (payload.size() != expected || ds.dates.size() != static_cast<std::size_t>(n))
    throw DataError("dataset payload length mismatch: " + header_path);
  ds.X.resize(n, p);
  ds.Y.resize(n, g);
  ds.recent_anom.resize(n, g);
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < p; ++c) ds.X(i, c) = payload[k++];
    for (int c = 0; c < g; ++c) ds.Y(i, c) = payload[k++];
    for (int c = 0; c < g; ++c) ds.recent_anom(i, c) = payload[k++];
  }
  return ds;
}

}  // namespace ssf
