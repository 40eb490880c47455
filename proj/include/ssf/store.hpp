#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssf/climatology.hpp"
#include "ssf/eof.hpp"
#include "ssf/features.hpp"
#include "ssf/field.hpp"
#include "ssf/pipeline.hpp"

namespace ssf {

/// On-disk layout:
///   fields/<name>.json|.f32      raw gridded variables
///   indices/<name>.csv           raw index series (any cadence)
///   preprocessed/                climatologies, target, anomaly, bases, PCs
///   features/<mode>.json|.f64    assembled global-scope datasets
///   reports/<run>/               skill reports

struct PreprocessParams {
  int ref_year_start = 0;  // 0 = all but the last two data years
  int ref_year_end = 0;
  int pool_window = 7;
  int eof_k = 10;
  double std_floor = 1e-6;
};

namespace store_detail {

inline std::string field_manifest(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / "fields" / (name + ".json")).string();
}

inline void save_pc_series(const PcSeries& s, const std::string& path) {
  namespace fs = std::filesystem;
  const auto payload_name = fs::path(path).stem().string() + ".f64";
  nlohmann::json j{{"variable", s.variable},
                   {"date_start", to_iso(s.date_start)},
                   {"n_dates", s.n_dates()},
                   {"k", static_cast<int>(s.pcs.cols())},
                   {"payload", payload_name}};
  const auto dir = fs::path(path).parent_path();
  fs::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(s.pcs.size()));
  for (int i = 0; i < s.n_dates(); ++i)
    for (int k = 0; k < s.pcs.cols(); ++k) payload.push_back(s.pcs(i, k));
  write_f64_payload((dir / payload_name).string(), payload);
}

inline PcSeries load_pc_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open PC series: " + path);
  nlohmann::json j;
  in >> j;
  PcSeries s;
  s.variable = j.at("variable").get<std::string>();
  s.date_start = parse_iso_date(j.at("date_start").get<std::string>());
  const int n = j.at("n_dates").get<int>();
  const int k = j.at("k").get<int>();
  const auto payload = read_f64_payload(
      (std::filesystem::path(path).parent_path() /
       j.at("payload").get<std::string>())
          .string());
  if (payload.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(k))
    throw DataError("PC payload length mismatch: " + path);
  s.pcs.resize(n, k);
  std::size_t at = 0;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) s.pcs(i, c) = payload[at++];
  return s;
}

}  // namespace store_detail

/// Fit climatologies, the target and recent-anomaly fields, one EOF basis
/// per variable, and daily PC/index series; everything lands under
/// preprocessed/.
inline void preprocess_store(const std::string& dir,
                             PreprocessParams params = {}) {
  namespace fs = std::filesystem;
  const auto pre = (fs::path(dir) / "preprocessed").string();
  fs::create_directories(pre);

  const GriddedField tmp2m =
      read_field(store_detail::field_manifest(dir, "tmp2m"));
  if (params.ref_year_start == 0) {
    params.ref_year_start = tmp2m.date_start.year;
    params.ref_year_end = tmp2m.date_end().year - 2;
    if (params.ref_year_end < params.ref_year_start)
      params.ref_year_end = params.ref_year_start;
  }

  const auto c14 =
      fit_target_climatology(tmp2m, params.ref_year_start, params.ref_year_end,
                             params.pool_window, params.std_floor);
  save_climatology(c14, pre, "c14_target");
  const auto crec =
      fit_recent_climatology(tmp2m, params.ref_year_start, params.ref_year_end,
                             params.pool_window, params.std_floor);
  save_climatology(crec, pre, "c14_recent");

  GriddedField y = two_week_target(tmp2m, c14);
  write_field(y, (fs::path(pre) / "target.json").string());
  GriddedField anom = recent_anomaly(tmp2m, crec);
  write_field(anom, (fs::path(pre) / "recent_anom.json").string());

  for (const char* name : kFieldNames) {
    const GriddedField f = read_field(store_detail::field_manifest(dir, name));
    const auto basis =
        fit_eof(f, params.ref_year_start, params.ref_year_end, params.eof_k);
    save_eof(basis, pre, std::string("eof_") + name);
    store_detail::save_pc_series(
        project_series(f, basis),
        (fs::path(pre) / (std::string("pc_") + name + ".json")).string());
  }

  // indices: interpolate to daily cadence over the tmp2m range
  for (const char* name : kIndexNames) {
    const auto raw = read_index_series(
        (fs::path(dir) / "indices" / (std::string(name) + ".csv")).string());
    bool daily = true;
    for (std::size_t i = 1; i < raw.size(); ++i)
      if (days_between(raw.dates[i - 1], raw.dates[i]) != 1) daily = false;
    IndexSeries series = daily ? raw : interp_daily(raw);
    series = extend_daily(series, tmp2m.date_start, tmp2m.date_end());
    series.name = name;
    write_index_series(series, (fs::path(pre) / "indices_daily" /
                                (std::string(name) + ".csv"))
                                   .string());
  }

  nlohmann::json meta{{"ref_year_start", params.ref_year_start},
                      {"ref_year_end", params.ref_year_end},
                      {"pool_window", params.pool_window},
                      {"eof_k", params.eof_k}};
  std::ofstream out((fs::path(pre) / "preprocess_meta.json").string());
  out << meta.dump(2) << "\n";
}

/// Assemble and persist the global-scope dataset for one sequence mode.
inline void featurize_store(const std::string& dir, Mode mode,
                            Scope scope = Scope::global, int scope_month = 0) {
  namespace fs = std::filesystem;
  const auto pre = fs::path(dir) / "preprocessed";
  std::vector<PcSeries> pcs;
  for (const char* name : kFieldNames)
    pcs.push_back(store_detail::load_pc_series(
        (pre / (std::string("pc_") + name + ".json")).string()));
  std::vector<IndexSeries> indices;
  for (const char* name : kIndexNames)
    indices.push_back(read_index_series(
        (pre / "indices_daily" / (std::string(name) + ".csv")).string()));
  const auto table = build_feature_table(pcs, indices);
  const GriddedField target = read_field((pre / "target.json").string());
  const GriddedField anom = read_field((pre / "recent_anom.json").string());

  // widest range with full schedule coverage and defined targets
  const Date lo = std::max(add_days(table.date_start, 2 * 366 + 28),
                           add_days(target.date_start, 14));
  const Date hi = add_days(target.date_start, target.n_dates - 1 - 28);
  const auto ds =
      assemble_dataset(table, target, anom, mode, scope, scope_month, lo, hi);
  const std::string stem =
      mode_name(mode) +
      (scope == Scope::local ? "_local" + std::to_string(scope_month) : "");
  save_dataset(ds, (fs::path(dir) / "features" / (stem + ".json")).string());
}

/// Load the bundle run_pipeline consumes: the global dataset for `mode` plus
/// the contiguous raw target history.
inline DataBundle load_bundle(const std::string& dir, Mode mode) {
  namespace fs = std::filesystem;
  DataBundle bundle;
  bundle.ds = load_dataset(
      (fs::path(dir) / "features" / (mode_name(mode) + ".json")).string());
  const GriddedField target =
      read_field((fs::path(dir) / "preprocessed" / "target.json").string());
  bundle.grid = target.grid;

  const auto cells = target.grid.target_cells();
  // y is defined from the first raw date until 28 days before the last
  int n_hist = target.n_dates - 28;
  if (n_hist < 1) throw DataError("target history is empty");
  bundle.history.start = target.date_start;
  bundle.history.Y.resize(n_hist, static_cast<Eigen::Index>(cells.size()));
  for (int t = 0; t < n_hist; ++t)
    for (std::size_t g = 0; g < cells.size(); ++g) {
      if (target.is_missing(t, cells[g]))
        throw DataError("target history has a gap at " + to_iso(target.date_at(t)));
      bundle.history.Y(t, static_cast<Eigen::Index>(g)) = target.at(t, cells[g]);
    }
  return bundle;
}

}  // namespace ssf
