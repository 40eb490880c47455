#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssf/timegrid.hpp"
#include "ssf/util.hpp"

namespace ssf {

/// One climate variable on a lat/lon grid over a contiguous daily range.
/// Values are stored date-major, row-major within a date.
struct GriddedField {
  std::string name;
  std::string units;
  LatLonGrid grid;
  Date date_start;
  int n_dates = 0;
  std::vector<double> values;        // n_dates * n_cells
  std::vector<std::uint8_t> missing;  // same layout, 1 = missing

  int n_cells() const { return grid.n_cells(); }

  Date date_at(int t) const { return add_days(date_start, t); }
  Date date_end() const { return add_days(date_start, n_dates - 1); }

  bool covers(const Date& d) const {
    const auto off = days_between(date_start, d);
    return off >= 0 && off < n_dates;
  }

  int date_index(const Date& d) const {
    const auto off = days_between(date_start, d);
    if (off < 0 || off >= n_dates)
      throw DataError(name + ": date out of range: " + to_iso(d));
    return static_cast<int>(off);
  }

  std::size_t slot(int t, int cell) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(n_cells()) +
           static_cast<std::size_t>(cell);
  }

  double at(int t, int cell) const { return values[slot(t, cell)]; }
  bool is_missing(int t, int cell) const { return missing[slot(t, cell)] != 0; }

  void set(int t, int cell, double v) {
    values[slot(t, cell)] = v;
    missing[slot(t, cell)] = 0;
  }
  void set_missing(int t, int cell) {
    values[slot(t, cell)] = std::numeric_limits<double>::quiet_NaN();
    missing[slot(t, cell)] = 1;
  }

  static GriddedField zeros(std::string name, LatLonGrid grid, Date start,
                            int n_dates) {
    GriddedField f;
    f.name = std::move(name);
    f.grid = std::move(grid);
    f.date_start = start;
    f.n_dates = n_dates;
    const auto n = static_cast<std::size_t>(n_dates) *
                   static_cast<std::size_t>(f.grid.n_cells());
    f.values.assign(n, 0.0);
    f.missing.assign(n, 0);
    return f;
  }
};

/// Scalar climate-index series at daily (or coarser) cadence.
struct IndexSeries {
  std::string name;
  std::vector<Date> dates;
  std::vector<double> values;

  std::size_t size() const { return dates.size(); }
};

namespace detail {

inline LatLonGrid grid_from_json(const nlohmann::json& j) {
  LatLonGrid g;
  g.lat_start = j.at("lat_start").get<double>();
  g.lat_step = j.at("lat_step").get<double>();
  g.n_lat = j.at("n_lat").get<int>();
  g.lon_start = j.at("lon_start").get<double>();
  g.lon_step = j.at("lon_step").get<double>();
  g.n_lon = j.at("n_lon").get<int>();
  if (g.n_lat <= 0 || g.n_lon <= 0 || g.lat_step <= 0 || g.lon_step <= 0)
    throw DataError("manifest grid has non-positive dimensions");
  if (g.lat(0) < -90.0 - 1e-9 || g.lat(g.n_lat - 1) > 90.0 + 1e-9)
    throw DataError("manifest grid latitude outside [-90, 90]");
  return g;
}

inline nlohmann::json grid_to_json(const LatLonGrid& g) {
  return nlohmann::json{{"lat_start", g.lat_start}, {"lat_step", g.lat_step},
                        {"n_lat", g.n_lat},         {"lon_start", g.lon_start},
                        {"lon_step", g.lon_step},   {"n_lon", g.n_lon}};
}

}  // namespace detail

/// Read a field from its JSON manifest. The binary payload is little-endian
/// float32, date-major then row-major cells; NaN entries become missing.
inline GriddedField read_field(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("unparseable manifest " + manifest_path + ": " + e.what());
  }
  GriddedField f;
  try {
    f.name = j.at("name").get<std::string>();
    f.units = j.value("units", "");
    f.grid = detail::grid_from_json(j.at("grid"));
    f.date_start = parse_iso_date(j.at("date_start").get<std::string>());
    f.n_dates = j.at("n_dates").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("unparseable manifest " + manifest_path + ": " + e.what());
  }
  if (f.n_dates <= 0) throw DataError("manifest declares no dates");

  const auto payload_rel = j.at("payload").get<std::string>();
  const auto payload_path =
      (std::filesystem::path(manifest_path).parent_path() / payload_rel)
          .string();
  const auto raw = read_f32_payload(payload_path);
  const std::size_t expected = static_cast<std::size_t>(f.n_dates) *
                               static_cast<std::size_t>(f.grid.n_cells());
  if (raw.size() != expected)
    throw DataError("payload length mismatch for " + f.name + ": expected " +
                    std::to_string(expected) + " values, got " +
                    std::to_string(raw.size()));
  f.values.resize(expected);
  f.missing.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const float v = raw[i];
    if (std::isnan(v)) {
      f.values[i] = std::numeric_limits<double>::quiet_NaN();
      f.missing[i] = 1;
    } else {
      f.values[i] = static_cast<double>(v);
      f.missing[i] = 0;
    }
  }
  return f;
}

/// Write manifest + payload next to each other; inverse of read_field.
inline void write_field(const GriddedField& f, const std::string& manifest_path) {
  const auto payload_name =
      std::filesystem::path(manifest_path).stem().string() + ".f32";
  nlohmann::json j{{"name", f.name},
                   {"units", f.units},
                   {"grid", detail::grid_to_json(f.grid)},
                   {"date_start", to_iso(f.date_start)},
                   {"n_dates", f.n_dates},
                   {"payload", payload_name}};
  std::vector<float> raw(f.values.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = f.missing[i] ? std::numeric_limits<float>::quiet_NaN()
                          : static_cast<float>(f.values[i]);
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot open for writing: " + manifest_path);
  out << j.dump(2) << "\n";
  write_f32_payload((dir / payload_name).string(), raw);
}

/// Read `date,value` CSV with ISO-8601 dates.
inline IndexSeries read_index_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open index series: " + path);
  IndexSeries s;
  s.name = std::filesystem::path(path).stem().string();
  std::string line;
  if (!std::getline(in, line) || line.rfind("date,value", 0) != 0)
    throw DataError("index series missing 'date,value' header: " + path);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("bad index series row in " + path + ": " + line);
    s.dates.push_back(parse_iso_date(line.substr(0, comma)));
    s.values.push_back(std::stod(line.substr(comma + 1)));
  }
  for (std::size_t i = 1; i < s.dates.size(); ++i)
    if (!(s.dates[i - 1] < s.dates[i]))
      throw DataError("index series dates not strictly increasing: " + path);
  return s;
}

inline void write_index_series(const IndexSeries& s, const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "date,value\n";
  char buf[40];
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", s.values[i]);
    out << to_iso(s.dates[i]) << "," << buf << "\n";
  }
}

/// Linear interpolation of a weekly/bimonthly series onto a daily grid, with
/// constant extrapolation outside the observed span. Observation dates keep
/// their original values exactly.
inline IndexSeries interp_daily(const IndexSeries& s) {
  if (s.size() < 2)
    throw DataError("interp_daily needs at least 2 observations: " + s.name);
  IndexSeries out;
  out.name = s.name;
  const auto d0 = serial_day(s.dates.front());
  const auto d1 = serial_day(s.dates.back());
  out.dates.reserve(static_cast<std::size_t>(d1 - d0 + 1));
  out.values.reserve(static_cast<std::size_t>(d1 - d0 + 1));
  std::size_t k = 0;  // segment index: dates[k] <= current < dates[k+1]
  for (auto d = d0; d <= d1; ++d) {
    while (k + 2 < s.size() && serial_day(s.dates[k + 1]) <= d) ++k;
    const auto ka = serial_day(s.dates[k]);
    const auto kb = serial_day(s.dates[k + 1]);
    double v;
    if (d <= ka) {
      v = s.values[k];
    } else if (d >= kb) {
      v = s.values[k + 1];
    } else {
      const double w = static_cast<double>(d - ka) / static_cast<double>(kb - ka);
      v = s.values[k] + w * (s.values[k + 1] - s.values[k]);
    }
    out.dates.push_back(date_from_serial(d));
    out.values.push_back(v);
  }
  return out;
}

/// Clamp/extend a daily series to [start, end], constant at the ends.
inline IndexSeries extend_daily(const IndexSeries& s, const Date& start,
                                const Date& end) {
  IndexSeries out;
  out.name = s.name;
  const auto s0 = serial_day(s.dates.front());
  const auto s1 = serial_day(s.dates.back());
  for (auto d = serial_day(start); d <= serial_day(end); ++d) {
    out.dates.push_back(date_from_serial(d));
    const auto clamped = std::clamp(d, s0, s1);
    out.values.push_back(s.values[static_cast<std::size_t>(clamped - s0)]);
  }
  return out;
}

/// Bilinear regrid onto `target` cell centers. Targets outside the source
/// hull, or touching a missing corner, come back missing.
inline GriddedField regrid_bilinear(const GriddedField& f,
                                    const LatLonGrid& target) {
  GriddedField out = GriddedField::zeros(f.name, target, f.date_start, f.n_dates);
  out.units = f.units;
  const auto& src = f.grid;
  for (int r = 0; r < target.n_lat; ++r) {
    for (int c = 0; c < target.n_lon; ++c) {
      const int cell = target.index_of(CellIndex{r, c});
      const double fr = (target.lat(r) - src.lat_start) / src.lat_step;
      const double fc = (target.lon(c) - src.lon_start) / src.lon_step;
      if (fr < -1e-9 || fr > src.n_lat - 1 + 1e-9 || fc < -1e-9 ||
          fc > src.n_lon - 1 + 1e-9) {
        for (int t = 0; t < f.n_dates; ++t) out.set_missing(t, cell);
        continue;
      }
      const int r0 = std::min(static_cast<int>(std::floor(fr + 1e-12)),
                              src.n_lat - (src.n_lat > 1 ? 2 : 1));
      const int c0 = std::min(static_cast<int>(std::floor(fc + 1e-12)),
                              src.n_lon - (src.n_lon > 1 ? 2 : 1));
      const double wr = fr - r0;
      const double wc = fc - c0;
      const int r1 = std::min(r0 + 1, src.n_lat - 1);
      const int c1 = std::min(c0 + 1, src.n_lon - 1);
      const int s00 = src.index_of(CellIndex{r0, c0});
      const int s01 = src.index_of(CellIndex{r0, c1});
      const int s10 = src.index_of(CellIndex{r1, c0});
      const int s11 = src.index_of(CellIndex{r1, c1});
      for (int t = 0; t < f.n_dates; ++t) {
        if (f.is_missing(t, s00) || f.is_missing(t, s01) ||
            f.is_missing(t, s10) || f.is_missing(t, s11)) {
          out.set_missing(t, cell);
          continue;
        }
        const double top =
            f.at(t, s00) * (1 - wc) + f.at(t, s01) * wc;
        const double bot =
            f.at(t, s10) * (1 - wc) + f.at(t, s11) * wc;
        out.set(t, cell, top * (1 - wr) + bot * wr);
      }
    }
  }
  return out;
}

/// Block-mean coarsening; target cells must cover aligned integer groups of
/// source cells (e.g. 4x4 when going 0.5 degrees to 2 degrees).
inline GriddedField coarsen_mean(const GriddedField& f,
                                 const LatLonGrid& target) {
  const auto& src = f.grid;
  const double rlat = target.lat_step / src.lat_step;
  const double rlon = target.lon_step / src.lon_step;
  const int klat = static_cast<int>(std::lround(rlat));
  const int klon = static_cast<int>(std::lround(rlon));
  if (klat < 1 || klon < 1 || std::abs(rlat - klat) > 1e-9 ||
      std::abs(rlon - klon) > 1e-9)
    throw DataError("coarsen_mean: step ratio is not an integer");
  // First source center inside target cell 0 sits half a coarse cell below
  // the target center, shifted up half a fine cell.
  const double lat0 =
      target.lat_start - target.lat_step / 2.0 + src.lat_step / 2.0;
  const double lon0 =
      target.lon_start - target.lon_step / 2.0 + src.lon_step / 2.0;
  const double olat = (lat0 - src.lat_start) / src.lat_step;
  const double olon = (lon0 - src.lon_start) / src.lon_step;
  const int base_r = static_cast<int>(std::lround(olat));
  const int base_c = static_cast<int>(std::lround(olon));
  if (std::abs(olat - base_r) > 1e-6 || std::abs(olon - base_c) > 1e-6)
    throw DataError("coarsen_mean: grids are misaligned");
  if (base_r < 0 || base_c < 0 ||
      base_r + target.n_lat * klat > src.n_lat ||
      base_c + target.n_lon * klon > src.n_lon)
    throw DataError("coarsen_mean: target extends past the source grid");

  GriddedField out = GriddedField::zeros(f.name, target, f.date_start, f.n_dates);
  out.units = f.units;
  for (int r = 0; r < target.n_lat; ++r) {
    for (int c = 0; c < target.n_lon; ++c) {
      const int cell = target.index_of(CellIndex{r, c});
      for (int t = 0; t < f.n_dates; ++t) {
        double sum = 0.0;
        int n = 0;
        for (int i = 0; i < klat; ++i) {
          for (int j = 0; j < klon; ++j) {
            const int s = src.index_of(
                CellIndex{base_r + r * klat + i, base_c + c * klon + j});
            if (!f.is_missing(t, s)) {
              sum += f.at(t, s);
              ++n;
            }
          }
        }
        if (n == 0)
          out.set_missing(t, cell);
        else
          out.set(t, cell, sum / n);
      }
    }
  }
  return out;
}

}  // namespace ssf
