#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssf/util.hpp"

namespace ssf {

/// Proleptic Gregorian calendar date. Ordering and arithmetic go through a
/// serial day number (days since 1970-01-01).
struct Date {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31

  friend auto operator<=>(const Date&, const Date&) = default;
};

inline bool is_leap_year(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int y, int m) {
  static constexpr std::array<int, 12> len = {31, 28, 31, 30, 31, 30,
                                              31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap_year(y)) return 29;
  return len[m - 1];
}

inline bool is_valid_date(const Date& d) {
  return d.month >= 1 && d.month <= 12 && d.day >= 1 &&
         d.day <= days_in_month(d.year, d.month);
}

/// Days since 1970-01-01 (Howard Hinnant's civil-date algorithm).
inline std::int64_t serial_day(const Date& d) {
  const int y = d.year - (d.month <= 2);
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(d.month + (d.month > 2 ? -3 : 9)) + 2) / 5 +
      static_cast<unsigned>(d.day) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 +
         static_cast<std::int64_t>(doe) - 719468;
}

inline Date date_from_serial(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m),
              static_cast<int>(d)};
}

inline Date add_days(const Date& d, std::int64_t k) {
  return date_from_serial(serial_day(d) + k);
}

inline std::int64_t days_between(const Date& from, const Date& to) {
  return serial_day(to) - serial_day(from);
}

/// Day of year in 1..365. Feb 29 folds onto Feb 28's value (59) and every
/// later date in a leap year maps to its non-leap equivalent.
inline int day_of_year(const Date& d) {
  static constexpr std::array<int, 12> cum = {0,   31,  59,  90,  120, 151,
                                              181, 212, 243, 273, 304, 334};
  if (d.month == 2 && d.day == 29) return 59;
  return cum[d.month - 1] + d.day;
}

/// The date in year y with the same (folded) day-of-year as d.
inline Date same_doy_in_year(const Date& d, int y) {
  if (d.month == 2 && d.day == 29 && !is_leap_year(y)) return Date{y, 2, 28};
  return Date{y, d.month, d.day};
}

/// Circular distance between two days-of-year on the 365-day wheel.
inline int doy_distance(int a, int b) {
  int diff = std::abs(a - b);
  return std::min(diff, 365 - diff);
}

inline std::string to_iso(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
  return std::string(buf);
}

inline Date parse_iso_date(const std::string& s) {
  Date d;
  if (s.size() < 10 || s[4] != '-' || s[7] != '-')
    throw DataError("bad ISO date: " + s);
  auto num = [&](int pos, int len) {
    int v = 0;
    auto res = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (res.ec != std::errc()) throw DataError("bad ISO date: " + s);
    return v;
  };
  d.year = num(0, 4);
  d.month = num(5, 2);
  d.day = num(8, 2);
  if (!is_valid_date(d)) throw DataError("invalid calendar date: " + s);
  return d;
}

/// 0-based position on a lat/lon grid, row = latitude index.
struct CellIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Rectilinear grid of cell centers, row-major enumeration. An optional
/// land mask selects the target cells.
struct LatLonGrid {
  double lat_start = 0.0;
  double lat_step = 1.0;
  int n_lat = 0;
  double lon_start = 0.0;
  double lon_step = 1.0;
  int n_lon = 0;
  std::vector<std::uint8_t> land_mask;  // empty = all cells are targets

  int n_cells() const { return n_lat * n_lon; }
  double lat(int row) const { return lat_start + row * lat_step; }
  double lon(int col) const { return lon_start + col * lon_step; }

  int index_of(const CellIndex& c) const { return c.row * n_lon + c.col; }
  CellIndex cell_of(int index) const {
    return CellIndex{index / n_lon, index % n_lon};
  }

  bool in_bounds(const CellIndex& c) const {
    return c.row >= 0 && c.row < n_lat && c.col >= 0 && c.col < n_lon;
  }

  bool is_target(int index) const {
    return land_mask.empty() || land_mask[static_cast<std::size_t>(index)] != 0;
  }

  /// Row-major list of target cell indices; size G.
  std::vector<int> target_cells() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_cells()));
    for (int i = 0; i < n_cells(); ++i)
      if (is_target(i)) out.push_back(i);
    return out;
  }

  bool same_geometry(const LatLonGrid& o) const {
    return n_lat == o.n_lat && n_lon == o.n_lon &&
           std::abs(lat_start - o.lat_start) < 1e-9 &&
           std::abs(lon_start - o.lon_start) < 1e-9 &&
           std::abs(lat_step - o.lat_step) < 1e-9 &&
           std::abs(lon_step - o.lon_step) < 1e-9;
  }
};

/// Load a `lat,lon,is_target` CSV and return the mask aligned to `grid`.
/// Every row must match a grid cell center; unlisted cells default to 0.
inline std::vector<std::uint8_t> load_land_mask(const std::string& path,
                                                const LatLonGrid& grid) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open land mask: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("lat,lon,is_target", 0) != 0)
    throw DataError("land mask missing 'lat,lon,is_target' header: " + path);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(grid.n_cells()), 0);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') ||
        !std::getline(row, c))
      throw DataError("bad land mask row " + std::to_string(lineno));
    const double lat = std::stod(a), lon = std::stod(b);
    const int flag = std::stoi(c);
    const double ri = (lat - grid.lat_start) / grid.lat_step;
    const double ci = (lon - grid.lon_start) / grid.lon_step;
    const int r = static_cast<int>(std::lround(ri));
    const int col = static_cast<int>(std::lround(ci));
    if (std::abs(ri - r) > 1e-6 || std::abs(ci - col) > 1e-6 ||
        !grid.in_bounds(CellIndex{r, col}))
      throw DataError("land mask row " + std::to_string(lineno) +
                      " does not match a grid cell center");
    mask[static_cast<std::size_t>(grid.index_of(CellIndex{r, col}))] =
        static_cast<std::uint8_t>(flag != 0);
  }
  return mask;
}

}  // namespace ssf
