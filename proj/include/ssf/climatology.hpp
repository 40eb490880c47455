#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ssf/field.hpp"
#include "ssf/timegrid.hpp"

namespace ssf {

/// Per-cell, per-day-of-year mean and standard deviation over a reference
/// year window. Day-of-year runs 1..365 with Feb 29 folded onto Feb 28.
struct Climatology {
  LatLonGrid grid;
  int ref_year_start = 0;
  int ref_year_end = 0;
  int pool_window = 0;           // +/- days pooled around each doy (circular)
  double std_floor = 1e-6;
  std::vector<double> mean;      // 365 * n_cells, doy-major
  std::vector<double> std;       // same layout

  std::size_t slot(int doy, int cell) const {
    return static_cast<std::size_t>(doy - 1) *
               static_cast<std::size_t>(grid.n_cells()) +
           static_cast<std::size_t>(cell);
  }
  double mean_at(int doy, int cell) const { return mean[slot(doy, cell)]; }
  double std_at(int doy, int cell) const { return std[slot(doy, cell)]; }
};

/// Mean/std per (cell, doy) over every reference-year sample whose doy lies
/// within +/-pool_window (circular) of the key doy. Sample std with n-1
/// denominator, floored at std_floor.
inline Climatology fit_climatology(const GriddedField& f, int ref_year_start,
                                   int ref_year_end, int pool_window = 0,
                                   double std_floor = 1e-6) {
  if (ref_year_end < ref_year_start)
    throw DataError("fit_climatology: empty reference year range");
  Climatology c;
  c.grid = f.grid;
  c.ref_year_start = ref_year_start;
  c.ref_year_end = ref_year_end;
  c.pool_window = pool_window;
  c.std_floor = std_floor;
  const int n_cells = f.n_cells();
  c.mean.assign(365 * static_cast<std::size_t>(n_cells), 0.0);
  c.std.assign(365 * static_cast<std::size_t>(n_cells), 0.0);

  // reference dates grouped by folded day-of-year
  std::vector<std::vector<int>> by_doy(366);
  for (int t = 0; t < f.n_dates; ++t) {
    const Date d = f.date_at(t);
    if (d.year < ref_year_start || d.year > ref_year_end) continue;
    by_doy[static_cast<std::size_t>(day_of_year(d))].push_back(t);
  }

  std::vector<int> pooled;
  for (int doy = 1; doy <= 365; ++doy) {
    pooled.clear();
    for (int off = -pool_window; off <= pool_window; ++off) {
      int d = doy + off;
      if (d < 1) d += 365;
      if (d > 365) d -= 365;
      pooled.insert(pooled.end(), by_doy[static_cast<std::size_t>(d)].begin(),
                    by_doy[static_cast<std::size_t>(d)].end());
    }
    for (int cell = 0; cell < n_cells; ++cell) {
      double sum = 0.0;
      int n = 0;
      for (int t : pooled) {
        if (f.is_missing(t, cell)) continue;
        sum += f.at(t, cell);
        ++n;
      }
      if (n == 0)
        throw DataError("fit_climatology: empty sample set at doy " +
                        std::to_string(doy) + ", cell " + std::to_string(cell));
      const double m = sum / n;
      double ss = 0.0;
      for (int t : pooled) {
        if (f.is_missing(t, cell)) continue;
        const double d = f.at(t, cell) - m;
        ss += d * d;
      }
      const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
      c.mean[c.slot(doy, cell)] = m;
      c.std[c.slot(doy, cell)] = std::max(sd, std_floor);
    }
  }
  return c;
}

/// (value - mean) / std per cell and date; missing propagates.
inline GriddedField zscore(const GriddedField& f, const Climatology& c) {
  if (!f.grid.same_geometry(c.grid))
    throw DataError("zscore: field and climatology grids differ");
  GriddedField out = f;
  for (int t = 0; t < f.n_dates; ++t) {
    const int doy = day_of_year(f.date_at(t));
    for (int cell = 0; cell < f.n_cells(); ++cell) {
      if (f.is_missing(t, cell)) continue;
      out.values[out.slot(t, cell)] =
          (f.at(t, cell) - c.mean_at(doy, cell)) / c.std_at(doy, cell);
    }
  }
  return out;
}

inline GriddedField unzscore(const GriddedField& f, const Climatology& c) {
  if (!f.grid.same_geometry(c.grid))
    throw DataError("unzscore: field and climatology grids differ");
  GriddedField out = f;
  for (int t = 0; t < f.n_dates; ++t) {
    const int doy = day_of_year(f.date_at(t));
    for (int cell = 0; cell < f.n_cells(); ++cell) {
      if (f.is_missing(t, cell)) continue;
      out.values[out.slot(t, cell)] =
          f.at(t, cell) * c.std_at(doy, cell) + c.mean_at(doy, cell);
    }
  }
  return out;
}

/// Aggregate field keyed at t whose value is the mean of f over the window
/// [t+off_start, t+off_end]. Dates whose window leaves the data range, or
/// touches a missing value, come back missing.
inline GriddedField windowed_mean(const GriddedField& f, int off_start,
                                  int off_end) {
  if (off_end < off_start) throw DataError("windowed_mean: bad window");
  GriddedField out =
      GriddedField::zeros(f.name + "_w" + std::to_string(off_start) + "_" +
                              std::to_string(off_end),
                          f.grid, f.date_start, f.n_dates);
  out.units = f.units;
  const int w = off_end - off_start + 1;
  for (int t = 0; t < f.n_dates; ++t) {
    const int a = t + off_start;
    const int b = t + off_end;
    if (a < 0 || b >= f.n_dates) {
      for (int cell = 0; cell < f.n_cells(); ++cell) out.set_missing(t, cell);
      continue;
    }
    for (int cell = 0; cell < f.n_cells(); ++cell) {
      double sum = 0.0;
      bool gap = false;
      for (int s = a; s <= b; ++s) {
        if (f.is_missing(s, cell)) {
          gap = true;
          break;
        }
        sum += f.at(s, cell);
      }
      if (gap)
        out.set_missing(t, cell);
      else
        out.set(t, cell, sum / w);
    }
  }
  return out;
}

constexpr int kTargetWindowStart = 15;
constexpr int kTargetWindowEnd = 28;
constexpr int kRecentWindowStart = -14;
constexpr int kRecentWindowEnd = -1;

/// Climatology of the forward 14-day mean (window [t+15, t+28]) keyed by the
/// forecast date's doy; the normalizer used by two_week_target.
inline Climatology fit_target_climatology(const GriddedField& tmp2m,
                                          int ref_year_start, int ref_year_end,
                                          int pool_window = 0,
                                          double std_floor = 1e-6) {
  return fit_climatology(
      windowed_mean(tmp2m, kTargetWindowStart, kTargetWindowEnd),
      ref_year_start, ref_year_end, pool_window, std_floor);
}

/// Climatology of the trailing 14-day mean (window [t-14, t-1]) keyed by doy;
/// the normalizer used by recent_anomaly.
inline Climatology fit_recent_climatology(const GriddedField& tmp2m,
                                          int ref_year_start, int ref_year_end,
                                          int pool_window = 0,
                                          double std_floor = 1e-6) {
  return fit_climatology(
      windowed_mean(tmp2m, kRecentWindowStart, kRecentWindowEnd),
      ref_year_start, ref_year_end, pool_window, std_floor);
}

/// y_{g,t}: z-score of mean(tmp2m[g, t+15..t+28]) against c14 at doy(t).
/// Returned as a field of z-scores; dates whose window exits the data range
/// are missing.
inline GriddedField two_week_target(const GriddedField& tmp2m,
                                    const Climatology& c14) {
  GriddedField y =
      zscore(windowed_mean(tmp2m, kTargetWindowStart, kTargetWindowEnd), c14);
  y.name = "y";
  y.units = "zscore";
  return y;
}

/// Anomaly of week -2 & -1: z-score of mean(tmp2m[g, t-14..t-1]) at doy(t).
inline GriddedField recent_anomaly(const GriddedField& tmp2m,
                                   const Climatology& c14_recent) {
  GriddedField a =
      zscore(windowed_mean(tmp2m, kRecentWindowStart, kRecentWindowEnd),
             c14_recent);
  a.name = "recent_anomaly";
  a.units = "zscore";
  return a;
}

// Climatology persistence: the two statistics ride the field binary format
// with 365 pseudo-dates (year 2001 is an arbitrary non-leap anchor).

inline void save_climatology(const Climatology& c, const std::string& dir,
                             const std::string& name) {
  GriddedField m = GriddedField::zeros(name + "_mean", c.grid, Date{2001, 1, 1}, 365);
  GriddedField s = GriddedField::zeros(name + "_std", c.grid, Date{2001, 1, 1}, 365);
  m.values = c.mean;
  s.values = c.std;
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_field(m, (fs::path(dir) / (name + "_mean.json")).string());
  write_field(s, (fs::path(dir) / (name + "_std.json")).string());
  nlohmann::json meta{{"ref_year_start", c.ref_year_start},
                      {"ref_year_end", c.ref_year_end},
                      {"pool_window", c.pool_window},
                      {"std_floor", c.std_floor}};
  std::ofstream out((fs::path(dir) / (name + "_meta.json")).string());
  out << meta.dump(2) << "\n";
}

inline Climatology load_climatology(const std::string& dir,
                                    const std::string& name) {
  namespace fs = std::filesystem;
  const GriddedField m = read_field((fs::path(dir) / (name + "_mean.json")).string());
  const GriddedField s = read_field((fs::path(dir) / (name + "_std.json")).string());
  if (m.n_dates != 365 || s.n_dates != 365)
    throw DataError("climatology payload must hold 365 pseudo-dates");
  std::ifstream in((fs::path(dir) / (name + "_meta.json")).string());
  if (!in) throw DataError("missing climatology metadata for " + name);
  nlohmann::json meta;
  in >> meta;
  Climatology c;
  c.grid = m.grid;
  c.mean = m.values;
  c.std = s.values;
  c.ref_year_start = meta.at("ref_year_start").get<int>();
  c.ref_year_end = meta.at("ref_year_end").get<int>();
  c.pool_window = meta.at("pool_window").get<int>();
  c.std_floor = meta.at("std_floor").get<double>();
  return c;
}

}  // namespace ssf
