#pragma once

#include <chrono>
#include <string>

#include "ssf/pipeline.hpp"
#include "ssf/synthgen.hpp"

namespace accept {

using namespace ssf;

/// Preprocess a generated world straight into a pipeline bundle, mirroring
/// the on-disk store path without touching the filesystem.
inline DataBundle build_bundle(const SynthWorld& world, Mode mode,
                               int pool_window = 7) {
  const auto& tmp2m = world.fields[0];
  const int ref_start = world.config.start_year;
  const int ref_end =
      std::max(ref_start, world.config.start_year + world.config.years - 3);

  const auto c14 = fit_target_climatology(tmp2m, ref_start, ref_end, pool_window);
  const auto crec = fit_recent_climatology(tmp2m, ref_start, ref_end, pool_window);
  const GriddedField y = two_week_target(tmp2m, c14);
  const GriddedField anom = recent_anomaly(tmp2m, crec);

  std::vector<PcSeries> pcs;
  for (const auto& f : world.fields) {
    const auto basis = fit_eof(f, ref_start, ref_end, kPcPerField);
    pcs.push_back(project_series(f, basis));
  }
  const auto table = build_feature_table(pcs, world.indices);

  const Date lo = std::max(add_days(table.date_start, 2 * 366 + 28),
                           add_days(y.date_start, 14));
  const Date hi = add_days(y.date_start, y.n_dates - 1 - 28);
  DataBundle bundle;
  bundle.ds = assemble_dataset(table, y, anom, mode, Scope::global, 0, lo, hi);
  bundle.grid = y.grid;

  const auto cells = y.grid.target_cells();
  const int n_hist = y.n_dates - 28;
  bundle.history.start = y.date_start;
  bundle.history.Y.resize(n_hist, static_cast<Eigen::Index>(cells.size()));
  for (int t = 0; t < n_hist; ++t)
    for (std::size_t g = 0; g < cells.size(); ++g)
      bundle.history.Y(t, static_cast<Eigen::Index>(g)) = y.at(t, cells[g]);
  return bundle;
}

/// Campaign over the last test_months of the world at the given cadence.
inline std::vector<SplitPlan> desk_plans(const DataBundle& bundle,
                                         int test_year, int first_month,
                                         int n_months, int step_days) {
  PlanParams params;
  params.test_step_days = step_days;
  params.cadence_anchor = Date{test_year, first_month, 1};
  return make_campaign(test_year, first_month, n_months,
                       bundle.ds.dates.front(), params);
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace accept
