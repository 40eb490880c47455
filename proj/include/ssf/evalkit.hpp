#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssf/linmodels.hpp"
#include "ssf/timegrid.hpp"
#include "ssf/util.hpp"

namespace ssf {

inline constexpr double kNormFloor = 1e-12;

/// Inner-product cosine; 0 when either norm is under the floor.
inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return cosine_similarity(a, b);
}

/// Cosine across locations at one date.
inline double spatial_skill(const Eigen::VectorXd& pred,
                            const Eigen::VectorXd& truth) {
  return cosine(pred, truth);
}

/// Cosine across dates at one location.
inline double temporal_skill(const Eigen::VectorXd& pred_series,
                             const Eigen::VectorXd& truth_series) {
  return cosine(pred_series, truth_series);
}

/// 1 - MSE(pred) / MSE(train-mean baseline). Exactly 0 when pred equals the
/// baseline and exactly 1 when pred equals the truth.
inline double relative_r2(const Eigen::VectorXd& pred,
                          const Eigen::VectorXd& truth,
                          const Eigen::VectorXd& baseline) {
  if (pred.size() != truth.size() || baseline.size() != truth.size())
    throw std::invalid_argument("relative_r2: length mismatch");
  const double denom = (truth - baseline).squaredNorm();
  if (denom <= kNormFloor)
    throw std::invalid_argument("relative_r2: degenerate baseline error");
  return 1.0 - (truth - pred).squaredNorm() / denom;
}

/// Linear-interpolation quantile on a sorted copy (the n-1 spacing rule).
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty");
  std::sort(values.begin(), values.end());
  const double h = q * (static_cast<double>(values.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct Summary {
  std::size_t n = 0;
  double mean = 0, mean_se = 0;
  double median = 0, median_se = 0;
  double q25 = 0, q25_se = 0;
  double q75 = 0, q75_se = 0;
};

/// Mean with analytic SE; median and quartiles with seeded nonparametric
/// bootstrap SEs (1000 resamples by default).
inline Summary summarize(const std::vector<double>& values, int n_boot = 1000,
                         std::uint64_t seed = 0) {
  if (values.size() < 2)
    throw std::invalid_argument("summarize: need at least 2 values");
  Summary s;
  s.n = values.size();
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.mean_se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  s.median = quantile(values, 0.5);
  s.q25 = quantile(values, 0.25);
  s.q75 = quantile(values, 0.75);

  Rng rng(seed ^ 0xb0075ULL);
  std::vector<double> med(static_cast<std::size_t>(n_boot));
  std::vector<double> lo(static_cast<std::size_t>(n_boot));
  std::vector<double> hi(static_cast<std::size_t>(n_boot));
  std::vector<double> resample(values.size());
  for (int b = 0; b < n_boot; ++b) {
    for (auto& r : resample)
      r = values[static_cast<std::size_t>(rng.uniform_index(values.size()))];
    med[static_cast<std::size_t>(b)] = quantile(resample, 0.5);
    lo[static_cast<std::size_t>(b)] = quantile(resample, 0.25);
    hi[static_cast<std::size_t>(b)] = quantile(resample, 0.75);
  }
  auto sd = [](const std::vector<double>& xs) {
    double m = 0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double acc = 0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / (static_cast<double>(xs.size()) - 1.0));
  };
  s.median_se = sd(med);
  s.q25_se = sd(lo);
  s.q75_se = sd(hi);
  return s;
}

// --- skill report ---

struct PerDateSkill {
  Date date;
  int plan_index = 0;
  double spatial_cosine = 0.0;
  bool excluded = false;  // truth norm under the floor
};

struct PerCellSkill {
  int cell = 0;
  double lat = 0, lon = 0;
  double temporal_cosine = 0.0;
  double rel_r2 = 0.0;
  int n_dates = 0;
  bool excluded = false;
};

struct SkillReport {
  std::string model_id;
  std::string mode;
  std::string scope;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<PerDateSkill> per_date;
  std::vector<PerCellSkill> per_cell;
  Summary spatial_summary;   // over included test dates
  Summary temporal_summary;  // over included cells
  Summary rel_r2_summary;    // over included cells
  double overall_rel_r2 = 0.0;
  int excluded_dates = 0;
  int excluded_cells = 0;
  std::vector<std::string> plan_errors;  // one entry per aborted plan
  std::string max_train_target_date;     // audit: latest y read while fitting

  std::vector<double> included_spatial() const {
    std::vector<double> out;
    for (const auto& d : per_date)
      if (!d.excluded) out.push_back(d.spatial_cosine);
    return out;
  }
};

inline nlohmann::json report_to_json(const SkillReport& r) {
  auto summary_json = [](const Summary& s) {
    return nlohmann::json{{"n", s.n},           {"mean", s.mean},
                          {"mean_se", s.mean_se}, {"median", s.median},
                          {"median_se", s.median_se}, {"q25", s.q25},
                          {"q25_se", s.q25_se}, {"q75", s.q75},
                          {"q75_se", s.q75_se}};
  };
  return nlohmann::json{
      {"model", r.model_id},
      {"mode", r.mode},
      {"scope", r.scope},
      {"seed", r.seed},
      {"config_hash", r.config_hash},
      {"se_method", "mean: sample std / sqrt(n); quantiles: bootstrap(1000)"},
      {"spatial_cosine", summary_json(r.spatial_summary)},
      {"temporal_cosine", summary_json(r.temporal_summary)},
      {"relative_r2", summary_json(r.rel_r2_summary)},
      {"overall_relative_r2", r.overall_rel_r2},
      {"excluded_dates", r.excluded_dates},
      {"excluded_cells", r.excluded_cells},
      {"plan_errors", r.plan_errors},
      {"max_train_target_date", r.max_train_target_date}};
}

inline void save_report(const SkillReport& r, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out((fs::path(dir) / "report.json").string());
    if (!out) throw DataError("cannot write report.json in " + dir);
    out << report_to_json(r).dump(2) << "\n";
  }
  char buf[96];
  {
    std::ofstream out((fs::path(dir) / "per_date.csv").string());
    out << "# model=" << r.model_id << " seed=" << r.seed
        << " config_hash=" << r.config_hash << "\n";
    out << "date,plan,spatial_cosine,excluded\n";
    for (const auto& d : r.per_date) {
      std::snprintf(buf, sizeof buf, "%.17g", d.spatial_cosine);
      out << to_iso(d.date) << "," << d.plan_index << "," << buf << ","
          << (d.excluded ? 1 : 0) << "\n";
    }
  }
  {
    std::ofstream out((fs::path(dir) / "per_cell.csv").string());
    out << "# model=" << r.model_id << " seed=" << r.seed
        << " config_hash=" << r.config_hash << "\n";
    out << "cell,lat,lon,temporal_cosine,relative_r2,n_dates,excluded\n";
    for (const auto& c : r.per_cell) {
      out << c.cell << ",";
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", c.lat, c.lon);
      out << buf;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,", c.temporal_cosine, c.rel_r2);
      out << buf << c.n_dates << "," << (c.excluded ? 1 : 0) << "\n";
    }
  }
}

}  // namespace ssf
