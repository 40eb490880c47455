#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ssf/climatology.hpp"
#include "ssf/features.hpp"
#include "ssf/field.hpp"
#include "ssf/util.hpp"

namespace ssf {

struct DriverFeed {
  int driver = 0;
  double amplitude = 1.0;
};

/// Seeded synthetic climate-like world. Latent AR(1) drivers feed chosen
/// covariate fields and index series through smooth random spatial loadings;
/// the tmp2m field is built so that the 14-day window mean anchored at t
/// carries the drivers sampled at t plus noise scaled by snr.
struct SynthConfig {
  int n_lat = 8;
  int n_lon = 8;
  double lat_start = 30.0;
  double lon_start = -120.0;
  double grid_step = 2.0;
  int start_year = 2000;
  int years = 12;
  int n_latent = 2;
  double driver_persistence = 0.9;
  double snr = 0.5625;           // per-date signal/noise variance ratio
  double covariate_noise = 0.5;  // observation noise on driver-fed fields
  double index_noise = 0.3;
  double seasonal_amp = 10.0;    // tmp2m seasonal cycle (degrees)
  std::uint64_t seed = 1;
  std::map<std::string, std::vector<DriverFeed>> signal_map;

  /// Drivers feed land (sm), ocean (both sst fields) and two indices, and
  /// the target listens to both drivers.
  static SynthConfig defaults() {
    SynthConfig c;
    c.signal_map["target"] = {{0, 1.0}, {1, 1.0}};
    c.signal_map["sm"] = {{0, 1.0}, {1, 0.6}};
    c.signal_map["sst_pacific"] = {{0, 1.0}};
    c.signal_map["sst_atlantic"] = {{1, 1.0}};
    c.signal_map["mei"] = {{0, 1.0}};
    c.signal_map["nino34"] = {{0, 0.8}};
    return c;
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"n_lat", c.n_lat},
                     {"n_lon", c.n_lon},
                     {"lat_start", c.lat_start},
                     {"lon_start", c.lon_start},
                     {"grid_step", c.grid_step},
                     {"start_year", c.start_year},
                     {"years", c.years},
                     {"n_latent", c.n_latent},
                     {"driver_persistence", c.driver_persistence},
                     {"snr", c.snr},
                     {"covariate_noise", c.covariate_noise},
                     {"index_noise", c.index_noise},
                     {"seasonal_amp", c.seasonal_amp},
                     {"seed", c.seed}};
  nlohmann::json feeds;
  for (const auto& [name, list] : c.signal_map) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : list)
      arr.push_back({{"driver", f.driver}, {"amplitude", f.amplitude}});
    feeds[name] = arr;
  }
  j["signal_map"] = feeds;
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.n_lat = j.value("n_lat", c.n_lat);
  c.n_lon = j.value("n_lon", c.n_lon);
  c.lat_start = j.value("lat_start", c.lat_start);
  c.lon_start = j.value("lon_start", c.lon_start);
  c.grid_step = j.value("grid_step", c.grid_step);
  c.start_year = j.value("start_year", c.start_year);
  c.years = j.value("years", c.years);
  c.n_latent = j.value("n_latent", c.n_latent);
  c.driver_persistence = j.value("driver_persistence", c.driver_persistence);
  c.snr = j.value("snr", c.snr);
  c.covariate_noise = j.value("covariate_noise", c.covariate_noise);
  c.index_noise = j.value("index_noise", c.index_noise);
  c.seasonal_amp = j.value("seasonal_amp", c.seasonal_amp);
  c.seed = j.value("seed", c.seed);
  if (j.contains("signal_map")) {
    c.signal_map.clear();
    for (const auto& [name, arr] : j.at("signal_map").items()) {
      std::vector<DriverFeed> list;
      for (const auto& f : arr)
        list.push_back({f.at("driver").get<int>(),
                        f.at("amplitude").get<double>()});
      c.signal_map[name] = list;
    }
  }
}

struct SynthWorld {
  SynthConfig config;
  LatLonGrid grid;
  Date start;
  int n_days = 0;
  std::vector<GriddedField> fields;   // declared order of kFieldNames
  std::vector<IndexSeries> indices;   // declared order of kIndexNames
  Eigen::MatrixXd drivers;            // n_days x n_latent
  Eigen::MatrixXd bayes;              // n_days x n_cells: predictable part
  Eigen::MatrixXd desired;            // n_days x n_cells: planted window mean
};

namespace synth_detail {

/// Gaussian random field smoothed by a 3x3 box kernel iterated 3 times and
/// scaled to unit root-mean-square over cells.
inline Eigen::VectorXd smooth_pattern(const LatLonGrid& grid, Rng& rng) {
  const int R = grid.n_lat, C = grid.n_lon;
  Eigen::MatrixXd a(R, C);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) a(r, c) = rng.normal();
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::MatrixXd b = a;
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) {
        double sum = 0;
        int n = 0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= R || cc < 0 || cc >= C) continue;
            sum += a(rr, cc);
            ++n;
          }
        b(r, c) = sum / n;
      }
    a = b;
  }
  Eigen::VectorXd flat(R * C);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) flat(r * C + c) = a(r, c);
  const double rms = std::sqrt(flat.squaredNorm() / flat.size());
  return rms > 1e-12 ? Eigen::VectorXd(flat / rms) : flat;
}

}  // namespace synth_detail

inline SynthWorld generate(const SynthConfig& config) {
  if (!(config.driver_persistence > 0 && config.driver_persistence < 1))
    throw std::invalid_argument("synth: persistence must be in (0,1)");
  if (!(config.snr > 0)) throw std::invalid_argument("synth: snr must be > 0");

  SynthWorld world;
  world.config = config;
  world.grid.lat_start = config.lat_start;
  world.grid.lat_step = config.grid_step;
  world.grid.n_lat = config.n_lat;
  world.grid.lon_start = config.lon_start;
  world.grid.lon_step = config.grid_step;
  world.grid.n_lon = config.n_lon;
  world.start = Date{config.start_year, 1, 1};
  const Date last{config.start_year + config.years - 1, 12, 31};
  world.n_days = static_cast<int>(days_between(world.start, last)) + 1;
  const int n_cells = world.grid.n_cells();

  Rng rng(config.seed);

  // latent AR(1) drivers, stationary unit variance
  world.drivers.resize(world.n_days, config.n_latent);
  const double rho = config.driver_persistence;
  const double innov = std::sqrt(1.0 - rho * rho);
  for (int j = 0; j < config.n_latent; ++j) {
    double z = rng.normal();
    for (int t = 0; t < world.n_days; ++t) {
      world.drivers(t, j) = z;
      z = rho * z + innov * rng.normal();
    }
  }

  auto feeds_for = [&](const std::string& name) {
    const auto it = config.signal_map.find(name);
    return it == config.signal_map.end() ? std::vector<DriverFeed>{} : it->second;
  };

  // planted target: signal from drivers at the anchor date plus iid noise
  const auto target_feeds = feeds_for("target");
  Eigen::MatrixXd target_patterns(n_cells, config.n_latent);
  target_patterns.setZero();
  world.bayes = Eigen::MatrixXd::Zero(world.n_days, n_cells);
  for (const auto& feed : target_feeds) {
    const Eigen::VectorXd pattern = synth_detail::smooth_pattern(world.grid, rng);
    target_patterns.col(feed.driver) += feed.amplitude * pattern;
    world.bayes +=
        feed.amplitude * world.drivers.col(feed.driver) * pattern.transpose();
  }
  // noise tracks the per-date signal magnitude, so the Bayes spatial cosine
  // sits at sqrt(snr / (1 + snr)) at every date
  world.desired = world.bayes;
  for (int t = 0; t < world.n_days; ++t) {
    const double rms =
        std::sqrt(world.bayes.row(t).squaredNorm() / n_cells);
    const double sigma =
        target_feeds.empty() ? 1.0 : rms / std::sqrt(config.snr);
    for (int c = 0; c < n_cells; ++c)
      world.desired(t, c) += sigma * rng.normal();
  }

  // tmp2m: seasonal cycle plus a daily series whose forward 14-day mean
  // anchored at t reproduces desired(t, c) exactly
  GriddedField tmp2m =
      GriddedField::zeros("tmp2m", world.grid, world.start, world.n_days);
  tmp2m.units = "C";
  {
    Eigen::VectorXd base(n_cells), phase(n_cells);
    for (int c = 0; c < n_cells; ++c) {
      base(c) = 12.0 + 2.0 * rng.normal();
      phase(c) = 0.3 * rng.normal();
    }
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(world.n_days, n_cells);
    for (int s = 0; s < std::min(world.n_days, 29); ++s)
      u.row(s) = world.desired.row(0);
    for (int t = 1; t + 28 < world.n_days; ++t) {
      // mean(u[t+15 .. t+28]) == desired(t)
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(n_cells);
      for (int s = t + 15; s <= t + 27; ++s) acc += u.row(s);
      u.row(t + 28) = 14.0 * world.desired.row(t) - acc;
    }
    for (int t = 0; t < world.n_days; ++t) {
      const double doy = day_of_year(tmp2m.date_at(t));
      for (int c = 0; c < n_cells; ++c)
        tmp2m.set(t, c,
                  base(c) +
                      config.seasonal_amp *
                          std::sin(2.0 * M_PI * doy / 365.0 + phase(c)) +
                      u(t, c));
    }
  }
  world.fields.push_back(std::move(tmp2m));

  // remaining covariate fields observe their drivers through smooth loadings
  for (std::size_t v = 1; v < kFieldNames.size(); ++v) {
    const std::string name = kFieldNames[v];
    LatLonGrid g = world.grid;
    // oceans live on their own offset boxes
    if (name == "sst_pacific") g.lon_start -= 3.0 * config.grid_step;
    if (name == "sst_atlantic") g.lon_start += 3.0 * config.grid_step;
    GriddedField f = GriddedField::zeros(name, g, world.start, world.n_days);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(world.n_days, n_cells);
    for (const auto& feed : feeds_for(name)) {
      const Eigen::VectorXd pattern = synth_detail::smooth_pattern(world.grid, rng);
      values += feed.amplitude * world.drivers.col(feed.driver) *
                pattern.transpose();
    }
    Eigen::VectorXd offset(n_cells);
    for (int c = 0; c < n_cells; ++c) offset(c) = rng.normal();
    for (int t = 0; t < world.n_days; ++t)
      for (int c = 0; c < n_cells; ++c)
        f.set(t, c,
              values(t, c) + offset(c) + config.covariate_noise * rng.normal());
    world.fields.push_back(std::move(f));
  }

  // index series: driver observations or structured noise
  for (const char* name : kIndexNames) {
    IndexSeries s;
    s.name = name;
    s.dates.reserve(static_cast<std::size_t>(world.n_days));
    s.values.reserve(static_cast<std::size_t>(world.n_days));
    const auto feeds = feeds_for(name);
    for (int t = 0; t < world.n_days; ++t) {
      s.dates.push_back(add_days(world.start, t));
      double v = 0.0;
      if (std::string(name) == "mjo_phase") {
        v = 1.0 + static_cast<double>((t / 6) % 8);
      } else if (std::string(name) == "mjo_amplitude") {
        v = std::abs(1.0 + 0.3 * rng.normal());
      } else {
        for (const auto& feed : feeds)
          v += feed.amplitude * world.drivers(t, feed.driver);
        v += config.index_noise * rng.normal();
      }
      s.values.push_back(v);
    }
    world.indices.push_back(std::move(s));
  }
  return world;
}

/// Mean spatial cosine of the Bayes predictor against the realised target
/// window means on the given dates.
inline double ceiling_skill(const SynthWorld& world,
                            const std::vector<Date>& test_dates) {
  if (test_dates.empty()) throw std::invalid_argument("ceiling_skill: no dates");
  double total = 0.0;
  for (const Date& d : test_dates) {
    const auto t = days_between(world.start, d);
    if (t < 0 || t >= world.n_days)
      throw DataError("ceiling_skill: date outside the world: " + to_iso(d));
    const Eigen::VectorXd pred = world.bayes.row(t).transpose();
    const Eigen::VectorXd truth = world.desired.row(t).transpose();
    const double na = pred.norm(), nb = truth.norm();
    total += (na < 1e-12 || nb < 1e-12) ? 0.0 : pred.dot(truth) / (na * nb);
  }
  return total / static_cast<double>(test_dates.size());
}

/// Write the world in the ingest formats: field manifests + payloads, index
/// CSVs, and a ground-truth sidecar with the config and the Bayes payload.
inline void write_store(const SynthWorld& world, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "fields");
  fs::create_directories(fs::path(dir) / "indices");
  for (const auto& f : world.fields)
    write_field(f, (fs::path(dir) / "fields" / (f.name + ".json")).string());
  for (const auto& s : world.indices)
    write_index_series(s,
                       (fs::path(dir) / "indices" / (s.name + ".csv")).string());

  GriddedField bayes = GriddedField::zeros("bayes", world.grid, world.start,
                                           world.n_days);
  GriddedField desired = GriddedField::zeros("desired", world.grid, world.start,
                                             world.n_days);
  for (int t = 0; t < world.n_days; ++t)
    for (int c = 0; c < world.grid.n_cells(); ++c) {
      bayes.set(t, c, world.bayes(t, c));
      desired.set(t, c, world.desired(t, c));
    }
  write_field(bayes, (fs::path(dir) / "ground_truth_bayes.json").string());
  write_field(desired, (fs::path(dir) / "ground_truth_desired.json").string());

  nlohmann::json meta;
  meta["config"] = world.config;
  meta["config_hash"] =
      std::to_string(fnv1a(nlohmann::json(world.config).dump()));
  std::ofstream out((fs::path(dir) / "synth_meta.json").string());
  out << meta.dump(2) << "\n";
}

}  // namespace ssf
