#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ssf/features.hpp"
#include "ssf/linmodels.hpp"
#include "ssf/util.hpp"

namespace ssf {

// --- maximum information coefficient ---

struct MicResult {
  double mic = 0.0;
  int x_bins = 0;
  int y_bins = 0;
  int budget = 0;        // B: x_bins * y_bins <= B
  bool degenerate = false;
};

namespace mic_detail {

/// Ranks with ties broken by index; a permutation of 0..n-1.
inline std::vector<int> dense_ranks(const Eigen::VectorXd& v) {
  const auto n = static_cast<int>(v.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (v(a) != v(b)) return v(a) < v(b);
    return a < b;
  });
  std::vector<int> rank(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rank[static_cast<std::size_t>(order[i])] = i;
  return rank;
}

inline double xlog2x(double c) { return c > 0 ? c * std::log2(c) : 0.0; }

/// Best normalised mutual information for one orientation: the y-axis is
/// rank-equipartitioned into q bins and the x-axis partition is optimised by
/// dynamic programming for every column count up to the budget.
inline void scan_orientation(const std::vector<int>& xrank,
                             const std::vector<int>& yrank, int budget,
                             MicResult& best, bool swapped) {
  const int n = static_cast<int>(xrank.size());
  // label of the point at each x-rank position, per y-equipartition
  std::vector<int> point_at(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    point_at[static_cast<std::size_t>(xrank[i])] = i;

  for (int q = 2; q <= budget / 2; ++q) {
    const int x_max = budget / q;
    if (x_max < 2) break;

    // y-bin label per x-position
    std::vector<int> label(static_cast<std::size_t>(n));
    std::vector<int> bin_count(static_cast<std::size_t>(q), 0);
    for (int pos = 0; pos < n; ++pos) {
      const int point = point_at[static_cast<std::size_t>(pos)];
      const int yr = yrank[static_cast<std::size_t>(point)];
      const int b = std::min(q - 1, yr * q / n);
      label[static_cast<std::size_t>(pos)] = b;
      ++bin_count[static_cast<std::size_t>(b)];
    }
    double hq = 0.0;
    for (int b = 0; b < q; ++b)
      hq -= xlog2x(static_cast<double>(bin_count[static_cast<std::size_t>(b)]) / n);

    // phi(j, i) = sum_b (c_b/n) log2(c_b / seg) for the segment [j, i)
    std::vector<double> phi(static_cast<std::size_t>(n + 1) *
                            static_cast<std::size_t>(n + 1));
    std::vector<int> seg_count(static_cast<std::size_t>(q));
    for (int i = 1; i <= n; ++i) {
      std::fill(seg_count.begin(), seg_count.end(), 0);
      double weighted = 0.0;  // sum_b c_b log2 c_b
      for (int j = i - 1; j >= 0; --j) {
        const int b = label[static_cast<std::size_t>(j)];
        auto& c = seg_count[static_cast<std::size_t>(b)];
        weighted -= xlog2x(static_cast<double>(c));
        ++c;
        weighted += xlog2x(static_cast<double>(c));
        const int seg = i - j;
        phi[static_cast<std::size_t>(j) * static_cast<std::size_t>(n + 1) +
            static_cast<std::size_t>(i)] =
            (weighted - xlog2x(static_cast<double>(seg))) / n;
      }
    }
    auto phi_at = [&](int j, int i) {
      return phi[static_cast<std::size_t>(j) * static_cast<std::size_t>(n + 1) +
                 static_cast<std::size_t>(i)];
    };

    // F[i][l]: best sum of phi over l non-empty contiguous bins of the first
    // i points; the answer for column budget x is max over l <= x.
    std::vector<double> prev(static_cast<std::size_t>(n + 1),
                             -std::numeric_limits<double>::infinity());
    for (int i = 1; i <= n; ++i)
      prev[static_cast<std::size_t>(i)] = phi_at(0, i);  // l = 1
    // max over l' <= l of F[n][l']; the single-bin value seeds it
    double best_upto = prev[static_cast<std::size_t>(n)];

    for (int l = 2; l <= x_max; ++l) {
      std::vector<double> cur(static_cast<std::size_t>(n + 1),
                              -std::numeric_limits<double>::infinity());
      for (int i = l; i <= n; ++i) {
        double vbest = -std::numeric_limits<double>::infinity();
        for (int j = l - 1; j < i; ++j) {
          const double cand = prev[static_cast<std::size_t>(j)] + phi_at(j, i);
          if (cand > vbest) vbest = cand;
        }
        cur[static_cast<std::size_t>(i)] = vbest;
      }
      best_upto = std::max(best_upto, cur[static_cast<std::size_t>(n)]);
      const double info = hq + best_upto;
      const double norm = std::log2(static_cast<double>(std::min(l, q)));
      const double value = norm > 0 ? info / norm : 0.0;
      if (value > best.mic) {
        best.mic = value;
        best.x_bins = swapped ? q : l;
        best.y_bins = swapped ? l : q;
      }
      prev.swap(cur);
    }
  }
}

}  // namespace mic_detail

/// ApproxMaxMI over all grids with x_bins * y_bins <= max(4, floor(n^0.6)),
/// evaluated in both orientations. Works on ranks; ties break by index.
inline MicResult mic(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw std::invalid_argument("mic: length mismatch");
  const int n = static_cast<int>(x.size());
  if (n < 8) throw std::invalid_argument("mic: need n >= 8");
  MicResult result;
  result.budget = std::max(4, static_cast<int>(std::floor(
                                  std::pow(static_cast<double>(n), 0.6) + 1e-9)));
  const bool x_const = (x.array() == x(0)).all();
  const bool y_const = (y.array() == y(0)).all();
  if (x_const || y_const) {
    result.degenerate = true;
    return result;
  }
  const auto xr = mic_detail::dense_ranks(x);
  const auto yr = mic_detail::dense_ranks(y);
  mic_detail::scan_orientation(xr, yr, result.budget, result, false);
  mic_detail::scan_orientation(yr, xr, result.budget, result, true);
  result.mic = std::min(result.mic, 1.0);
  return result;
}

// --- classical correlation measures ---

inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("pearson: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("pearson: need n >= 2");
  const double xm = x.mean(), ym = y.mean();
  const Eigen::ArrayXd xc = x.array() - xm;
  const Eigen::ArrayXd yc = y.array() - ym;
  const double sx = std::sqrt(xc.square().sum());
  const double sy = std::sqrt(yc.square().sum());
  if (sx < 1e-12 || sy < 1e-12)
    throw std::invalid_argument("pearson: zero variance");
  return (xc * yc).sum() / (sx * sy);
}

/// Average ranks (ties share the mean rank), then Pearson.
inline Eigen::VectorXd average_ranks(const Eigen::VectorXd& v) {
  const auto n = static_cast<int>(v.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return v(a) < v(b); });
  Eigen::VectorXd ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) ==
                            v(order[static_cast<std::size_t>(i)]))
      ++j;
    const double avg = (i + j) / 2.0 + 1.0;
    for (int k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)]) = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return pearson(average_ranks(x), average_ranks(y));
}

// --- moving block bootstrap ---

/// Each replicate concatenates ceil(n/block) contiguous blocks with uniform
/// random starts, truncated to length n.
inline std::vector<std::vector<int>> moving_block_bootstrap_indices(
    int n, int block, int n_boot, std::uint64_t seed) {
  if (block < 1 || n < block)
    throw std::invalid_argument("block bootstrap: need n >= block >= 1");
  Rng rng(seed ^ 0xb10c5ULL);
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(n_boot));
  const int n_blocks = (n + block - 1) / block;
  for (int b = 0; b < n_boot; ++b) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(n_blocks * block));
    for (int k = 0; k < n_blocks; ++k) {
      const int start =
          static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n - block + 1)));
      for (int i = 0; i < block && static_cast<int>(idx.size()) < n; ++i)
        idx.push_back(start + i);
    }
    out.push_back(std::move(idx));
  }
  return out;
}

inline std::vector<std::vector<double>> moving_block_bootstrap(
    const std::vector<double>& series, int block, int n_boot,
    std::uint64_t seed) {
  const auto plans = moving_block_bootstrap_indices(
      static_cast<int>(series.size()), block, n_boot, seed);
  std::vector<std::vector<double>> out;
  out.reserve(plans.size());
  for (const auto& idx : plans) {
    std::vector<double> rep;
    rep.reserve(idx.size());
    for (int i : idx) rep.push_back(series[static_cast<std::size_t>(i)]);
    out.push_back(std::move(rep));
  }
  return out;
}

/// Mean MIC between the per-cell predictor and target series over jointly
/// block-bootstrapped replicates.
inline std::vector<double> mic_map(const Eigen::MatrixXd& predictor,
                                   const Eigen::MatrixXd& target, int block,
                                   int n_boot, std::uint64_t seed,
                                   unsigned jobs = 1) {
  if (predictor.rows() != target.rows() || predictor.cols() != target.cols())
    throw std::invalid_argument("mic_map: shape mismatch");
  const auto G = static_cast<std::size_t>(predictor.cols());
  const int n = static_cast<int>(predictor.rows());
  std::vector<double> out(G, 0.0);
  parallel_for(
      G,
      [&](std::size_t g) {
        const auto plans = moving_block_bootstrap_indices(
            n, block, n_boot, seed ^ (g * 0x9e3779b97f4a7c15ULL));
        double total = 0.0;
        for (const auto& idx : plans) {
          Eigen::VectorXd xs(n), ys(n);
          for (int i = 0; i < n; ++i) {
            xs(i) = predictor(idx[static_cast<std::size_t>(i)],
                              static_cast<Eigen::Index>(g));
            ys(i) = target(idx[static_cast<std::size_t>(i)],
                           static_cast<Eigen::Index>(g));
          }
          total += mic(xs, ys).mic;
        }
        out[g] = total / static_cast<double>(n_boot);
      },
      jobs);
  return out;
}

// --- grouped feature importance ---

/// The nine covariate groups of the one-day feature block: one 10-PC block
/// per gridded variable plus one block holding all eight indices.
inline std::vector<std::string> feature_group_names() {
  std::vector<std::string> names(kFieldNames.begin(), kFieldNames.end());
  names.push_back("indices");
  return names;
}

inline std::vector<std::vector<int>> feature_groups() {
  std::vector<std::vector<int>> groups;
  for (std::size_t v = 0; v < kFieldNames.size(); ++v) {
    std::vector<int> cols;
    for (int k = 0; k < kPcPerField; ++k)
      cols.push_back(static_cast<int>(v) * kPcPerField + k);
    groups.push_back(cols);
  }
  std::vector<int> idx;
  for (int c = 80; c < kFeatureWidth; ++c) idx.push_back(c);
  groups.push_back(idx);
  return groups;
}

struct ImportanceTable {
  std::string method;  // gain | nonzero-count | shapley
  std::vector<std::string> group_names = feature_group_names();
  std::vector<double> scores;

  int top_group() const {
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                            scores.begin());
  }
};

/// Count rows with any nonzero coefficient per group, averaged over models.
inline ImportanceTable nonzero_importance(
    const std::vector<MultitaskLassoModel>& models) {
  ImportanceTable table;
  table.method = "nonzero-count";
  const auto groups = feature_groups();
  table.scores.assign(groups.size(), 0.0);
  if (models.empty()) return table;
  for (const auto& m : models) {
    if (m.theta.rows() != kFeatureWidth)
      throw std::invalid_argument(
          "nonzero_importance expects one-day models with 88 rows");
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
      for (int col : groups[gi])
        if (m.theta.row(col).norm() > 0) table.scores[gi] += 1.0;
  }
  for (auto& s : table.scores) s /= static_cast<double>(models.size());
  return table;
}

/// Mean per-feature gain within each group, averaged over models.
inline ImportanceTable grouped_gain_importance(
    const std::vector<Eigen::VectorXd>& per_model_feature_gains) {
  ImportanceTable table;
  table.method = "gain";
  const auto groups = feature_groups();
  table.scores.assign(groups.size(), 0.0);
  if (per_model_feature_gains.empty()) return table;
  for (const auto& gains : per_model_feature_gains) {
    if (gains.size() != kFeatureWidth)
      throw std::invalid_argument("grouped gain expects 88 feature scores");
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      double sum = 0.0;
      for (int col : groups[gi]) sum += gains(col);
      table.scores[gi] += sum / static_cast<double>(groups[gi].size());
    }
  }
  for (auto& s : table.scores)
    s /= static_cast<double>(per_model_feature_gains.size());
  return table;
}

// --- Shapley values over feature groups ---

struct ShapleyResult {
  std::vector<double> values;
  std::vector<std::string> warnings;  // subsets whose evaluation failed
};

/// Exact Shapley values by full subset enumeration (n_groups <= 12). The
/// skill functional receives the sorted member list of each subset; a throw
/// marks that subset failed and every pair touching it is skipped.
inline ShapleyResult shapley_exact(
    int n_groups,
    const std::function<double(const std::vector<int>&)>& skill) {
  if (n_groups < 1 || n_groups > 12)
    throw std::invalid_argument("shapley_exact: need 1..12 groups");
  const std::size_t n_subsets = std::size_t{1} << n_groups;
  std::vector<std::optional<double>> value(n_subsets);
  ShapleyResult result;
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    std::vector<int> members;
    for (int g = 0; g < n_groups; ++g)
      if (mask & (std::size_t{1} << g)) members.push_back(g);
    try {
      value[mask] = skill(members);
    } catch (const std::exception& e) {
      result.warnings.push_back("subset " + std::to_string(mask) +
                                " failed: " + e.what());
    }
  }

  std::vector<double> fact(static_cast<std::size_t>(n_groups + 1), 1.0);
  for (int i = 1; i <= n_groups; ++i)
    fact[static_cast<std::size_t>(i)] = fact[static_cast<std::size_t>(i - 1)] * i;

  result.values.assign(static_cast<std::size_t>(n_groups), 0.0);
  for (int g = 0; g < n_groups; ++g) {
    const std::size_t bit = std::size_t{1} << g;
    for (std::size_t mask = 0; mask < n_subsets; ++mask) {
      if (mask & bit) continue;
      if (!value[mask] || !value[mask | bit]) continue;
      const int s = static_cast<int>(std::popcount(mask));
      const double w = fact[static_cast<std::size_t>(s)] *
                       fact[static_cast<std::size_t>(n_groups - s - 1)] /
                       fact[static_cast<std::size_t>(n_groups)];
      result.values[static_cast<std::size_t>(g)] +=
          w * (*value[mask | bit] - *value[mask]);
    }
  }
  return result;
}

/// Monte Carlo Shapley: average marginal contributions over seeded random
/// permutations.
inline ShapleyResult shapley_monte_carlo(
    int n_groups, const std::function<double(const std::vector<int>&)>& skill,
    int n_permutations, std::uint64_t seed) {
  ShapleyResult result;
  result.values.assign(static_cast<std::size_t>(n_groups), 0.0);
  Rng rng(seed ^ 0x5a9ULL);
  std::vector<int> perm(static_cast<std::size_t>(n_groups));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> counts(static_cast<std::size_t>(n_groups), 0);
  for (int p = 0; p < n_permutations; ++p) {
    rng.shuffle(perm);
    std::vector<int> members;
    double prev;
    try {
      prev = skill({});
    } catch (const std::exception& e) {
      result.warnings.push_back(std::string("empty set failed: ") + e.what());
      continue;
    }
    for (int g : perm) {
      members.push_back(g);
      std::sort(members.begin(), members.end());
      try {
        const double v = skill(members);
        result.values[static_cast<std::size_t>(g)] += v - prev;
        ++counts[static_cast<std::size_t>(g)];
        prev = v;
      } catch (const std::exception& e) {
        result.warnings.push_back("permutation subset failed: " +
                                  std::string(e.what()));
        break;
      }
    }
  }
  for (std::size_t g = 0; g < result.values.size(); ++g)
    if (counts[g] > 0) result.values[g] /= static_cast<double>(counts[g]);
  return result;
}

/// Shapley importance of the nine covariate groups for the multitask Lasso:
/// each subset retrains at a fixed lambda on the training rows and is scored
/// by mean spatial cosine on the validation rows. The standardised Gram
/// products are computed once and sliced per subset, which keeps the 512
/// exact-mode retrains cheap.
inline ImportanceTable lasso_shapley_importance(const Eigen::MatrixXd& Xtr,
                                                const Eigen::MatrixXd& Ytr,
                                                const Eigen::MatrixXd& Xval,
                                                const Eigen::MatrixXd& Yval,
                                                double lambda) {
  const auto groups = feature_groups();
  const auto n = Xtr.rows();
  const auto p = Xtr.cols();
  const auto G = Ytr.cols();

  // shared standardisation and Gram products
  const Eigen::RowVectorXd xmean = Xtr.colwise().mean();
  Eigen::MatrixXd Xs = Xtr.rowwise() - xmean;
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt(Xs.col(j).squaredNorm() / static_cast<double>(n));
    scale(j) = sd > 1e-12 ? sd : 1.0;
    Xs.col(j) /= scale(j);
  }
  const Eigen::RowVectorXd ymean = Ytr.colwise().mean();
  const Eigen::MatrixXd Yc = Ytr.rowwise() - ymean;
  const Eigen::MatrixXd S = Xs.transpose() * Xs / static_cast<double>(n);
  const Eigen::MatrixXd R = Xs.transpose() * Yc / static_cast<double>(n);
  Eigen::MatrixXd Vs = Xval.rowwise() - xmean;
  for (Eigen::Index j = 0; j < p; ++j) Vs.col(j) /= scale(j);

  auto skill = [&](const std::vector<int>& members) {
    std::vector<int> cols;
    for (int g : members)
      cols.insert(cols.end(), groups[static_cast<std::size_t>(g)].begin(),
                  groups[static_cast<std::size_t>(g)].end());
    Eigen::MatrixXd pred;
    if (cols.empty()) {
      pred = ymean.replicate(Xval.rows(), 1);
    } else {
      const auto ps = static_cast<Eigen::Index>(cols.size());
      Eigen::MatrixXd Ss(ps, ps);
      Eigen::MatrixXd Rs(ps, G);
      for (Eigen::Index a = 0; a < ps; ++a) {
        Rs.row(a) = R.row(cols[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < ps; ++b)
          Ss(a, b) = S(cols[static_cast<std::size_t>(a)],
                       cols[static_cast<std::size_t>(b)]);
      }
      // block coordinate descent on the sliced Gram system
      Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(ps, G);
      Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(ps, G);
      for (int sweep = 0; sweep < 2000; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < ps; ++j) {
          const Eigen::RowVectorXd u = Rs.row(j) - Q.row(j) + theta.row(j);
          const double norm = u.norm();
          const Eigen::RowVectorXd updated =
              norm <= lambda ? Eigen::RowVectorXd::Zero(G).eval()
                             : (u * (1.0 - lambda / norm)).eval();
          const Eigen::RowVectorXd delta = updated - theta.row(j);
          const double change = delta.cwiseAbs().maxCoeff();
          if (change > 0.0) {
            Q.noalias() += Ss.col(j) * delta;
            theta.row(j) = updated;
            max_change = std::max(max_change, change);
          }
        }
        if (max_change < 1e-8) break;
      }
      Eigen::MatrixXd Vsub(Xval.rows(), ps);
      for (Eigen::Index a = 0; a < ps; ++a)
        Vsub.col(a) = Vs.col(cols[static_cast<std::size_t>(a)]);
      pred = (Vsub * theta).rowwise() + ymean;
    }
    double total = 0.0;
    int counted = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double nb = Yval.row(i).norm();
      if (nb < 1e-12) continue;
      const double na = pred.row(i).norm();
      total += na < 1e-12 ? 0.0 : pred.row(i).dot(Yval.row(i)) / (na * nb);
      ++counted;
    }
    return counted > 0 ? total / counted : 0.0;
  };
  const auto shap = shapley_exact(static_cast<int>(groups.size()), skill);
  ImportanceTable table;
  table.method = "shapley";
  table.scores = shap.values;
  return table;
}

// --- CSV / SVG emission ---

inline void save_importance_csv(const std::vector<ImportanceTable>& tables,
                                const std::string& path,
                                const std::string& stamp = "") {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  if (!stamp.empty()) out << "# " << stamp << "\n";
  out << "group,score,method\n";
  char buf[48];
  for (const auto& t : tables)
    for (std::size_t g = 0; g < t.scores.size(); ++g) {
      std::snprintf(buf, sizeof buf, "%.17g", t.scores[g]);
      out << t.group_names[g] << "," << buf << "," << t.method << "\n";
    }
}

inline void save_cell_map_csv(const LatLonGrid& grid,
                              const std::vector<int>& cells,
                              const std::vector<double>& values,
                              const std::string& path,
                              const std::string& stamp = "") {
  if (cells.size() != values.size())
    throw std::invalid_argument("cell map: size mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  if (!stamp.empty()) out << "# " << stamp << "\n";
  out << "lat,lon,value\n";
  char buf[72];
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto c = grid.cell_of(cells[i]);
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.17g", grid.lat(c.row),
                  grid.lon(c.col), values[i]);
    out << buf << "\n";
  }
}

/// Self-contained SVG heat map with a diverging scale pinned to [-1, 1]:
/// brown for negative, white at zero, green for positive.
inline std::string svg_heat_map(const LatLonGrid& grid,
                                const std::vector<int>& cells,
                                const std::vector<double>& values,
                                const std::string& title) {
  const int cell_px = 24, legend = 46, margin = 8, title_px = 22;
  const int w = grid.n_lon * cell_px + 2 * margin;
  const int h = grid.n_lat * cell_px + 2 * margin + title_px + legend;
  std::string svg;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                w, h, w, h);
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"13\">%s</text>\n",
                margin, margin + 12, title.c_str());
  svg += buf;
  auto color = [](double v) {
    v = std::clamp(v, -1.0, 1.0);
    int r, g, b;
    if (v >= 0) {  // white -> green
      r = static_cast<int>(245 - 215 * v);
      g = static_cast<int>(245 - 115 * v);
      b = static_cast<int>(245 - 195 * v);
    } else {  // white -> brown
      r = static_cast<int>(245 - 105 * -v);
      g = static_cast<int>(245 - 160 * -v);
      b = static_cast<int>(245 - 215 * -v);
    }
    char c[8];
    std::snprintf(c, sizeof c, "#%02x%02x%02x", r, g, b);
    return std::string(c);
  };
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto c = grid.cell_of(cells[i]);
    // northmost row on top
    const int px = margin + c.col * cell_px;
    const int py = margin + title_px + (grid.n_lat - 1 - c.row) * cell_px;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                  "fill=\"%s\"><title>lat %.2f lon %.2f: %.4f</title></rect>\n",
                  px, py, cell_px, cell_px, color(values[i]).c_str(),
                  grid.lat(c.row), grid.lon(c.col), values[i]);
    svg += buf;
  }
  // legend: -1 .. 1 ramp
  const int ly = margin + title_px + grid.n_lat * cell_px + 10;
  for (int i = 0; i < 20; ++i) {
    const double v = -1.0 + 2.0 * i / 19.0;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"12\" "
                  "fill=\"%s\"/>\n",
                  margin + i * 10, ly, 10, color(v).c_str());
    svg += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"10\">-1</text>\n<text x=\"%d\" y=\"%d\" "
                "font-family=\"sans-serif\" font-size=\"10\">+1</text>\n",
                margin, ly + 24, margin + 190, ly + 24);
  svg += buf;
  svg += "</svg>\n";
  return svg;
}

}  // namespace ssf
