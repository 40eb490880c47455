#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssf/util.hpp"

namespace ssf {

struct GbtParams {
  double eta = 0.1;          // shrinkage in (0, 1]
  int max_depth = 4;
  int n_rounds = 200;
  double lambda = 1.0;       // leaf L2
  double gamma = 0.0;        // split penalty
  double min_child_weight = 1.0;
  double subsample = 0.8;    // row fraction per round, without replacement
  std::uint64_t seed = 0;

  void validate() const {
    if (!(eta > 0 && eta <= 1)) throw std::invalid_argument("gbt: bad eta");
    if (max_depth < 0) throw std::invalid_argument("gbt: bad max_depth");
    if (n_rounds < 0) throw std::invalid_argument("gbt: bad n_rounds");
    if (lambda < 0) throw std::invalid_argument("gbt: bad lambda");
    if (gamma < 0) throw std::invalid_argument("gbt: bad gamma");
    if (!(subsample > 0 && subsample <= 1))
      throw std::invalid_argument("gbt: bad subsample");
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  bool default_left = false;  // where missing values go
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf value before shrinkage
  double gain = 0.0;    // split gain (gamma already subtracted)
};

struct Tree {
  std::vector<TreeNode> nodes;

  double eval(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int id = 0;
    while (nodes[static_cast<std::size_t>(id)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(id)];
      const double v = x(nd.feature);
      if (std::isnan(v))
        id = nd.default_left ? nd.left : nd.right;
      else
        id = v < nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(id)].weight;
  }
};

struct TreeEnsemble {
  double base_score = 0.0;
  double eta = 0.1;
  int n_features = 0;
  std::vector<Tree> trees;
  std::vector<double> train_mse_history;  // full-data MSE after each round

  int n_rounds() const { return static_cast<int>(trees.size()); }

  /// First r rounds of the ensemble.
  TreeEnsemble truncated(int r) const {
    TreeEnsemble out = *this;
    if (r < static_cast<int>(out.trees.size())) {
      out.trees.resize(static_cast<std::size_t>(std::max(r, 0)));
      out.train_mse_history.resize(out.trees.size());
    }
    return out;
  }
};

namespace gbt_detail {

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = false;
  bool valid = false;
};

inline double leaf_objective(double g, double h, double lambda) {
  return g * g / (h + lambda);
}

/// Exact greedy split search over the given rows. Features are scanned in
/// order and candidate thresholds ascending; ties keep the first candidate
/// (missing-to-right evaluated before missing-to-left).
inline SplitChoice best_split(const Eigen::MatrixXd& X,
                              const std::vector<double>& grad,
                              const std::vector<int>& rows,
                              const std::vector<std::vector<int>>& sorted_rows,
                              const std::vector<char>& in_node,
                              const GbtParams& params) {
  SplitChoice best;
  double g_all = 0.0;
  for (int r : rows) g_all += grad[static_cast<std::size_t>(r)];
  const double h_all = static_cast<double>(rows.size());
  const double parent = leaf_objective(g_all, h_all, params.lambda);

  for (int j = 0; j < X.cols(); ++j) {
    double g_miss = 0.0, h_miss = 0.0;
    for (int r : rows)
      if (std::isnan(X(r, j))) {
        g_miss += grad[static_cast<std::size_t>(r)];
        h_miss += 1.0;
      }
    double gl = 0.0, hl = 0.0;
    double last = 0.0;
    bool have_last = false;
    for (int r : sorted_rows[static_cast<std::size_t>(j)]) {
      if (!in_node[static_cast<std::size_t>(r)]) continue;
      const double v = X(r, j);
      if (std::isnan(v)) continue;
      if (have_last && v > last) {
        const double thr = last + 0.5 * (v - last);
        // missing to the right, then missing to the left
        for (int dir = 0; dir < 2; ++dir) {
          const double gL = dir == 0 ? gl : gl + g_miss;
          const double hL = dir == 0 ? hl : hl + h_miss;
          const double gR = g_all - gL;
          const double hR = h_all - hL;
          if (hL < params.min_child_weight || hR < params.min_child_weight)
            continue;
          const double gain =
              0.5 * (leaf_objective(gL, hL, params.lambda) +
                     leaf_objective(gR, hR, params.lambda) - parent) -
              params.gamma;
          if (gain > best.gain) {
            best.gain = gain;
            best.feature = j;
            best.threshold = thr;
            best.default_left = dir == 1;
            best.valid = true;
          }
        }
      }
      gl += grad[static_cast<std::size_t>(r)];
      hl += 1.0;
      last = v;
      have_last = true;
    }
  }
  return best;
}

inline void grow_node(Tree& tree, int node_id, const Eigen::MatrixXd& X,
                      const std::vector<double>& grad, std::vector<int>& rows,
                      const std::vector<std::vector<int>>& sorted_rows,
                      std::vector<char>& in_node, int depth,
                      const GbtParams& params) {
  double g = 0.0;
  for (int r : rows) g += grad[static_cast<std::size_t>(r)];
  const double h = static_cast<double>(rows.size());

  auto make_leaf = [&] {
    tree.nodes[static_cast<std::size_t>(node_id)].feature = -1;
    tree.nodes[static_cast<std::size_t>(node_id)].weight =
        h + params.lambda > 0 ? -g / (h + params.lambda) : 0.0;
  };
  if (depth >= params.max_depth || rows.size() < 2) {
    make_leaf();
    return;
  }
  for (int r : rows) in_node[static_cast<std::size_t>(r)] = 1;
  const SplitChoice split =
      best_split(X, grad, rows, sorted_rows, in_node, params);
  for (int r : rows) in_node[static_cast<std::size_t>(r)] = 0;
  if (!split.valid || split.gain <= 0.0) {
    make_leaf();
    return;
  }

  std::vector<int> left_rows, right_rows;
  for (int r : rows) {
    const double v = X(r, split.feature);
    const bool go_left =
        std::isnan(v) ? split.default_left : v < split.threshold;
    (go_left ? left_rows : right_rows).push_back(r);
  }
  rows.clear();
  rows.shrink_to_fit();

  const int left_id = static_cast<int>(tree.nodes.size());
  const int right_id = left_id + 1;
  tree.nodes.emplace_back();
  tree.nodes.emplace_back();
  auto& nd = tree.nodes[static_cast<std::size_t>(node_id)];
  nd.feature = split.feature;
  nd.threshold = split.threshold;
  nd.default_left = split.default_left;
  nd.gain = split.gain;
  nd.left = left_id;
  nd.right = right_id;
  grow_node(tree, left_id, X, grad, left_rows, sorted_rows, in_node, depth + 1,
            params);
  grow_node(tree, right_id, X, grad, right_rows, sorted_rows, in_node,
            depth + 1, params);
}

}  // namespace gbt_detail

/// Squared-error gradient boosting with exact greedy splits. Gradients are
/// g_i = pred_i - y_i with unit hessians; leaves carry -G/(H+lambda) and the
/// prediction moves by eta times the new tree.
inline TreeEnsemble fit_gbt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const GbtParams& params,
                            const Eigen::MatrixXd* X_eval = nullptr,
                            std::vector<Eigen::VectorXd>* eval_history = nullptr) {
  params.validate();
  if (X.rows() != y.size()) throw std::invalid_argument("gbt: row mismatch");
  if (X.rows() < 2) throw std::invalid_argument("gbt: need n >= 2");
  if (!y.allFinite()) throw NumericError("gbt: non-finite targets");
  for (Eigen::Index i = 0; i < X.size(); ++i)
    if (std::isinf(X.data()[i])) throw NumericError("gbt: infinite feature");

  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());

  TreeEnsemble ens;
  ens.eta = params.eta;
  ens.n_features = p;
  ens.base_score = y.mean();

  // one global sort per feature; NaNs go last and are skipped by the scan
  std::vector<std::vector<int>> sorted_rows(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    auto& order = sorted_rows[static_cast<std::size_t>(j)];
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double va = X(a, j), vb = X(b, j);
      const bool na = std::isnan(va), nb = std::isnan(vb);
      if (na != nb) return nb;  // NaNs last
      if (na && nb) return a < b;
      if (va != vb) return va < vb;
      return a < b;
    });
  }

  Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, ens.base_score);
  Eigen::VectorXd eval_pred;
  if (X_eval != nullptr)
    eval_pred = Eigen::VectorXd::Constant(X_eval->rows(), ens.base_score);

  Rng rng(params.seed);
  std::vector<char> in_node(static_cast<std::size_t>(n), 0);
  std::vector<double> grad(static_cast<std::size_t>(n));

  for (int round = 0; round < params.n_rounds; ++round) {
    for (int i = 0; i < n; ++i)
      grad[static_cast<std::size_t>(i)] = pred(i) - y(i);

    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    if (params.subsample < 1.0) {
      rng.shuffle(rows);
      const auto keep = static_cast<std::size_t>(
          std::max<double>(2.0, std::floor(params.subsample * n)));
      rows.resize(keep);
      std::sort(rows.begin(), rows.end());
    }

    Tree tree;
    tree.nodes.emplace_back();
    gbt_detail::grow_node(tree, 0, X, grad, rows, sorted_rows, in_node, 0,
                          params);
    for (int i = 0; i < n; ++i) pred(i) += params.eta * tree.eval(X.row(i));
    if (X_eval != nullptr) {
      for (Eigen::Index i = 0; i < X_eval->rows(); ++i)
        eval_pred(i) += params.eta * tree.eval(X_eval->row(i));
      if (eval_history != nullptr) eval_history->push_back(eval_pred);
    }
    ens.trees.push_back(std::move(tree));
    ens.train_mse_history.push_back((pred - y).squaredNorm() / n);
  }
  return ens;
}

inline Eigen::VectorXd predict_gbt(const TreeEnsemble& ens,
                                   const Eigen::MatrixXd& X) {
  if (ens.n_features > 0 && X.cols() != ens.n_features)
    throw std::invalid_argument("gbt predict: feature count mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), ens.base_score);
  for (const auto& tree : ens.trees)
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i) += ens.eta * tree.eval(X.row(i));
  return out;
}

/// Mean split gain per feature over all nodes that split on it; features
/// never used score zero.
inline Eigen::VectorXd gain_importance(const TreeEnsemble& ens, int n_features) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n_features);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n_features);
  for (const auto& tree : ens.trees)
    for (const auto& nd : tree.nodes)
      if (nd.feature >= 0) {
        if (nd.feature >= n_features)
          throw std::invalid_argument("gain_importance: feature out of range");
        total(nd.feature) += nd.gain;
        count(nd.feature) += 1.0;
      }
  for (int j = 0; j < n_features; ++j)
    if (count(j) > 0) total(j) /= count(j);
  return total;
}

// --- JSON tree dump ---

inline nlohmann::json ensemble_to_json(const TreeEnsemble& ens) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : ens.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      const auto& nd = tree.nodes[id];
      nodes.push_back({{"id", id},
                       {"feature", nd.feature},
                       {"threshold", nd.threshold},
                       {"default_left", nd.default_left},
                       {"left", nd.left},
                       {"right", nd.right},
                       {"weight", nd.weight},
                       {"gain", nd.gain}});
    }
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return {{"base_score", ens.base_score},
          {"eta", ens.eta},
          {"n_features", ens.n_features},
          {"trees", std::move(trees)}};
}

inline TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
  TreeEnsemble ens;
  ens.base_score = j.at("base_score").get<double>();
  ens.eta = j.at("eta").get<double>();
  ens.n_features = j.value("n_features", 0);
  for (const auto& jt : j.at("trees")) {
    Tree tree;
    for (const auto& jn : jt.at("nodes")) {
      TreeNode nd;
      nd.feature = jn.at("feature").get<int>();
      nd.threshold = jn.at("threshold").get<double>();
      nd.default_left = jn.at("default_left").get<bool>();
      nd.left = jn.at("left").get<int>();
      nd.right = jn.at("right").get<int>();
      nd.weight = jn.at("weight").get<double>();
      nd.gain = jn.at("gain").get<double>();
      tree.nodes.push_back(nd);
    }
    ens.trees.push_back(std::move(tree));
  }
  return ens;
}

}  // namespace ssf
