#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "ssf/timegrid.hpp"
#include "ssf/util.hpp"

namespace ssf {

/// Spatial cosine similarity between two location vectors; 0 when either
/// norm falls under the floor.
inline double cosine_similarity(const Eigen::VectorXd& a,
                                const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return a.dot(b) / (na * nb);
}

// --- ordinary least squares (shared backbone for the simple baselines) ---

struct LinearFit {
  Eigen::MatrixXd slopes;     // p x G
  Eigen::VectorXd intercept;  // G
};

/// Multi-output OLS with a tiny ridge floor for conditioning. Solves the
/// centered normal equations, one shared design for all G outputs.
inline LinearFit ols_multi(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                           double ridge = 1e-10) {
  if (X.rows() != Y.rows()) throw std::invalid_argument("ols: row mismatch");
  if (X.rows() < 2) throw std::invalid_argument("ols: need at least 2 rows");
  const auto n = X.rows();
  const Eigen::RowVectorXd xm = X.colwise().mean();
  const Eigen::RowVectorXd ym = Y.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - xm;
  const Eigen::MatrixXd Yc = Y.rowwise() - ym;
  Eigen::MatrixXd S = Xc.transpose() * Xc / static_cast<double>(n);
  S.diagonal().array() += ridge;
  const Eigen::MatrixXd R = Xc.transpose() * Yc / static_cast<double>(n);
  LinearFit fit;
  fit.slopes = S.ldlt().solve(R);
  if (!fit.slopes.allFinite())
    throw NumericError("ols: rank deficiency beyond the ridge floor");
  fit.intercept = (ym - xm * fit.slopes).transpose();
  return fit;
}

inline Eigen::MatrixXd predict_linear_fit(const LinearFit& fit,
                                          const Eigen::MatrixXd& X) {
  if (X.cols() != fit.slopes.rows())
    throw std::invalid_argument("predict: column count mismatch");
  return (X * fit.slopes).rowwise() + fit.intercept.transpose();
}

// --- multitask Lasso ---

struct LassoOptions {
  int max_sweeps = 10000;
  double tol = 1e-8;       // max row change per sweep
  double kkt_tol = 1e-6;   // keep sweeping until the KKT residual clears this
  bool track_objective = true;
};

/// L21-penalised multitask regression: rows of theta are zero or dense as a
/// block. Coefficients are stored on the original feature scale.
struct MultitaskLassoModel {
  Eigen::MatrixXd theta;      // p x G
  Eigen::VectorXd intercept;  // G
  double lambda = 0.0;
  Eigen::VectorXd feat_mean;   // fit-time standardisation, per column
  Eigen::VectorXd feat_scale;
  bool converged = false;
  double kkt_residual = 0.0;
  int sweeps = 0;
  std::vector<double> objective_history;  // standardised objective per sweep

  int nonzero_rows() const {
    int count = 0;
    for (Eigen::Index j = 0; j < theta.rows(); ++j)
      if (theta.row(j).norm() > 0) ++count;
    return count;
  }
};

/// Precomputed Gram quantities for one design; lets a lambda path reuse the
/// expensive products and warm-start each solve.
class LassoWorkspace {
 public:
  LassoWorkspace(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    if (X.rows() != Y.rows())
      throw std::invalid_argument("lasso: row mismatch");
    if (X.rows() < 2) throw std::invalid_argument("lasso: need n >= 2");
    if (!X.allFinite() || !Y.allFinite())
      throw NumericError("lasso: non-finite inputs");
    n_ = X.rows();
    p_ = X.cols();
    g_ = Y.cols();
    mean_ = X.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - mean_;
    scale_.resize(p_);
    for (Eigen::Index j = 0; j < p_; ++j) {
      const double sd = std::sqrt(Xc.col(j).squaredNorm() / static_cast<double>(n_));
      scale_(j) = sd > 1e-12 ? sd : 1.0;
      Xc.col(j) /= scale_(j);
    }
    ymean_ = Y.colwise().mean();
    const Eigen::MatrixXd Yc = Y.rowwise() - ymean_;
    S_ = Xc.transpose() * Xc / static_cast<double>(n_);
    R_ = Xc.transpose() * Yc / static_cast<double>(n_);
    yss_ = Yc.squaredNorm() / static_cast<double>(n_);
    theta_ = Eigen::MatrixXd::Zero(p_, g_);
  }

  double lambda_max() const {
    double best = 0.0;
    for (Eigen::Index j = 0; j < p_; ++j) best = std::max(best, R_.row(j).norm());
    return best;
  }

  /// Block coordinate descent from the current warm-start state.
  MultitaskLassoModel solve(double lambda, const LassoOptions& opt = {}) {
    if (lambda < 0) throw std::invalid_argument("lasso: negative lambda");
    Eigen::MatrixXd Q = S_ * theta_;
    MultitaskLassoModel model;
    model.lambda = lambda;
    int sweep = 0;
    bool row_converged = false;
    for (; sweep < opt.max_sweeps; ++sweep) {
      double max_change = 0.0;
      for (Eigen::Index j = 0; j < p_; ++j) {
        const Eigen::RowVectorXd u =
            R_.row(j) - Q.row(j) + theta_.row(j);  // S_jj == 1 by construction
        const double norm = u.norm();
        Eigen::RowVectorXd updated;
        if (norm <= lambda)
          updated = Eigen::RowVectorXd::Zero(g_);
        else
          updated = u * (1.0 - lambda / norm);
        const Eigen::RowVectorXd delta = updated - theta_.row(j);
        const double change = delta.cwiseAbs().maxCoeff();
        if (change > 0.0) {
          Q.noalias() += S_.col(j) * delta;
          theta_.row(j) = updated;
          max_change = std::max(max_change, change);
        }
      }
      if (opt.track_objective)
        model.objective_history.push_back(objective(lambda, Q));
      if (max_change < opt.tol) {
        row_converged = true;
        if (kkt(lambda, Q) <= opt.kkt_tol) break;
      }
    }
    model.sweeps = sweep + 1;
    model.kkt_residual = kkt(lambda, S_ * theta_);
    model.converged = row_converged && model.kkt_residual <= opt.kkt_tol * 10;
    // map back to the original feature scale
    model.feat_mean = mean_.transpose();
    model.feat_scale = scale_.transpose();
    model.theta = (theta_.array().colwise() / scale_.array()).matrix();
    model.intercept =
        (ymean_ - (mean_.array() / scale_.transpose().array()).matrix() * theta_)
            .transpose();
    return model;
  }

  int p() const { return static_cast<int>(p_); }

 private:
  double objective(double lambda, const Eigen::MatrixXd& Q) const {
    const double quad =
        0.5 * (yss_ - 2.0 * (theta_.array() * R_.array()).sum() +
               (theta_.array() * Q.array()).sum());
    double pen = 0.0;
    for (Eigen::Index j = 0; j < p_; ++j) pen += theta_.row(j).norm();
    return quad + lambda * pen;
  }

  double kkt(double lambda, const Eigen::MatrixXd& Q) const {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < p_; ++j) {
      const Eigen::RowVectorXd grad = R_.row(j) - Q.row(j);
      const double tnorm = theta_.row(j).norm();
      if (tnorm > 0) {
        worst = std::max(
            worst, (grad - lambda * theta_.row(j) / tnorm).norm());
      } else {
        worst = std::max(worst, std::max(0.0, grad.norm() - lambda));
      }
    }
    return worst;
  }

  Eigen::Index n_ = 0, p_ = 0, g_ = 0;
  Eigen::RowVectorXd mean_, ymean_;
  Eigen::VectorXd scale_;
  Eigen::MatrixXd S_, R_, theta_;
  double yss_ = 0.0;
};

inline double lasso_lambda_max(const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y) {
  return LassoWorkspace(X, Y).lambda_max();
}

inline MultitaskLassoModel fit_multitask_lasso(const Eigen::MatrixXd& X,
                                               const Eigen::MatrixXd& Y,
                                               double lambda,
                                               const LassoOptions& opt = {}) {
  LassoWorkspace ws(X, Y);
  return ws.solve(lambda, opt);
}

inline Eigen::MatrixXd predict_linear(const MultitaskLassoModel& m,
                                      const Eigen::MatrixXd& X) {
  if (X.cols() != m.theta.rows())
    throw std::invalid_argument("predict: column count mismatch");
  return (X * m.theta).rowwise() + m.intercept.transpose();
}

/// Descending-lambda path with warm starts; returns one model per lambda.
inline std::vector<MultitaskLassoModel> fit_lasso_path(
    const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
    const std::vector<double>& lambdas, const LassoOptions& opt = {}) {
  LassoWorkspace ws(X, Y);
  std::vector<MultitaskLassoModel> out;
  out.reserve(lambdas.size());
  for (double l : lambdas) out.push_back(ws.solve(l, opt));
  return out;
}

/// 20-point logarithmic grid from lambda_max down to lambda_max / 1000.
inline std::vector<double> default_lambda_grid(double lambda_max,
                                               int points = 20,
                                               double span = 1000.0) {
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double f = static_cast<double>(i) / (points - 1);
    grid.push_back(lambda_max * std::pow(span, -f));
  }
  return grid;
}

// --- least-squares index baseline ---

/// Per-location OLS on the climate-index block at the target date.
inline LinearFit fit_ls_indices(const Eigen::MatrixXd& X_indices,
                                const Eigen::MatrixXd& Y) {
  if (X_indices.rows() <= X_indices.cols() + 1)
    throw std::invalid_argument("ls_indices: need n > p + 1 samples");
  return ols_multi(X_indices, Y);
}

// --- damped persistence ---

/// First-order autoregression: per location, y regressed on that location's
/// own week -2 & -1 anomaly.
struct DampedPersistenceModel {
  Eigen::VectorXd alpha;      // G
  Eigen::VectorXd intercept;  // G
};

inline DampedPersistenceModel fit_damped_persistence(
    const Eigen::MatrixXd& anom, const Eigen::MatrixXd& Y) {
  if (anom.rows() != Y.rows() || anom.cols() != Y.cols())
    throw std::invalid_argument("damped: shape mismatch");
  if (anom.rows() < 3) throw std::invalid_argument("damped: need n >= 3");
  const auto n = anom.rows();
  const auto g = anom.cols();
  DampedPersistenceModel m;
  m.alpha.resize(g);
  m.intercept.resize(g);
  for (Eigen::Index j = 0; j < g; ++j) {
    const double xm = anom.col(j).mean();
    const double ym = Y.col(j).mean();
    const double sxx = (anom.col(j).array() - xm).square().sum();
    if (sxx / static_cast<double>(n) < 1e-24) {
      m.alpha(j) = 0.0;  // constant anomaly: fall back to the mean
      m.intercept(j) = ym;
      continue;
    }
    const double sxy =
        ((anom.col(j).array() - xm) * (Y.col(j).array() - ym)).sum();
    m.alpha(j) = sxy / sxx;
    m.intercept(j) = ym - m.alpha(j) * xm;
  }
  return m;
}

inline Eigen::MatrixXd predict_damped(const DampedPersistenceModel& m,
                                      const Eigen::MatrixXd& anom) {
  if (anom.cols() != m.alpha.size())
    throw std::invalid_argument("damped predict: shape mismatch");
  return (anom.array().rowwise() * m.alpha.transpose().array()).matrix()
             .rowwise() +
         m.intercept.transpose();
}

// --- MultiLLR ---

struct MultiLlrModel {
  std::vector<int> selected;  // surviving predictor columns
  LinearFit fit;              // over the selected columns
  double validation_skill = 0.0;
};

struct MultiLlrFolds {
  std::vector<std::vector<int>> train_rows;
  std::vector<std::vector<int>> val_rows;
};

namespace detail {

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M,
                                 const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
  return out;
}

inline Eigen::MatrixXd take_cols(const Eigen::MatrixXd& M,
                                 const std::vector<int>& cols) {
  Eigen::MatrixXd out(M.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = M.col(cols[j]);
  return out;
}

inline double mean_spatial_cosine(const Eigen::MatrixXd& pred,
                                  const Eigen::MatrixXd& truth) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    total += cosine_similarity(pred.row(i).transpose(), truth.row(i).transpose());
  return pred.rows() > 0 ? total / static_cast<double>(pred.rows()) : 0.0;
}

}  // namespace detail

/// Backward elimination over candidate predictors scored by mean spatial
/// cosine on held-out folds; survivors get an unweighted least-squares fit
/// on the full pool.
inline MultiLlrModel fit_multillr(const Eigen::MatrixXd& X,
                                  const Eigen::MatrixXd& Y,
                                  const MultiLlrFolds& folds,
                                  const std::vector<int>& final_rows,
                                  int max_eliminations = -1) {
  if (X.cols() < 2)
    throw std::invalid_argument("multillr: need at least 2 candidates");
  if (folds.train_rows.size() != folds.val_rows.size() || folds.train_rows.empty())
    throw std::invalid_argument("multillr: bad folds");
  if (final_rows.empty()) throw std::invalid_argument("multillr: empty pool");
  if (max_eliminations < 0) max_eliminations = static_cast<int>(X.cols());

  auto fold_skill = [&](const std::vector<int>& cols) {
    double total = 0.0;
    for (std::size_t f = 0; f < folds.train_rows.size(); ++f) {
      const auto Xtr = detail::take_cols(detail::take_rows(X, folds.train_rows[f]), cols);
      const auto Ytr = detail::take_rows(Y, folds.train_rows[f]);
      const auto Xva = detail::take_cols(detail::take_rows(X, folds.val_rows[f]), cols);
      const auto Yva = detail::take_rows(Y, folds.val_rows[f]);
      const auto fit = ols_multi(Xtr, Ytr);
      total += detail::mean_spatial_cosine(predict_linear_fit(fit, Xva), Yva);
    }
    return total / static_cast<double>(folds.train_rows.size());
  };

  std::vector<int> current(static_cast<std::size_t>(X.cols()));
  std::iota(current.begin(), current.end(), 0);
  double cur_skill = fold_skill(current);
  for (int round = 0; round < max_eliminations && current.size() > 1; ++round) {
    double best_skill = cur_skill;
    int best_drop = -1;
    for (std::size_t i = 0; i < current.size(); ++i) {
      std::vector<int> trial = current;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
      const double s = fold_skill(trial);
      if (s > best_skill) {
        best_skill = s;
        best_drop = static_cast<int>(i);
      }
    }
    if (best_drop < 0) break;  // no strict improvement
    current.erase(current.begin() + best_drop);
    cur_skill = best_skill;
  }

  MultiLlrModel model;
  model.selected = current;
  model.validation_skill = cur_skill;
  model.fit = ols_multi(detail::take_cols(detail::take_rows(X, final_rows), current),
                        detail::take_rows(Y, final_rows));
  return model;
}

inline Eigen::MatrixXd predict_multillr(const MultiLlrModel& m,
                                        const Eigen::MatrixXd& X) {
  return predict_linear_fit(m.fit, detail::take_cols(X, m.selected));
}

// --- AutoKNN ---

/// Daily target history with contiguous rows; the only input AutoKNN sees.
struct TargetHistory {
  Date start;
  Eigen::MatrixXd Y;  // n_dates x G

  int n() const { return static_cast<int>(Y.rows()); }
  bool covers(const Date& d) const {
    const auto off = days_between(start, d);
    return off >= 0 && off < Y.rows();
  }
  Eigen::Index row_of(const Date& d) const {
    const auto off = days_between(start, d);
    if (off < 0 || off >= Y.rows())
      throw DataError("target history does not cover " + to_iso(d));
    return static_cast<Eigen::Index>(off);
  }
};

struct AutoKnnModel {
  int similarity_history = 60;  // M
  int lag = 365;                // l
  int k = 20;
  std::vector<Date> neighbor_dates;   // the k most similar training dates
  std::vector<double> neighbor_sims;
  Eigen::MatrixXd weights;            // k x G, per-location lag regression
  Eigen::VectorXd intercept;          // G
  Eigen::VectorXd prediction;         // G at the target date
};

/// Average spatial cosine over an M-day window starting one lag before both
/// dates.
inline double autoknn_similarity(const TargetHistory& hist, const Date& t,
                                 const Date& target, int M, int lag) {
  double total = 0.0;
  for (int m = 0; m < M; ++m) {
    const auto a = hist.row_of(add_days(t, -lag - m));
    const auto b = hist.row_of(add_days(target, -lag - m));
    total += cosine_similarity(hist.Y.row(a).transpose(),
                               hist.Y.row(b).transpose());
  }
  return total / M;
}

/// Neighbor dates define autoregression lags (t* - t_j); per location the
/// target is regressed on its own values at those lags over the training
/// range, then evaluated at t*.
inline AutoKnnModel fit_autoknn(const TargetHistory& hist, const Date& target,
                                const Date& train_start, const Date& train_end,
                                int k, int M = 60, int lag = 365) {
  if (!(train_start <= train_end))
    throw std::invalid_argument("autoknn: empty training range");
  AutoKnnModel model;
  model.similarity_history = M;
  model.lag = lag;
  model.k = k;

  const Date sim_window_start = add_days(target, -lag - (M - 1));
  if (!hist.covers(sim_window_start))
    throw DataError("autoknn: history does not reach " + to_iso(sim_window_start));

  // candidate training dates whose own similarity window fits the history
  std::vector<std::pair<double, Date>> scored;
  for (auto d = serial_day(train_start); d <= serial_day(train_end); ++d) {
    const Date t = date_from_serial(d);
    if (!hist.covers(t)) continue;
    if (!hist.covers(add_days(t, -lag - (M - 1)))) continue;
    scored.emplace_back(autoknn_similarity(hist, t, target, M, lag), t);
  }
  if (static_cast<int>(scored.size()) < k)
    throw DataError("autoknn: fewer than k candidate dates");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  scored.resize(static_cast<std::size_t>(k));
  std::vector<std::int64_t> deltas;
  for (const auto& [sim, t] : scored) {
    model.neighbor_dates.push_back(t);
    model.neighbor_sims.push_back(sim);
    deltas.push_back(days_between(t, target));
  }

  // training samples: dates s in range whose lagged copies all exist
  std::vector<Eigen::Index> sample_rows;
  std::vector<std::vector<Eigen::Index>> lag_rows(static_cast<std::size_t>(k));
  for (auto d = serial_day(train_start); d <= serial_day(train_end); ++d) {
    const Date s = date_from_serial(d);
    if (!hist.covers(s)) continue;
    bool ok = true;
    for (auto delta : deltas)
      if (!hist.covers(add_days(s, -delta))) {
        ok = false;
        break;
      }
    if (!ok) continue;
    sample_rows.push_back(hist.row_of(s));
    for (std::size_t j = 0; j < deltas.size(); ++j)
      lag_rows[j].push_back(hist.row_of(add_days(s, -deltas[j])));
  }
  const auto n = static_cast<Eigen::Index>(sample_rows.size());
  if (n < k + 2) throw DataError("autoknn: too few regression samples");

  const auto G = hist.Y.cols();
  model.weights.resize(k, G);
  model.intercept.resize(G);
  model.prediction.resize(G);
  Eigen::MatrixXd Xg(n, k);
  Eigen::VectorXd yg(n);
  for (Eigen::Index g = 0; g < G; ++g) {
    for (Eigen::Index i = 0; i < n; ++i) {
      yg(i) = hist.Y(sample_rows[static_cast<std::size_t>(i)], g);
      for (int j = 0; j < k; ++j)
        Xg(i, j) = hist.Y(lag_rows[static_cast<std::size_t>(j)]
                                  [static_cast<std::size_t>(i)],
                          g);
    }
    const LinearFit fit = ols_multi(Xg, yg);
    model.weights.col(g) = fit.slopes.col(0);
    model.intercept(g) = fit.intercept(0);
    double pred = model.intercept(g);
    for (int j = 0; j < k; ++j)
      pred += model.weights(j, g) *
              hist.Y(hist.row_of(model.neighbor_dates[static_cast<std::size_t>(j)]), g);
    model.prediction(g) = pred;
  }
  return model;
}

}  // namespace ssf
