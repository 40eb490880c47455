#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ssf/deepnet.hpp"
#include "ssf/evalkit.hpp"
#include "ssf/features.hpp"
#include "ssf/gbt.hpp"
#include "ssf/linmodels.hpp"
#include "ssf/util.hpp"

namespace ssf {

inline const std::vector<std::string>& model_ids() {
  static const std::vector<std::string> ids = {
      "lasso",      "gbt",  "autoknn",    "multillr", "damped",
      "ls-indices", "fnn",  "encdec",     "encdec-last", "climatology"};
  return ids;
}

struct ModelSpec {
  std::string id = "lasso";
  Mode mode = Mode::one_day;
  Scope scope = Scope::global;
  std::uint64_t seed = 0;
  bool shuffle_labels = false;  // permutation control: train on shuffled Y
  nlohmann::json hyper = nlohmann::json::object();  // model-specific overrides
};

/// Everything run_pipeline needs: the global-scope dataset for the requested
/// mode plus the contiguous raw target history for lag-based models.
struct DataBundle {
  Dataset ds;
  TargetHistory history;
  LatLonGrid grid;

  int row_of(const Date& d) const {
    const auto it = std::lower_bound(ds.dates.begin(), ds.dates.end(), d);
    if (it == ds.dates.end() || !(*it == d)) return -1;
    return static_cast<int>(it - ds.dates.begin());
  }
};

struct PipelineOptions {
  unsigned jobs = 1;
  int gbt_round_patience = 20;
  int summary_bootstrap = 1000;
};

namespace pipe_detail {

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

inline double mean_spatial(const Eigen::MatrixXd& pred,
                           const Eigen::MatrixXd& truth) {
  double total = 0;
  int counted = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const double nb = truth.row(i).norm();
    if (nb < kNormFloor) continue;
    const double na = pred.row(i).norm();
    total += na < kNormFloor ? 0.0 : pred.row(i).dot(truth.row(i)) / (na * nb);
    ++counted;
  }
  return counted > 0 ? total / counted : 0.0;
}

/// Per-(cell, doy) mean of y over the training rows, with the overall cell
/// mean as the fallback for unseen doys: the climatology baseline.
struct TrainMeanBaseline {
  Eigen::MatrixXd by_doy;   // 365 x G
  Eigen::MatrixXd counts;   // 365 x G
  Eigen::VectorXd overall;  // G

  static TrainMeanBaseline fit(const Dataset& ds, const std::vector<int>& rows) {
    TrainMeanBaseline b;
    const int G = ds.g();
    b.by_doy = Eigen::MatrixXd::Zero(365, G);
    b.counts = Eigen::MatrixXd::Zero(365, G);
    b.overall = Eigen::VectorXd::Zero(G);
    for (int r : rows) {
      const int doy = day_of_year(ds.dates[static_cast<std::size_t>(r)]);
      b.by_doy.row(doy - 1) += ds.Y.row(r);
      b.counts.row(doy - 1).array() += 1.0;
      b.overall += ds.Y.row(r).transpose();
    }
    b.overall /= static_cast<double>(rows.size());
    for (int d = 0; d < 365; ++d)
      for (int g = 0; g < G; ++g)
        b.by_doy(d, g) = b.counts(d, g) > 0 ? b.by_doy(d, g) / b.counts(d, g)
                                            : b.overall(g);
    return b;
  }

  Eigen::VectorXd at(const Date& d) const {
    return by_doy.row(day_of_year(d) - 1).transpose();
  }
};

struct PlanData {
  std::vector<int> train_rows;       // final training range (scope-filtered)
  std::vector<int> test_rows;        // test dates present in the dataset
  std::vector<Date> test_dates;
  std::vector<std::vector<int>> fold_train_rows;
  std::vector<std::vector<int>> fold_val_rows;
  TrainMeanBaseline baseline;
  Date max_train_date{1, 1, 1};      // audit
};

inline std::vector<int> rows_in_range(const DataBundle& bundle,
                                      const DateRange& range, Scope scope,
                                      int scope_month) {
  std::vector<int> rows;
  for (std::size_t i = 0; i < bundle.ds.dates.size(); ++i) {
    const Date& d = bundle.ds.dates[i];
    if (!range.contains(d)) continue;
    if (scope == Scope::local && !month_in_local_scope(d.month, scope_month))
      continue;
    rows.push_back(static_cast<int>(i));
  }
  return rows;
}

inline PlanData collect_plan_data(const DataBundle& bundle,
                                  const SplitPlan& plan,
                                  const ModelSpec& spec) {
  PlanData pd;
  pd.train_rows =
      rows_in_range(bundle, plan.final_train, spec.scope, plan.test_month);
  if (pd.train_rows.size() < 40)
    throw DataError("plan " + std::to_string(plan.test_year) + "-" +
                    std::to_string(plan.test_month) +
                    ": too few training rows");
  for (const Date& d : plan.test_dates) {
    const int r = bundle.row_of(d);
    if (r < 0) continue;  // schedule or target not covered
    pd.test_rows.push_back(r);
    pd.test_dates.push_back(d);
  }
  if (pd.test_rows.empty())
    throw DataError("plan has no test dates inside the dataset");
  for (const auto& fold : plan.folds) {
    pd.fold_train_rows.push_back(
        rows_in_range(bundle, fold.train, spec.scope, plan.test_month));
    std::vector<int> val;
    for (const Date& d : fold.validation_dates) {
      const int r = bundle.row_of(d);
      if (r >= 0) val.push_back(r);
    }
    pd.fold_val_rows.push_back(val);
  }
  pd.baseline = TrainMeanBaseline::fit(bundle.ds, pd.train_rows);
  for (int r : pd.train_rows)
    pd.max_train_date =
        std::max(pd.max_train_date, bundle.ds.dates[static_cast<std::size_t>(r)]);
  return pd;
}

/// Training targets for a row set; applies the shuffled-label control when
/// requested and tracks the audit date.
inline Eigen::MatrixXd train_targets(const DataBundle& bundle,
                                     const std::vector<int>& rows,
                                     const ModelSpec& spec, std::uint64_t salt,
                                     Date* max_seen = nullptr) {
  std::vector<int> order(rows.begin(), rows.end());
  if (spec.shuffle_labels) {
    Rng rng(spec.seed ^ (0x5aff1e00ULL + salt));
    rng.shuffle(order);
  }
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(rows.size()), bundle.ds.g());
  for (std::size_t i = 0; i < order.size(); ++i) {
    Y.row(static_cast<Eigen::Index>(i)) = bundle.ds.Y.row(order[i]);
    if (max_seen)
      *max_seen = std::max(*max_seen,
                           bundle.ds.dates[static_cast<std::size_t>(order[i])]);
  }
  return Y;
}

}  // namespace pipe_detail

/// Per-plan fit + predict for one model family. Returns the test-date
/// prediction matrix (rows follow PlanData::test_rows).
inline Eigen::MatrixXd fit_predict_plan(const DataBundle& bundle,
                                        const SplitPlan& plan,
                                        const pipe_detail::PlanData& pd,
                                        const ModelSpec& spec,
                                        const PipelineOptions& opt,
                                        int plan_index, Date* audit_date) {
  using namespace pipe_detail;
  const auto& ds = bundle.ds;
  const int G = ds.g();
  const auto salt = static_cast<std::uint64_t>(plan_index);
  const nlohmann::json hyper =
      spec.hyper.is_null() ? nlohmann::json::object() : spec.hyper;
  const Eigen::MatrixXd Ytr =
      train_targets(bundle, pd.train_rows, spec, salt, audit_date);

  // feature scaling fitted on the final training rows (PC columns only)
  const auto scaler = ColumnScaler::fit(ds.X, pd.train_rows, ds.pc_column_mask());
  const Eigen::MatrixXd Xtr = scaler.apply(ds.X, pd.train_rows);
  const Eigen::MatrixXd Xte = scaler.apply(ds.X, pd.test_rows);

  auto fold_targets = [&](const std::vector<int>& rows) {
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(rows.size()), G);
    for (std::size_t i = 0; i < rows.size(); ++i)
      Y.row(static_cast<Eigen::Index>(i)) = ds.Y.row(rows[i]);
    return Y;
  };

  if (spec.id == "climatology") {
    Eigen::MatrixXd pred(static_cast<Eigen::Index>(pd.test_rows.size()), G);
    for (std::size_t i = 0; i < pd.test_dates.size(); ++i)
      pred.row(static_cast<Eigen::Index>(i)) =
          pd.baseline.at(pd.test_dates[i]).transpose();
    return pred;
  }

  if (spec.id == "oracle") {
    // diagnostic control: echoes the truth at the test dates
    Eigen::MatrixXd pred(static_cast<Eigen::Index>(pd.test_rows.size()), G);
    for (std::size_t i = 0; i < pd.test_rows.size(); ++i)
      pred.row(static_cast<Eigen::Index>(i)) = ds.Y.row(pd.test_rows[i]);
    return pred;
  }

  if (spec.id == "lasso") {
    // lambda tuned on the folds over a 20-point log grid, then refit
    const double grid_points = hyper.value("lambda_grid_points", 20);
    std::vector<double> fold_skill(static_cast<std::size_t>(grid_points), 0.0);
    int used_folds = 0;
    for (std::size_t f = 0; f < pd.fold_train_rows.size(); ++f) {
      const auto& ftr = pd.fold_train_rows[f];
      const auto& fva = pd.fold_val_rows[f];
      if (ftr.size() < 40 || fva.empty()) continue;
      ++used_folds;
      const auto fscaler = ColumnScaler::fit(ds.X, ftr, ds.pc_column_mask());
      const Eigen::MatrixXd fX = fscaler.apply(ds.X, ftr);
      const Eigen::MatrixXd fY =
          train_targets(bundle, ftr, spec, salt * 31 + f, audit_date);
      const Eigen::MatrixXd vX = fscaler.apply(ds.X, fva);
      const Eigen::MatrixXd vY = fold_targets(fva);
      LassoWorkspace ws(fX, fY);
      const auto grid = default_lambda_grid(ws.lambda_max(),
                                            static_cast<int>(grid_points));
      // tuning only ranks lambdas, so a loose solve is enough
      LassoOptions tune_opt;
      tune_opt.tol = 1e-5;
      tune_opt.kkt_tol = 1e-3;
      tune_opt.max_sweeps = 300;
      tune_opt.track_objective = false;
      for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const auto model = ws.solve(grid[gi], tune_opt);
        fold_skill[gi] += mean_spatial(predict_linear(model, vX), vY);
      }
    }
    LassoWorkspace final_ws(Xtr, Ytr);
    const auto grid = default_lambda_grid(final_ws.lambda_max(),
                                          static_cast<int>(grid_points));
    std::size_t best = grid.size() / 2;
    if (used_folds > 0) {
      best = 0;
      for (std::size_t gi = 1; gi < grid.size(); ++gi)
        if (fold_skill[gi] > fold_skill[best]) best = gi;
    }
    // warm the path down to the chosen lambda for a stable solve
    LassoOptions path_opt;
    path_opt.tol = 1e-5;
    path_opt.kkt_tol = 1e-3;
    path_opt.max_sweeps = 300;
    path_opt.track_objective = false;
    for (std::size_t gi = 0; gi + 1 <= best; ++gi)
      final_ws.solve(grid[gi], path_opt);
    const auto model = final_ws.solve(grid[best]);
    return predict_linear(model, Xte);
  }

  if (spec.id == "gbt") {
    GbtParams params;
    params.eta = hyper.value("eta", 0.1);
    params.max_depth = hyper.value("max_depth", 4);
    params.n_rounds = hyper.value("n_rounds", 200);
    params.lambda = hyper.value("lambda", 1.0);
    params.gamma = hyper.value("gamma", 0.0);
    params.subsample = hyper.value("subsample", 0.8);

    // pooled fold-validation rows drive the round choice
    std::vector<int> val_rows;
    for (const auto& v : pd.fold_val_rows)
      val_rows.insert(val_rows.end(), v.begin(), v.end());
    std::sort(val_rows.begin(), val_rows.end());
    val_rows.erase(std::unique(val_rows.begin(), val_rows.end()),
                   val_rows.end());
    const Eigen::MatrixXd Xval = scaler.apply(ds.X, val_rows);
    const Eigen::MatrixXd Yval = fold_targets(val_rows);

    std::vector<std::vector<Eigen::VectorXd>> val_curves(
        static_cast<std::size_t>(G));
    std::vector<TreeEnsemble> ensembles(static_cast<std::size_t>(G));
    parallel_for(
        static_cast<std::size_t>(G),
        [&](std::size_t g) {
          GbtParams pg = params;
          pg.seed = spec.seed ^ (salt * 1315423911ULL) ^ (g * 2654435761ULL);
          ensembles[g] =
              fit_gbt(Xtr, Ytr.col(static_cast<Eigen::Index>(g)), pg,
                      val_rows.empty() ? nullptr : &Xval, &val_curves[g]);
        },
        opt.jobs);

    int best_round = params.n_rounds;
    if (!val_rows.empty()) {
      // mean spatial skill on the pooled validation set per round
      double best_skill = -2.0;
      int since_best = 0;
      best_round = 1;
      for (int r = 0; r < params.n_rounds; ++r) {
        Eigen::MatrixXd pred(Xval.rows(), G);
        for (int g = 0; g < G; ++g)
          pred.col(g) = val_curves[static_cast<std::size_t>(g)]
                                  [static_cast<std::size_t>(r)];
        const double skill = mean_spatial(pred, Yval);
        if (skill > best_skill) {
          best_skill = skill;
          best_round = r + 1;
          since_best = 0;
        } else if (++since_best > opt.gbt_round_patience) {
          break;
        }
      }
    }
    Eigen::MatrixXd pred(Xte.rows(), G);
    for (int g = 0; g < G; ++g)
      pred.col(g) =
          predict_gbt(ensembles[static_cast<std::size_t>(g)].truncated(best_round),
                      Xte);
    return pred;
  }

  if (spec.id == "ls-indices") {
    const auto idx_cols = ds.index_columns_at_t();
    const Eigen::MatrixXd Xi = take_cols(Xtr, idx_cols);
    const auto fit = fit_ls_indices(Xi, Ytr);
    return predict_linear_fit(fit, take_cols(Xte, idx_cols));
  }

  if (spec.id == "damped") {
    const Eigen::MatrixXd Atr = take_rows(ds.recent_anom, pd.train_rows);
    const auto model = fit_damped_persistence(Atr, Ytr);
    return predict_damped(model, take_rows(ds.recent_anom, pd.test_rows));
  }

  if (spec.id == "autoknn") {
    // clip the history at the training end: nothing later is readable
    TargetHistory hist;
    hist.start = bundle.history.start;
    const auto keep = days_between(hist.start, plan.final_train.end) + 1;
    if (keep < 400) throw DataError("autoknn: history too short");
    hist.Y = bundle.history.Y.topRows(keep);
    if (audit_date) *audit_date = std::max(*audit_date, plan.final_train.end);

    const int M = hyper.value("similarity_history", 60);
    const int lag = hyper.value("lag", 365);
    std::vector<int> k_grid = {5, 10, 20, 40};
    if (hyper.contains("k")) k_grid = {hyper["k"].get<int>()};
    int best_k = k_grid.front();
    if (k_grid.size() > 1) {
      double best_skill = -2.0;
      for (int k : k_grid) {
        double skill = 0;
        int counted = 0;
        for (std::size_t f = 0; f < plan.folds.size(); ++f) {
          const auto& fold = plan.folds[f];
          for (const Date& d : fold.validation_dates) {
            const int row = bundle.row_of(d);
            if (row < 0) continue;
            try {
              const auto m = fit_autoknn(hist, d, fold.train.start,
                                         fold.train.end, k, M, lag);
              const Eigen::VectorXd truth = ds.Y.row(row).transpose();
              skill += cosine(m.prediction, truth);
              ++counted;
            } catch (const DataError&) {
            }
          }
        }
        if (counted > 0) skill /= counted;
        if (counted > 0 && skill > best_skill) {
          best_skill = skill;
          best_k = k;
        }
      }
    }
    Eigen::MatrixXd pred(static_cast<Eigen::Index>(pd.test_dates.size()), G);
    for (std::size_t i = 0; i < pd.test_dates.size(); ++i) {
      const auto m = fit_autoknn(hist, pd.test_dates[i], plan.final_train.start,
                                 plan.final_train.end, best_k, M, lag);
      pred.row(static_cast<Eigen::Index>(i)) = m.prediction.transpose();
    }
    return pred;
  }

  if (spec.id == "multillr") {
    const int span = hyper.value("span_days", 28);
    Eigen::MatrixXd pred(static_cast<Eigen::Index>(pd.test_dates.size()), G);
    for (std::size_t i = 0; i < pd.test_dates.size(); ++i) {
      const int target_doy = day_of_year(pd.test_dates[i]);
      auto in_span = [&](const std::vector<int>& rows) {
        std::vector<int> out;
        for (int r : rows)
          if (doy_distance(day_of_year(ds.dates[static_cast<std::size_t>(r)]),
                           target_doy) <= span)
            out.push_back(r);
        return out;
      };
      const auto pool = in_span(pd.train_rows);
      MultiLlrFolds folds;
      for (std::size_t f = 0; f < pd.fold_train_rows.size(); ++f) {
        const auto ftr = in_span(pd.fold_train_rows[f]);
        if (ftr.size() < 40 || pd.fold_val_rows[f].empty()) continue;
        folds.train_rows.push_back(ftr);
        folds.val_rows.push_back(pd.fold_val_rows[f]);
      }
      if (folds.train_rows.empty() || pool.size() < 40)
        throw DataError("multillr: empty doy pool");
      // candidates: the one-day feature block at the target date
      std::vector<int> candidates;
      const int base = (mode_steps(ds.mode) - 1) * kFeatureWidth;
      for (int c = 0; c < kFeatureWidth; ++c) candidates.push_back(base + c);
      const Eigen::MatrixXd Xall = take_cols(ds.X, candidates);
      // scale on the pool rows so elimination sees standardized predictors
      std::vector<std::uint8_t> pc_mask(kFeatureWidth, 1);
      for (int c = 80; c < kFeatureWidth; ++c)
        pc_mask[static_cast<std::size_t>(c)] = 0;
      const auto pool_scaler = ColumnScaler::fit(Xall, pool, pc_mask);
      std::vector<int> all_rows(static_cast<std::size_t>(Xall.rows()));
      std::iota(all_rows.begin(), all_rows.end(), 0);
      const Eigen::MatrixXd Xs = pool_scaler.apply(Xall, all_rows);
      const auto model = fit_multillr(
          Xs, ds.Y, folds, pool,
          hyper.value("max_eliminations", 8));
      pred.row(static_cast<Eigen::Index>(i)) =
          predict_multillr(model, Xs.row(pd.test_rows[i])).row(0);
      if (audit_date) *audit_date = std::max(*audit_date, pd.max_train_date);
    }
    return pred;
  }

  if (spec.id == "fnn" || spec.id == "encdec" || spec.id == "encdec-last") {
    TrainOptions topt;
    topt.max_epochs = hyper.value("max_epochs", 200);
    topt.patience = hyper.value("patience", 10);
    topt.batch_size = hyper.value("batch_size", 32);
    topt.lr = hyper.value("lr", 1e-3);
    topt.seed = spec.seed ^ (salt * 0x9e3779b9ULL);

    std::vector<EvalFold> folds;
    for (std::size_t f = 0; f < pd.fold_val_rows.size(); ++f) {
      const auto& rows = pd.fold_val_rows[f];
      if (rows.empty()) continue;
      EvalFold ef;
      ef.X = scaler.apply(ds.X, rows);
      ef.Y = fold_targets(rows);
      folds.push_back(std::move(ef));
    }

    Rng init_rng(spec.seed ^ 0x1247ULL ^ salt);
    if (spec.id == "fnn") {
      std::vector<int> widths = {static_cast<int>(Xtr.cols()),
                                 hyper.value("hidden1", 128),
                                 hyper.value("hidden2", 64), G};
      FnnNet net(widths, init_rng);
      train_fnn(net, Xtr, Ytr, folds, topt);
      return net.forward(Xte);
    }
    EncDecConfig cfg;
    cfg.steps = mode_steps(spec.mode);
    if (cfg.steps * kFeatureWidth != ds.p())
      throw DataError("encdec needs the sequence dataset for its mode");
    cfg.input_width = kFeatureWidth;
    cfg.hidden = hyper.value("hidden", 32);
    cfg.lstm_layers = hyper.value("lstm_layers", 1);
    cfg.decoder_hidden = hyper.value("decoder_hidden", 128);
    cfg.output_width = G;
    cfg.wiring =
        spec.id == "encdec-last" ? Wiring::last_step : Wiring::all_steps;
    EncDecNet net(cfg, init_rng);
    train_encdec(net, Xtr, Ytr, folds, topt);
    return net.forward(Xte);
  }

  throw DataError("unknown model id: " + spec.id);
}

/// Tune on the folds, refit on the final range, and score the test dates of
/// every plan; per-date and per-cell skills aggregate across plans.
inline SkillReport run_pipeline(const DataBundle& bundle,
                                const std::vector<SplitPlan>& plans,
                                const ModelSpec& spec,
                                const PipelineOptions& opt = {}) {
  using namespace pipe_detail;
  SkillReport report;
  report.model_id = spec.id;
  report.mode = mode_name(spec.mode);
  report.scope = spec.scope == Scope::global ? "global" : "local";
  report.seed = spec.seed;

  const int G = bundle.ds.g();
  struct DateResult {
    Date date;
    int plan_index;
    Eigen::VectorXd pred, truth, baseline;
  };
  std::vector<std::vector<DateResult>> plan_results(plans.size());
  std::vector<std::string> plan_errors(plans.size());
  std::vector<Date> audit_dates(plans.size(), Date{1, 1, 1});

  parallel_for(
      plans.size(),
      [&](std::size_t pi) {
        const auto& plan = plans[pi];
        try {
          const auto pd = collect_plan_data(bundle, plan, spec);
          Date audit = pd.max_train_date;
          const Eigen::MatrixXd pred = fit_predict_plan(
              bundle, plan, pd, spec, opt, static_cast<int>(pi), &audit);
          audit_dates[pi] = audit;
          for (std::size_t i = 0; i < pd.test_dates.size(); ++i) {
            DateResult dr;
            dr.date = pd.test_dates[i];
            dr.plan_index = static_cast<int>(pi);
            dr.pred = pred.row(static_cast<Eigen::Index>(i)).transpose();
            dr.truth = bundle.ds.Y.row(pd.test_rows[i]).transpose();
            dr.baseline = pd.baseline.at(pd.test_dates[i]);
            plan_results[pi].push_back(std::move(dr));
          }
        } catch (const std::exception& e) {
          plan_errors[pi] = std::string(e.what());
        }
      },
      opt.jobs);

  // flatten in plan order for deterministic output
  std::vector<DateResult> results;
  for (auto& pr : plan_results)
    for (auto& dr : pr) results.push_back(std::move(dr));
  for (std::size_t pi = 0; pi < plans.size(); ++pi)
    if (!plan_errors[pi].empty())
      report.plan_errors.push_back("plan " + std::to_string(pi) + " (" +
                                   std::to_string(plans[pi].test_year) + "-" +
                                   std::to_string(plans[pi].test_month) +
                                   "): " + plan_errors[pi]);
  if (results.empty())
    throw DataError("run_pipeline: every plan failed" +
                    (report.plan_errors.empty()
                         ? std::string()
                         : "; first: " + report.plan_errors.front()));

  Date max_audit{1, 1, 1};
  for (const auto& d : audit_dates) max_audit = std::max(max_audit, d);
  report.max_train_target_date = to_iso(max_audit);

  // per-date spatial skill
  for (const auto& dr : results) {
    PerDateSkill s;
    s.date = dr.date;
    s.plan_index = dr.plan_index;
    if (dr.truth.norm() < kNormFloor) {
      s.excluded = true;
      ++report.excluded_dates;
    } else {
      s.spatial_cosine = spatial_skill(dr.pred, dr.truth);
    }
    report.per_date.push_back(s);
  }

  // per-cell temporal skill and relative R^2 over the pooled test dates
  const auto n_dates = static_cast<Eigen::Index>(results.size());
  double pooled_num = 0.0, pooled_den = 0.0;
  std::vector<double> temporal_vals, r2_vals;
  for (int g = 0; g < G; ++g) {
    Eigen::VectorXd pred(n_dates), truth(n_dates), base(n_dates);
    for (Eigen::Index i = 0; i < n_dates; ++i) {
      pred(i) = results[static_cast<std::size_t>(i)].pred(g);
      truth(i) = results[static_cast<std::size_t>(i)].truth(g);
      base(i) = results[static_cast<std::size_t>(i)].baseline(g);
    }
    PerCellSkill c;
    const int cell = bundle.ds.target_cells[static_cast<std::size_t>(g)];
    c.cell = cell;
    c.lat = bundle.grid.lat(bundle.grid.cell_of(cell).row);
    c.lon = bundle.grid.lon(bundle.grid.cell_of(cell).col);
    c.n_dates = static_cast<int>(n_dates);
    const double den = (truth - base).squaredNorm();
    if (truth.norm() < kNormFloor || den <= kNormFloor) {
      c.excluded = true;
      ++report.excluded_cells;
    } else {
      c.temporal_cosine = temporal_skill(pred, truth);
      c.rel_r2 = relative_r2(pred, truth, base);
      temporal_vals.push_back(c.temporal_cosine);
      r2_vals.push_back(c.rel_r2);
      pooled_num += (truth - pred).squaredNorm();
      pooled_den += den;
    }
    report.per_cell.push_back(c);
  }
  report.overall_rel_r2 = pooled_den > 0 ? 1.0 - pooled_num / pooled_den : 0.0;

  const auto spatial_vals = report.included_spatial();
  if (spatial_vals.size() >= 2)
    report.spatial_summary =
        summarize(spatial_vals, opt.summary_bootstrap, spec.seed);
  if (temporal_vals.size() >= 2)
    report.temporal_summary =
        summarize(temporal_vals, opt.summary_bootstrap, spec.seed + 1);
  if (r2_vals.size() >= 2)
    report.rel_r2_summary =
        summarize(r2_vals, opt.summary_bootstrap, spec.seed + 2);
  return report;
}

}  // namespace ssf
