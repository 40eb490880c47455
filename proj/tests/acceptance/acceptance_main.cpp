// Acceptance suite: one pass/fail line per criterion. Run with a list of
// criterion numbers, or no arguments for all of them.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "acceptance_util.hpp"
#include "ssf/cli_app.hpp"
#include "ssf/diagnostics.hpp"
#include "ssf/evalkit.hpp"

using namespace ssf;
using accept::Stopwatch;

namespace {

struct Criterion {
  int number;
  std::string name;
  std::function<bool(std::string&)> run;
};

// ---------------------------------------------------------------- 1: leakage

bool criterion_leakage(std::string& detail) {
  Rng rng(20260809);
  int violations = 0;
  int plans_checked = 0;
  for (int it = 0; it < 10000; ++it) {
    const int year = 1995 + static_cast<int>(rng.uniform_index(30));
    const int month = 1 + static_cast<int>(rng.uniform_index(12));
    const Date data_start =
        add_days(Date{year - 14 - static_cast<int>(rng.uniform_index(20)), 1, 1},
                 static_cast<std::int64_t>(rng.uniform_index(365)));
    PlanParams params;
    params.test_step_days = 1 + static_cast<int>(rng.uniform_index(14));
    params.n_folds = 1 + static_cast<int>(rng.uniform_index(5));
    params.fold_train_years = 2 + static_cast<int>(rng.uniform_index(12));
    params.final_train_years = 5 + static_cast<int>(rng.uniform_index(30));
    if (rng.uniform() < 0.5)
      params.cadence_anchor = add_days(
          Date{year, 1, 1}, -static_cast<std::int64_t>(rng.uniform_index(400)));
    SplitPlan plan;
    try {
      plan = make_split_plan(year, month, data_start, params);
    } catch (const DataError&) {
      continue;  // insufficient history is a rejection, not a leak
    }
    ++plans_checked;
    violations += count_leakage_violations(plan);
    // direct restatement: every train end sits >= 28 days before its evals
    if (days_between(plan.final_train.end, plan.test_dates.front()) < 28)
      ++violations;
    for (const auto& f : plan.folds)
      if (days_between(f.train.end, f.validation_dates.front()) < 28)
        ++violations;
  }
  detail = std::to_string(plans_checked) + " plans, " +
           std::to_string(violations) + " violations";
  return violations == 0 && plans_checked > 9000;
}

// ----------------------------------------------------- 2: metric identities

bool criterion_metric_identities(std::string& detail) {
  Rng rng(2);
  int checked = 0;
  for (int it = 0; it < 1000; ++it) {
    const int n = 2 + static_cast<int>(rng.uniform_index(40));
    Eigen::VectorXd y(n), b(n);
    for (int i = 0; i < n; ++i) {
      y(i) = rng.normal();
      b(i) = rng.normal();
    }
    if (y.norm() < 1e-9 || (y - b).squaredNorm() < 1e-9) continue;
    ++checked;
    if (relative_r2(b, y, b) != 0.0) {
      detail = "climatology-style baseline not exactly 0";
      return false;
    }
    if (relative_r2(y, y, b) != 1.0) {
      detail = "oracle prediction not exactly 1";
      return false;
    }
    if (std::abs(cosine(y, y) - 1.0) > 1e-12) {
      detail = "cosine(y, y) deviates from 1";
      return false;
    }
    if (std::abs(cosine(y, Eigen::VectorXd(-y)) + 1.0) > 1e-12) {
      detail = "cosine(y, -y) deviates from -1";
      return false;
    }
  }

  // end-to-end: the climatology and oracle models through the pipeline
  SynthConfig cfg = SynthConfig::defaults();
  cfg.n_lat = 4;
  cfg.n_lon = 4;
  cfg.years = 10;
  cfg.seed = 12;
  const auto bundle = accept::build_bundle(generate(cfg), Mode::one_day);
  const auto plans = accept::desk_plans(bundle, cfg.start_year + 9, 3, 2, 7);
  ModelSpec spec;
  spec.id = "climatology";
  spec.seed = 1;
  const auto clim = run_pipeline(bundle, plans, spec);
  spec.id = "oracle";
  const auto oracle = run_pipeline(bundle, plans, spec);
  if (clim.overall_rel_r2 != 0.0) {
    detail = "pipeline climatology relative R2 != 0";
    return false;
  }
  if (oracle.overall_rel_r2 != 1.0) {
    detail = "pipeline oracle relative R2 != 1";
    return false;
  }
  for (const auto& d : oracle.per_date)
    if (!d.excluded && std::abs(d.spatial_cosine - 1.0) > 1e-12) {
      detail = "oracle spatial cosine off 1";
      return false;
    }
  detail = std::to_string(checked) + " fixtures + pipeline identities";
  return true;
}

// ------------------------------------------------------- 3: gradient oracle

bool criterion_gradients(std::string& detail) {
  int done = 0;
  double worst = 0.0;
  const double h = 1e-5;

  auto check_net = [&](auto& net, const Eigen::MatrixXd& X,
                       const Eigen::MatrixXd& Y,
                       const Eigen::VectorXd& analytic) {
    Eigen::VectorXd params = net.flatten();
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      const double keep = params(i);
      params(i) = keep + h;
      net.unflatten(params);
      const double up = (net.forward(X) - Y).squaredNorm() /
                        (static_cast<double>(X.rows()) * Y.cols());
      params(i) = keep - h;
      net.unflatten(params);
      const double dn = (net.forward(X) - Y).squaredNorm() /
                        (static_cast<double>(X.rows()) * Y.cols());
      params(i) = keep;
      net.unflatten(params);
      const double numeric = (up - dn) / (2 * h);
      // the denominator floor sits above the finite-difference round-off
      // (machine epsilon * loss / h ~ 1e-11), so near-zero gradients are
      // compared at a scale where central differences are trustworthy
      const double denom =
          std::max({std::abs(analytic(i)), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic(i) - numeric) / denom);
    }
  };

  // finite differences sit inside a ReLU cell only when the decoder
  // pre-activations stay clear of zero; resample until they do
  auto kink_free = [&](const nn::Mlp& mlp, const Eigen::MatrixXd& input) {
    nn::MlpCache cache;
    nn::mlp_forward(mlp, input, &cache);
    for (std::size_t i = 0; i + 1 < cache.pre.size(); ++i)
      if (cache.pre[i].cwiseAbs().minCoeff() < 1e-3) return false;
    return true;
  };

  for (std::uint64_t attempt = 0; done < 25 && attempt < 200; ++attempt) {
    Rng rng(3000 + attempt);
    EncDecConfig cfg;
    cfg.steps = 2 + static_cast<int>(rng.uniform_index(3));
    cfg.input_width = 3 + static_cast<int>(rng.uniform_index(3));
    cfg.hidden = 2 + static_cast<int>(rng.uniform_index(3));
    cfg.lstm_layers = 1 + static_cast<int>(rng.uniform_index(2));
    cfg.decoder_hidden = 3 + static_cast<int>(rng.uniform_index(3));
    cfg.output_width = 1 + static_cast<int>(rng.uniform_index(3));
    cfg.wiring = rng.uniform() < 0.5 ? Wiring::all_steps : Wiring::last_step;
    EncDecNet net(cfg, rng);
    Eigen::MatrixXd X(4, cfg.steps * cfg.input_width);
    Eigen::MatrixXd Y(4, cfg.output_width);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();
    const auto hs = nn::lstm_forward(net.lstm(), net.split_steps(X));
    if (!kink_free(net.decoder(), net.decoder_input(hs))) continue;
    ++done;
    auto lg = net.zero_lstm_grads();
    auto dg = net.zero_decoder_grads();
    net.loss_and_gradients(X, Y, lg, dg);
    check_net(net, X, Y, net.flatten_grads(lg, dg));
  }

  int fnn_done = 0;
  for (std::uint64_t attempt = 0; fnn_done < 25 && attempt < 200; ++attempt) {
    Rng rng(4000 + attempt);
    const int in = 3 + static_cast<int>(rng.uniform_index(4));
    const int out = 1 + static_cast<int>(rng.uniform_index(3));
    FnnNet net({in, 4 + static_cast<int>(rng.uniform_index(3)),
                3 + static_cast<int>(rng.uniform_index(3)), out},
               rng);
    Eigen::MatrixXd X(5, in), Y(5, out);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();
    if (!kink_free(net.mlp(), X)) continue;
    ++fnn_done;
    auto g = net.zero_grads();
    net.loss_and_gradients(X, Y, g);
    check_net(net, X, Y, net.flatten_grads(g));
  }

  detail = std::to_string(done + fnn_done) +
           " instances, worst relative error " + std::to_string(worst);
  return done == 25 && fnn_done == 25 && worst < 1e-4;
}

// ------------------------------------------------------- 4: lasso optimality

bool criterion_lasso(std::string& detail) {
  Rng rng(4);
  double worst_kkt = 0.0, worst_ols = 0.0;
  for (int it = 0; it < 100; ++it) {
    const int n = 40 + static_cast<int>(rng.uniform_index(60));
    const int p = 4 + static_cast<int>(rng.uniform_index(12));
    const int g = 1 + static_cast<int>(rng.uniform_index(5));
    Eigen::MatrixXd X(n, p), Y(n, g);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] = rng.normal();

    const double lmax = lasso_lambda_max(X, Y);

    // full shrinkage at lambda_max
    const auto zero = fit_multitask_lasso(X, Y, lmax * (1.0 + 1e-12));
    if (zero.nonzero_rows() != 0) {
      detail = "nonzero solution at lambda_max";
      return false;
    }

    // KKT conditions at a mid-path lambda
    const auto mid = fit_multitask_lasso(X, Y, lmax / 10.0);
    worst_kkt = std::max(worst_kkt, mid.kkt_residual);

    // least-squares agreement at lambda = 0
    LassoOptions opt;
    opt.tol = 1e-12;
    opt.kkt_tol = 1e-10;
    const auto ls = fit_multitask_lasso(X, Y, 0.0, opt);
    Eigen::MatrixXd A(n, p + 1);
    A << X, Eigen::VectorXd::Ones(n);
    const Eigen::MatrixXd beta =
        (A.transpose() * A).ldlt().solve(A.transpose() * Y);
    const Eigen::MatrixXd oracle = A * beta;
    worst_ols = std::max(
        worst_ols,
        (predict_linear(ls, X) - oracle).cwiseAbs().maxCoeff());
  }
  std::ostringstream os;
  os << "100 instances, worst KKT " << worst_kkt << ", worst OLS gap "
     << worst_ols;
  detail = os.str();
  return worst_kkt <= 1e-6 && worst_ols <= 1e-8;
}

// ------------------------------------------------------- 5: gbt split oracle

struct OracleSplit {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = false;
  bool valid = false;
};

OracleSplit gbt_oracle_split(const Eigen::MatrixXd& X,
                             const std::vector<double>& grad,
                             const GbtParams& params) {
  OracleSplit best;
  const int n = static_cast<int>(X.rows());
  double g_all = 0;
  for (double g : grad) g_all += g;
  const double h_all = static_cast<double>(n);
  auto score = [&](double g, double h) { return g * g / (h + params.lambda); };
  const double parent = score(g_all, h_all);
  for (int j = 0; j < X.cols(); ++j) {
    std::vector<int> present;
    double g_miss = 0, h_miss = 0;
    for (int r = 0; r < n; ++r) {
      if (std::isnan(X(r, j))) {
        g_miss += grad[static_cast<std::size_t>(r)];
        h_miss += 1;
      } else {
        present.push_back(r);
      }
    }
    std::sort(present.begin(), present.end(), [&](int a, int b) {
      if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
      return a < b;
    });
    double gl = 0, hl = 0;
    for (std::size_t i = 0; i < present.size(); ++i) {
      if (i > 0 && X(present[i], j) > X(present[i - 1], j)) {
        const double lo = X(present[i - 1], j);
        const double thr = lo + 0.5 * (X(present[i], j) - lo);
        for (int dir = 0; dir < 2; ++dir) {
          const double gL = dir == 0 ? gl : gl + g_miss;
          const double hL = dir == 0 ? hl : hl + h_miss;
          if (hL < params.min_child_weight ||
              h_all - hL < params.min_child_weight)
            continue;
          const double gain = 0.5 * (score(gL, hL) +
                                     score(g_all - gL, h_all - hL) - parent) -
                              params.gamma;
          if (gain > best.gain)
            best = {gain, j, thr, dir == 1, true};
        }
      }
      gl += grad[static_cast<std::size_t>(present[i])];
      hl += 1;
    }
  }
  return best;
}

bool criterion_gbt(std::string& detail) {
  Rng rng(5);
  int splits_checked = 0;
  for (int it = 0; it < 120; ++it) {
    const int n = 8 + static_cast<int>(rng.uniform_index(57));
    const int p = 1 + static_cast<int>(rng.uniform_index(4));
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    for (int k = 0; k < n / 5; ++k)
      X(static_cast<int>(rng.uniform_index(n)),
        static_cast<int>(rng.uniform_index(p))) =
          std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();

    GbtParams params;
    params.n_rounds = 1;
    params.max_depth = 1;
    params.eta = 1.0;
    params.lambda = rng.uniform() < 0.5 ? 0.0 : 1.5;
    params.gamma = rng.uniform() < 0.5 ? 0.0 : 0.02;
    params.subsample = 1.0;
    const auto ens = fit_gbt(X, y, params);

    std::vector<double> grad(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      grad[static_cast<std::size_t>(i)] = y.mean() - y(i);
    const auto oracle = gbt_oracle_split(X, grad, params);
    const auto& root = ens.trees[0].nodes[0];
    if (!oracle.valid || oracle.gain <= 0) {
      if (root.feature != -1) {
        detail = "tree split where the oracle finds none";
        return false;
      }
      continue;
    }
    ++splits_checked;
    if (root.feature != oracle.feature ||
        std::abs(root.threshold - oracle.threshold) > 1e-12 ||
        root.default_left != oracle.default_left ||
        std::abs(root.gain - oracle.gain) > 1e-9) {
      detail = "split mismatch at instance " + std::to_string(it);
      return false;
    }
  }

  // training objective is non-increasing per round at gamma = 0
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd X(80, 4);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    Eigen::VectorXd y = X.col(0).array().sin() + 0.5 * X.col(2).array();
    GbtParams params;
    params.n_rounds = 30;
    params.subsample = 1.0;
    params.gamma = 0.0;
    const auto ens = fit_gbt(X, y, params);
    for (std::size_t r = 1; r < ens.train_mse_history.size(); ++r)
      if (ens.train_mse_history[r] > ens.train_mse_history[r - 1] + 1e-12) {
        detail = "objective increased at round " + std::to_string(r);
        return false;
      }
  }
  detail = std::to_string(splits_checked) + " root splits matched";
  return splits_checked >= 60;
}

// --------------------------------------------------------------- 6: MIC oracle

double mic_exhaustive(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

bool criterion_mic(std::string& detail) {
  Rng rng(6);

  // identity saturates
  Eigen::VectorXd ident(32);
  for (int i = 0; i < 32; ++i) ident(i) = rng.normal();
  if (std::abs(mic(ident, ident).mic - 1.0) > 1e-12) {
    detail = "MIC(x, x) != 1";
    return false;
  }

  // exhaustive oracle at n = 10
  for (int it = 0; it < 25; ++it) {
    Eigen::VectorXd x(10), y(10);
    for (int i = 0; i < 10; ++i) {
      x(i) = rng.normal();
      y(i) = rng.uniform() < 0.3 ? x(i) * x(i) : rng.normal();
    }
    const double fast = mic(x, y).mic;
    const double slow = mic_exhaustive(x, y);
    if (std::abs(fast - slow) > 1e-10) {
      detail = "DP " + std::to_string(fast) + " vs exhaustive " +
               std::to_string(slow);
      return false;
    }
  }

  // permutation null at n = 200
  const int n = 200;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x(i) = rng.normal();
    y(i) = rng.normal();
  }
  const double observed = mic(x, y).mic;
  std::vector<double> null_dist;
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Eigen::VectorXd yp(n);
  for (int p = 0; p < 200; ++p) {
    rng.shuffle(idx);
    for (int i = 0; i < n; ++i) yp(i) = y(idx[static_cast<std::size_t>(i)]);
    null_dist.push_back(mic(x, yp).mic);
  }
  std::sort(null_dist.begin(), null_dist.end());
  const double p95 = null_dist[190];
  std::ostringstream os;
  os << "oracle matched; null: observed " << observed << " vs p95 " << p95;
  detail = os.str();
  return observed <= p95;
}

double mic_exhaustive(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(x.size());
  const int budget = std::max(
      4, static_cast<int>(std::floor(std::pow(static_cast<double>(n), 0.6) + 1e-9)));
  auto ranks = [&](const Eigen::VectorXd& v) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (v(a) != v(b)) return v(a) < v(b);
      return a < b;
    });
    std::vector<int> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(order[i])] = i;
    return r;
  };
  double best = 0.0;
  auto run = [&](const std::vector<int>& xr, const std::vector<int>& yr) {
    std::vector<int> point_at(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) point_at[static_cast<std::size_t>(xr[i])] = i;
    for (int q = 2; q * 2 <= budget; ++q) {
      const int x_max = budget / q;
      if (x_max < 2) continue;
      std::vector<int> label(static_cast<std::size_t>(n));
      for (int pos = 0; pos < n; ++pos)
        label[static_cast<std::size_t>(pos)] = std::min(
            q - 1,
            yr[static_cast<std::size_t>(point_at[static_cast<std::size_t>(pos)])] *
                q / n);
      for (std::uint32_t cuts = 0; cuts < (1u << (n - 1)); ++cuts) {
        const int bins = std::popcount(cuts) + 1;
        if (bins > x_max) continue;
        std::vector<std::vector<double>> joint(
            static_cast<std::size_t>(bins),
            std::vector<double>(static_cast<std::size_t>(q), 0.0));
        int b = 0;
        for (int pos = 0; pos < n; ++pos) {
          joint[static_cast<std::size_t>(b)][static_cast<std::size_t>(
              label[static_cast<std::size_t>(pos)])] += 1.0;
          if (pos < n - 1 && (cuts >> pos) & 1u) ++b;
        }
        std::vector<double> px(static_cast<std::size_t>(bins), 0.0);
        std::vector<double> py(static_cast<std::size_t>(q), 0.0);
        for (int i = 0; i < bins; ++i)
          for (int j = 0; j < q; ++j) {
            px[static_cast<std::size_t>(i)] +=
                joint[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            py[static_cast<std::size_t>(j)] +=
                joint[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          }
        double info = 0.0;
        for (int i = 0; i < bins; ++i)
          for (int j = 0; j < q; ++j) {
            const double c =
                joint[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (c > 0)
              info += (c / n) *
                      std::log2(c * n / (px[static_cast<std::size_t>(i)] *
                                         py[static_cast<std::size_t>(j)]));
          }
        const int l = std::max(bins, 2);
        if (l * q > budget) continue;
        const double norm = std::log2(static_cast<double>(std::min(l, q)));
        if (norm > 0) best = std::max(best, info / norm);
      }
    }
  };
  const auto xr = ranks(x);
  const auto yr = ranks(y);
  run(xr, yr);
  run(yr, xr);
  return std::min(best, 1.0);
}

// -------------------------------------------- 7: synthetic skill benchmark

bool criterion_benchmark(std::string& detail) {
  SynthConfig cfg = SynthConfig::defaults();  // the default desk world
  cfg.seed = 77;
  const auto world = generate(cfg);

  const int test_year = cfg.start_year + cfg.years - 1;
  const auto bundle_one = accept::build_bundle(world, Mode::one_day);
  auto plans = accept::desk_plans(bundle_one, test_year, 1, 12, 3);

  std::vector<Date> test_dates;
  for (const auto& p : plans)
    test_dates.insert(test_dates.end(), p.test_dates.begin(),
                      p.test_dates.end());
  const double ceiling = ceiling_skill(world, test_dates);

  PipelineOptions opt;
  opt.summary_bootstrap = 200;

  auto run_model = [&](const DataBundle& bundle, const std::string& id,
                       Mode mode, bool shuffle,
                       const nlohmann::json& hyper) {
    ModelSpec spec;
    spec.id = id;
    spec.mode = mode;
    spec.seed = 101;
    spec.shuffle_labels = shuffle;
    spec.hyper = hyper;
    return run_pipeline(bundle, plans, spec, opt);
  };

  const auto lasso =
      run_model(bundle_one, "lasso", Mode::one_day, false, {});
  const auto gbt = run_model(bundle_one, "gbt", Mode::one_day, false,
                             {{"n_rounds", 80}, {"max_depth", 3}});
  const auto damped = run_model(bundle_one, "damped", Mode::one_day, false, {});
  const auto control = run_model(bundle_one, "lasso", Mode::one_day, true, {});

  const auto bundle_all = accept::build_bundle(world, Mode::all_days);
  const auto encdec = run_model(
      bundle_all, "encdec", Mode::all_days, false,
      {{"hidden", 16}, {"decoder_hidden", 64}, {"max_epochs", 40},
       {"patience", 8}, {"batch_size", 64}, {"lr", 2e-3}});

  const std::size_t n_dates = lasso.included_spatial().size();
  std::ostringstream os;
  os << "ceiling " << ceiling << ", n=" << n_dates << ", lasso "
     << lasso.spatial_summary.mean << ", gbt " << gbt.spatial_summary.mean
     << ", encdec " << encdec.spatial_summary.mean << ", damped "
     << damped.spatial_summary.mean << ", control "
     << control.spatial_summary.mean;
  detail = os.str();

  return ceiling > 0.5 && ceiling < 0.7 && n_dates >= 100 &&
         lasso.spatial_summary.mean >= 0.4 && gbt.spatial_summary.mean >= 0.4 &&
         encdec.spatial_summary.mean >= 0.3 &&
         std::abs(control.spatial_summary.mean) < 0.1 &&
         lasso.spatial_summary.mean > damped.spatial_summary.mean &&
         gbt.spatial_summary.mean > damped.spatial_summary.mean &&
         lasso.spatial_summary.mean > control.spatial_summary.mean &&
         gbt.spatial_summary.mean > control.spatial_summary.mean;
}

// --------------------------------------- 8: sequence-length degradation

bool criterion_sequence_length(std::string& detail) {
  int wins = 0;
  double mean_gap = 0.0;
  const int n_seeds = 20;
  for (int seed = 0; seed < n_seeds; ++seed) {
    SynthConfig cfg = SynthConfig::defaults();
    cfg.n_lat = 4;
    cfg.n_lon = 4;
    cfg.years = 7;
    cfg.driver_persistence = 0.2;  // lag features carry nothing
    cfg.snr = 2.0;
    cfg.seed = 900 + static_cast<std::uint64_t>(seed);
    const auto world = generate(cfg);

    const nlohmann::json hyper{{"n_rounds", 30}, {"max_depth", 3}};
    double skills[2];
    const Mode modes[2] = {Mode::one_day, Mode::all_days};
    for (int m = 0; m < 2; ++m) {
      const auto bundle = accept::build_bundle(world, modes[m]);
      const auto plans =
          accept::desk_plans(bundle, cfg.start_year + cfg.years - 1, 2, 3, 3);
      ModelSpec spec;
      spec.id = "gbt";
      spec.mode = modes[m];
      spec.seed = 55;
      spec.hyper = hyper;
      skills[m] = run_pipeline(bundle, plans, spec).spatial_summary.mean;
    }
    mean_gap += skills[0] - skills[1];
    if (skills[0] > skills[1]) ++wins;
  }
  mean_gap /= n_seeds;

  // one-sided sign test against p = 1/2
  double p_value = 0.0;
  for (int k = wins; k <= n_seeds; ++k) {
    double c = 1.0;
    for (int i = 0; i < k; ++i) c *= static_cast<double>(n_seeds - i) / (i + 1);
    p_value += c * std::pow(0.5, n_seeds);
  }
  std::ostringstream os;
  os << "one_day wins " << wins << "/" << n_seeds << ", mean gap " << mean_gap
     << ", sign-test p " << p_value;
  detail = os.str();
  return mean_gap >= 0.05 && p_value < 0.05;
}

// ------------------------------------------------ 9: importance recovery

bool criterion_importance(std::string& detail) {
  const int n_seeds = 50;
  int gain_hits = 0, count_hits = 0, shapley_hits = 0;
  // planted groups: soil moisture (group 1) and the index block (group 8)
  auto planted = [](int top) { return top == 1 || top == 8; };

  for (int seed = 0; seed < n_seeds; ++seed) {
    SynthConfig cfg;
    cfg.n_lat = 4;
    cfg.n_lon = 4;
    cfg.years = 7;
    cfg.n_latent = 2;
    cfg.seed = 500 + static_cast<std::uint64_t>(seed);
    cfg.signal_map["target"] = {{0, 1.0}, {1, 1.0}};
    cfg.signal_map["sm"] = {{0, 1.0}, {1, 1.0}};
    cfg.signal_map["mei"] = {{0, 1.2}};
    cfg.signal_map["nino34"] = {{1, 1.2}};
    const auto world = generate(cfg);
    const auto bundle = accept::build_bundle(world, Mode::one_day);
    const auto plans =
        accept::desk_plans(bundle, cfg.start_year + cfg.years - 1, 2, 1, 7);
    ModelSpec probe;
    probe.id = "lasso";
    probe.seed = 1;
    const auto pd = pipe_detail::collect_plan_data(bundle, plans[0], probe);
    const auto scaler =
        ColumnScaler::fit(bundle.ds.X, pd.train_rows, bundle.ds.pc_column_mask());
    const Eigen::MatrixXd Xtr = scaler.apply(bundle.ds.X, pd.train_rows);
    Eigen::MatrixXd Ytr(static_cast<Eigen::Index>(pd.train_rows.size()),
                        bundle.ds.g());
    for (std::size_t i = 0; i < pd.train_rows.size(); ++i)
      Ytr.row(static_cast<Eigen::Index>(i)) = bundle.ds.Y.row(pd.train_rows[i]);

    // nonzero counts from a mid-path lasso
    const double lambda = lasso_lambda_max(Xtr, Ytr) / 30.0;
    const auto lasso = fit_multitask_lasso(Xtr, Ytr, lambda);
    if (planted(nonzero_importance({lasso}).top_group())) ++count_hits;

    // gain importance pooled over locations
    Eigen::VectorXd gains = Eigen::VectorXd::Zero(kFeatureWidth);
    GbtParams params;
    params.n_rounds = 40;
    params.max_depth = 3;
    params.seed = static_cast<std::uint64_t>(seed);
    for (int g = 0; g < bundle.ds.g(); ++g) {
      const auto ens = fit_gbt(Xtr, Ytr.col(g), params);
      gains += gain_importance(ens, kFeatureWidth);
    }
    if (planted(grouped_gain_importance({gains}).top_group())) ++gain_hits;

    // exact grouped Shapley on fold-validation skill
    std::vector<int> val_rows;
    for (const auto& v : pd.fold_val_rows)
      val_rows.insert(val_rows.end(), v.begin(), v.end());
    const Eigen::MatrixXd Xval = scaler.apply(bundle.ds.X, val_rows);
    Eigen::MatrixXd Yval(static_cast<Eigen::Index>(val_rows.size()),
                         bundle.ds.g());
    for (std::size_t i = 0; i < val_rows.size(); ++i)
      Yval.row(static_cast<Eigen::Index>(i)) = bundle.ds.Y.row(val_rows[i]);
    const auto shap =
        lasso_shapley_importance(Xtr, Ytr, Xval, Yval, lambda);
    if (planted(shap.top_group())) ++shapley_hits;
  }

  // Shapley efficiency on a stub skill table
  Rng rng(9);
  std::vector<double> table(1u << 9);
  for (auto& v : table) v = rng.normal();
  const auto shap = shapley_exact(9, [&](const std::vector<int>& s) {
    std::size_t mask = 0;
    for (int g : s) mask |= std::size_t{1} << g;
    return table[mask];
  });
  double total = 0.0;
  for (double v : shap.values) total += v;
  const bool efficiency_ok =
      std::abs(total - (table.back() - table.front())) <= 1e-9;

  std::ostringstream os;
  os << "gain " << gain_hits << "/50, nonzero " << count_hits << "/50, shapley "
     << shapley_hits << "/50, efficiency " << (efficiency_ok ? "ok" : "broken");
  detail = os.str();
  return gain_hits >= 45 && count_hits >= 45 && shapley_hits >= 45 &&
         efficiency_ok;
}

// --------------------------------------------- 10: global vs local scope

bool criterion_scope(std::string& detail) {
  const int n_seeds = 20;
  int lasso_wins = 0, gbt_wins = 0;
  for (int seed = 0; seed < n_seeds; ++seed) {
    SynthConfig cfg = SynthConfig::defaults();
    cfg.n_lat = 4;
    cfg.n_lon = 4;
    cfg.years = 8;
    cfg.seed = 700 + static_cast<std::uint64_t>(seed);
    const auto world = generate(cfg);
    const auto bundle = accept::build_bundle(world, Mode::one_day);
    const auto plans =
        accept::desk_plans(bundle, cfg.start_year + cfg.years - 1, 5, 2, 3);

    auto skill = [&](const std::string& id, Scope scope) {
      ModelSpec spec;
      spec.id = id;
      spec.scope = scope;
      spec.seed = 31;
      if (id == "gbt") spec.hyper = {{"n_rounds", 40}, {"max_depth", 3}};
      return run_pipeline(bundle, plans, spec).spatial_summary.mean;
    };
    if (skill("lasso", Scope::global) >= skill("lasso", Scope::local))
      ++lasso_wins;
    if (skill("gbt", Scope::global) >= skill("gbt", Scope::local)) ++gbt_wins;
  }
  std::ostringstream os;
  os << "global >= local: lasso " << lasso_wins << "/20, gbt " << gbt_wins
     << "/20";
  detail = os.str();
  return lasso_wins >= 16 && gbt_wins >= 16;
}

// -------------------------------------------------- 11: CLI determinism

bool criterion_cli_determinism(std::string& detail) {
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / "ssf_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };

  auto run_all = [&](const std::string& tag) -> fs::path {
    const auto store = root / ("store_" + tag);
    std::vector<std::vector<std::string>> commands = {
        {"--seed", "42", "synth", "--out", store.string(), "--years", "10",
         "--grid", "4"},
        {"--seed", "42", "preprocess", "--store", store.string()},
        {"--seed", "42", "featurize", "--store", store.string(), "--mode",
         "one_day"},
        {"--seed", "42", "train-eval", "--store", store.string(), "--model",
         "lasso", "--n-months", "2"},
        {"--seed", "42", "train-eval", "--store", store.string(), "--model",
         "damped", "--n-months", "2"},
        {"--seed", "42", "diagnose", "--store", store.string(), "--mic-boot",
         "5", "--mic-stride", "21", "--months", "2"},
        {"--seed", "42", "report", "--out", (store / "summary").string(),
         (store / "reports" / "lasso_one_day_global").string(),
         (store / "reports" / "damped_one_day_global").string()}};
    for (const auto& cmd : commands)
      if (cli::run(cmd) != 0) throw DataError("CLI step failed in " + tag);
    return store;
  };

  const auto a = run_all("a");
  const auto b = run_all("b");

  const std::vector<std::string> artefacts = {
      "reports/lasso_one_day_global/report.json",
      "reports/lasso_one_day_global/per_date.csv",
      "reports/lasso_one_day_global/per_cell.csv",
      "reports/damped_one_day_global/report.json",
      "diagnostics/mic_map.csv",
      "diagnostics/pearson_map.csv",
      "diagnostics/spearman_map.csv",
      "diagnostics/importance.csv",
      "diagnostics/mic_map.svg",
      "summary/comparison.csv",
      "summary/lasso_temporal_cosine.svg",
      "synth_meta.json",
  };
  int mismatches = 0;
  for (const auto& rel : artefacts) {
    if (!fs::exists(a / rel) || !fs::exists(b / rel)) {
      detail = "missing artefact: " + rel;
      fs::remove_all(root);
      return false;
    }
    if (slurp(a / rel) != slurp(b / rel)) {
      ++mismatches;
      detail = "byte mismatch in " + rel;
    }
  }
  fs::remove_all(root);
  if (mismatches == 0)
    detail = std::to_string(artefacts.size()) + " artefacts byte-identical";
  return mismatches == 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria = {
      {1, "leakage-safe split plans", criterion_leakage},
      {2, "metric identities", criterion_metric_identities},
      {3, "gradient oracle", criterion_gradients},
      {4, "lasso optimality", criterion_lasso},
      {5, "gbt split oracle", criterion_gbt},
      {6, "mic oracle", criterion_mic},
      {7, "synthetic skill benchmark", criterion_benchmark},
      {8, "sequence-length degradation", criterion_sequence_length},
      {9, "importance recovery", criterion_importance},
      {10, "global-vs-local ordering", criterion_scope},
      {11, "cli determinism", criterion_cli_determinism},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.number) == selected.end())
      continue;
    Stopwatch watch;
    bool ok = false;
    std::string detail;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %2d: %s (%.1fs) %s\n", ok ? "PASS" : "FAIL",
                c.number, c.name.c_str(), watch.seconds(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
