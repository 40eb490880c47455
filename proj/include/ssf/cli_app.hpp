#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ssf/diagnostics.hpp"
#include "ssf/pipeline.hpp"
#include "ssf/store.hpp"
#include "ssf/synthgen.hpp"

namespace ssf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

namespace detail {

/// Removes every path registered with it unless the command completes.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (armed_) {
      std::error_code ec;
      for (const auto& p : paths_)
        std::filesystem::remove_all(p, ec);
    }
  }
  void track(const std::filesystem::path& p) { paths_.push_back(p); }
  void disarm() { armed_ = false; }

 private:
  std::vector<std::filesystem::path> paths_;
  bool armed_ = true;
};

inline nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("unparseable config " + path + ": " + e.what());
  }
  return j;
}

inline std::string hash_hex(const nlohmann::json& j) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

struct PlanFlags {
  int test_year = 0;  // 0 = last year in the dataset
  int test_month = 1;
  int n_months = 12;
  int step_days = 7;
  int n_folds = 5;
  int fold_train_years = 10;
  int final_train_years = 30;

  void add_options(CLI::App* cmd) {
    cmd->add_option("--test-year", test_year,
                    "first test year (default: last year of data)");
    cmd->add_option("--test-month", test_month, "first test month");
    cmd->add_option("--n-months", n_months, "number of monthly plans");
    cmd->add_option("--step-days", step_days, "test cadence step in days");
    cmd->add_option("--n-folds", n_folds, "validation folds per plan");
    cmd->add_option("--fold-train-years", fold_train_years);
    cmd->add_option("--final-train-years", final_train_years);
  }

  void merge_config(const nlohmann::json& cfg) {
    if (!cfg.contains("plans")) return;
    const auto& p = cfg["plans"];
    test_year = p.value("test_year", test_year);
    test_month = p.value("test_month", test_month);
    n_months = p.value("n_months", n_months);
    step_days = p.value("step_days", step_days);
    n_folds = p.value("n_folds", n_folds);
    fold_train_years = p.value("fold_train_years", fold_train_years);
    final_train_years = p.value("final_train_years", final_train_years);
  }

  nlohmann::json to_json() const {
    return {{"test_year", test_year},       {"test_month", test_month},
            {"n_months", n_months},         {"step_days", step_days},
            {"n_folds", n_folds},           {"fold_train_years", fold_train_years},
            {"final_train_years", final_train_years}};
  }

  std::vector<SplitPlan> build(const DataBundle& bundle) const {
    int year = test_year;
    if (year == 0) year = bundle.ds.dates.back().year;
    PlanParams params;
    params.test_step_days = step_days;
    params.n_folds = n_folds;
    params.fold_train_years = fold_train_years;
    params.final_train_years = final_train_years;
    params.cadence_anchor = Date{year, test_month, 1};
    return make_campaign(year, test_month, n_months, bundle.ds.dates.front(),
                         params);
  }
};

inline void write_text(const std::string& path, const std::string& body) {
  const auto dir = std::filesystem::path(path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << body;
}

}  // namespace detail

// --- subcommand bodies ---

inline void cmd_synth(const std::string& out_dir, const nlohmann::json& cfg,
                      std::uint64_t seed_override, bool have_seed) {
  SynthConfig synth = SynthConfig::defaults();
  if (cfg.contains("synth")) from_json(cfg["synth"], synth);
  if (have_seed) synth.seed = seed_override;
  detail::OutputGuard guard;
  guard.track(std::filesystem::path(out_dir) / "fields");
  guard.track(std::filesystem::path(out_dir) / "indices");
  guard.track(std::filesystem::path(out_dir) / "synth_meta.json");
  const auto world = generate(synth);
  write_store(world, out_dir);
  guard.disarm();
  std::cout << "wrote store to " << out_dir << " (" << world.n_days
            << " days, " << world.grid.n_cells() << " cells)\n";
}

inline void cmd_preprocess(const std::string& store, const nlohmann::json& cfg) {
  PreprocessParams params;
  if (cfg.contains("preprocess")) {
    const auto& p = cfg["preprocess"];
    params.ref_year_start = p.value("ref_year_start", 0);
    params.ref_year_end = p.value("ref_year_end", 0);
    params.pool_window = p.value("pool_window", params.pool_window);
    params.eof_k = p.value("eof_k", params.eof_k);
  }
  detail::OutputGuard guard;
  guard.track(std::filesystem::path(store) / "preprocessed");
  preprocess_store(store, params);
  guard.disarm();
  std::cout << "preprocessed " << store << "\n";
}

inline void cmd_featurize(const std::string& store, Mode mode, Scope scope,
                          int scope_month) {
  detail::OutputGuard guard;
  const std::string stem =
      mode_name(mode) +
      (scope == Scope::local ? "_local" + std::to_string(scope_month) : "");
  guard.track(std::filesystem::path(store) / "features" / (stem + ".json"));
  guard.track(std::filesystem::path(store) / "features" / (stem + ".f64"));
  featurize_store(store, mode, scope, scope_month);
  guard.disarm();
  std::cout << "featurized " << stem << "\n";
}

inline void cmd_train_eval(const std::string& store, const ModelSpec& spec,
                           const detail::PlanFlags& plan_flags,
                           const std::string& out_dir, unsigned jobs,
                           const nlohmann::json& effective_config) {
  const auto bundle = load_bundle(store, spec.mode);
  const auto plans = plan_flags.build(bundle);
  PipelineOptions opt;
  opt.jobs = jobs;
  auto report = run_pipeline(bundle, plans, spec, opt);
  report.config_hash = detail::hash_hex(effective_config);

  std::string dir = out_dir;
  if (dir.empty()) {
    std::string name = spec.id + "_" + mode_name(spec.mode) + "_" +
                       (spec.scope == Scope::global ? "global" : "local");
    if (spec.shuffle_labels) name += "_shuffled";
    dir = (std::filesystem::path(store) / "reports" / name).string();
  }
  detail::OutputGuard guard;
  guard.track(dir);
  std::filesystem::remove_all(dir);
  save_report(report, dir);
  guard.disarm();
  std::cout << "model " << spec.id << ": mean spatial cosine "
            << report.spatial_summary.mean << " over "
            << report.spatial_summary.n << " test dates -> " << dir << "\n";
  if (!report.plan_errors.empty()) {
    std::cout << report.plan_errors.size() << " plan(s) failed:\n";
    for (const auto& e : report.plan_errors) std::cout << "  " << e << "\n";
  }
}

struct DiagnoseFlags {
  int mic_boot = 20;
  int mic_stride_days = 14;
  int block_days = 365;
  int n_months = 6;
  int max_eliminations = 0;  // reserved
};

inline void cmd_diagnose(const std::string& store,
                         const detail::PlanFlags& plan_flags,
                         const DiagnoseFlags& flags, std::uint64_t seed,
                         unsigned jobs, const std::string& out_dir,
                         const nlohmann::json& effective_config) {
  namespace fs = std::filesystem;
  const auto bundle = load_bundle(store, Mode::one_day);
  const std::string dir =
      out_dir.empty() ? (fs::path(store) / "diagnostics").string() : out_dir;
  detail::OutputGuard guard;
  guard.track(dir);
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string stamp =
      "config_hash=" + detail::hash_hex(effective_config) +
      " seed=" + std::to_string(seed);

  // dependence between the week -2/-1 anomaly and the week 3/4 target,
  // sampled on a coarse stride so the MIC search stays tractable
  {
    const auto anom_field =
        read_field((fs::path(store) / "preprocessed" / "recent_anom.json").string());
    const auto cells = bundle.grid.target_cells();
    std::vector<int> sample_rows;
    for (std::size_t i = 0; i < bundle.ds.dates.size();
         i += static_cast<std::size_t>(flags.mic_stride_days))
      sample_rows.push_back(static_cast<int>(i));
    const int n = static_cast<int>(sample_rows.size());
    Eigen::MatrixXd target(n, bundle.ds.g()), predictor(n, bundle.ds.g());
    for (int i = 0; i < n; ++i) {
      target.row(i) = bundle.ds.Y.row(sample_rows[static_cast<std::size_t>(i)]);
      predictor.row(i) =
          bundle.ds.recent_anom.row(sample_rows[static_cast<std::size_t>(i)]);
    }
    const int block =
        std::max(2, std::min(n, flags.block_days / flags.mic_stride_days));
    const auto mics = mic_map(predictor, target, block, flags.mic_boot, seed, jobs);
    save_cell_map_csv(bundle.grid, cells, mics,
                      (fs::path(dir) / "mic_map.csv").string(), stamp);
    detail::write_text((fs::path(dir) / "mic_map.svg").string(),
                       "<!-- " + stamp + " -->\n" +
                           svg_heat_map(bundle.grid, cells, mics,
                                        "mean MIC: recent anomaly vs target"));

    std::vector<double> pearsons, spearmans;
    for (int g = 0; g < bundle.ds.g(); ++g) {
      pearsons.push_back(pearson(predictor.col(g), target.col(g)));
      spearmans.push_back(spearman(predictor.col(g), target.col(g)));
    }
    save_cell_map_csv(bundle.grid, cells, pearsons,
                      (fs::path(dir) / "pearson_map.csv").string(), stamp);
    save_cell_map_csv(bundle.grid, cells, spearmans,
                      (fs::path(dir) / "spearman_map.csv").string(), stamp);
  }

  // feature importance averaged over monthly models
  {
    detail::PlanFlags monthly = plan_flags;
    monthly.n_months = flags.n_months;
    const auto plans = monthly.build(bundle);
    std::vector<MultitaskLassoModel> lasso_models;
    std::vector<Eigen::VectorXd> gbt_gains;
    double tuned_lambda = -1.0;
    Eigen::MatrixXd shap_Xtr, shap_Ytr, shap_Xval, shap_Yval;

    for (std::size_t pi = 0; pi < plans.size(); ++pi) {
      const auto& plan = plans[pi];
      ModelSpec probe;
      probe.id = "lasso";
      probe.seed = seed;
      const auto pd = pipe_detail::collect_plan_data(bundle, plan, probe);
      const auto scaler =
          ColumnScaler::fit(bundle.ds.X, pd.train_rows, bundle.ds.pc_column_mask());
      const Eigen::MatrixXd Xtr = scaler.apply(bundle.ds.X, pd.train_rows);
      Eigen::MatrixXd Ytr(static_cast<Eigen::Index>(pd.train_rows.size()),
                          bundle.ds.g());
      for (std::size_t i = 0; i < pd.train_rows.size(); ++i)
        Ytr.row(static_cast<Eigen::Index>(i)) = bundle.ds.Y.row(pd.train_rows[i]);

      if (tuned_lambda < 0) {
        // one shared lambda: strongest fold skill on the first plan
        LassoWorkspace ws(Xtr, Ytr);
        tuned_lambda = ws.lambda_max() / 30.0;
      }
      lasso_models.push_back(fit_multitask_lasso(Xtr, Ytr, tuned_lambda));

      GbtParams params;
      params.n_rounds = 50;
      params.max_depth = 3;
      Eigen::VectorXd gains = Eigen::VectorXd::Zero(kFeatureWidth);
      std::vector<Eigen::VectorXd> per_loc(
          static_cast<std::size_t>(bundle.ds.g()));
      parallel_for(
          static_cast<std::size_t>(bundle.ds.g()),
          [&](std::size_t g) {
            GbtParams pg = params;
            pg.seed = seed ^ (pi * 131ULL) ^ g;
            const auto ens =
                fit_gbt(Xtr, Ytr.col(static_cast<Eigen::Index>(g)), pg);
            per_loc[g] = gain_importance(ens, kFeatureWidth);
          },
          jobs);
      for (const auto& v : per_loc) gains += v;
      gbt_gains.push_back(gains / static_cast<double>(bundle.ds.g()));

      if (pi + 1 == plans.size()) {
        std::vector<int> val_rows;
        for (const auto& v : pd.fold_val_rows)
          val_rows.insert(val_rows.end(), v.begin(), v.end());
        shap_Xtr = Xtr;
        shap_Ytr = Ytr;
        shap_Xval = scaler.apply(bundle.ds.X, val_rows);
        shap_Yval.resize(static_cast<Eigen::Index>(val_rows.size()),
                         bundle.ds.g());
        for (std::size_t i = 0; i < val_rows.size(); ++i)
          shap_Yval.row(static_cast<Eigen::Index>(i)) =
              bundle.ds.Y.row(val_rows[i]);
      }
    }

    std::vector<ImportanceTable> tables;
    tables.push_back(nonzero_importance(lasso_models));
    tables.push_back(grouped_gain_importance(gbt_gains));
    tables.push_back(lasso_shapley_importance(shap_Xtr, shap_Ytr, shap_Xval,
                                              shap_Yval, tuned_lambda));
    save_importance_csv(tables, (fs::path(dir) / "importance.csv").string(),
                        stamp);
  }
  guard.disarm();
  std::cout << "diagnostics written to " << dir << "\n";
}

inline void cmd_report(const std::vector<std::string>& report_dirs,
                       const std::string& out_dir,
                       const nlohmann::json& effective_config) {
  namespace fs = std::filesystem;
  detail::OutputGuard guard;
  guard.track(out_dir);
  fs::remove_all(out_dir);
  fs::create_directories(out_dir);
  const std::string stamp = "config_hash=" + detail::hash_hex(effective_config);

  std::string csv = "# " + stamp + "\n";
  csv +=
      "model,mode,scope,mean,mean_se,median,median_se,q25,q25_se,q75,q75_se\n";
  char buf[256];
  for (const auto& dir : report_dirs) {
    std::ifstream in((fs::path(dir) / "report.json").string());
    if (!in) throw DataError("missing report.json in " + dir);
    nlohmann::json j;
    in >> j;
    const auto& s = j.at("spatial_cosine");
    std::snprintf(buf, sizeof buf,
                  "%s,%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                  j.at("model").get<std::string>().c_str(),
                  j.at("mode").get<std::string>().c_str(),
                  j.at("scope").get<std::string>().c_str(),
                  s.at("mean").get<double>(), s.at("mean_se").get<double>(),
                  s.at("median").get<double>(), s.at("median_se").get<double>(),
                  s.at("q25").get<double>(), s.at("q25_se").get<double>(),
                  s.at("q75").get<double>(), s.at("q75_se").get<double>());
    csv += buf;

    // per-cell temporal skill map
    std::ifstream cells((fs::path(dir) / "per_cell.csv").string());
    if (cells) {
      std::string line;
      std::getline(cells, line);  // stamp
      std::getline(cells, line);  // header
      std::vector<double> lats, lons, vals;
      while (std::getline(cells, line)) {
        std::istringstream row(line);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(row, tok, ',')) toks.push_back(tok);
        if (toks.size() < 5) continue;
        lats.push_back(std::stod(toks[1]));
        lons.push_back(std::stod(toks[2]));
        vals.push_back(std::stod(toks[3]));
      }
      if (!lats.empty()) {
        // rebuild a grid from the unique coordinates
        auto uniq = [](std::vector<double> v) {
          std::sort(v.begin(), v.end());
          v.erase(std::unique(v.begin(), v.end(),
                              [](double a, double b) {
                                return std::abs(a - b) < 1e-9;
                              }),
                  v.end());
          return v;
        };
        const auto ulat = uniq(lats), ulon = uniq(lons);
        LatLonGrid grid;
        grid.lat_start = ulat.front();
        grid.lat_step = ulat.size() > 1 ? ulat[1] - ulat[0] : 1.0;
        grid.n_lat = static_cast<int>(ulat.size());
        grid.lon_start = ulon.front();
        grid.lon_step = ulon.size() > 1 ? ulon[1] - ulon[0] : 1.0;
        grid.n_lon = static_cast<int>(ulon.size());
        std::vector<int> cells_idx;
        for (std::size_t i = 0; i < lats.size(); ++i) {
          const int r = static_cast<int>(
              std::lround((lats[i] - grid.lat_start) / grid.lat_step));
          const int c = static_cast<int>(
              std::lround((lons[i] - grid.lon_start) / grid.lon_step));
          cells_idx.push_back(grid.index_of(CellIndex{r, c}));
        }
        const std::string model = j.at("model").get<std::string>();
        detail::write_text(
            (fs::path(out_dir) / (model + "_temporal_cosine.svg")).string(),
            "<!-- " + stamp + " -->\n" +
                svg_heat_map(grid, cells_idx, vals,
                             model + ": temporal cosine similarity"));
      }
    }
  }
  detail::write_text((fs::path(out_dir) / "comparison.csv").string(), csv);
  guard.disarm();
  std::cout << "comparison table for " << report_dirs.size()
            << " reports -> " << out_dir << "\n";
}

/// Entry point shared by the binary and the in-process tests.
inline int run(const std::vector<std::string>& args) {
  CLI::App app{"sub-seasonal temperature forecasting toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;
  unsigned jobs = 0;
  app.add_option("--config", config_path, "JSON config file (flags win)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--jobs", jobs, "worker pool size (0 = hardware)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic data store");
  std::string synth_out;
  synth->add_option("--out", synth_out, "store directory")->required();
  int synth_years = 0, synth_grid = 0;
  double synth_snr = 0;
  synth->add_option("--years", synth_years, "world length in years");
  synth->add_option("--grid", synth_grid, "grid side length");
  synth->add_option("--snr", synth_snr, "target signal-to-noise ratio");

  // preprocess
  auto* prep = app.add_subcommand("preprocess",
                                  "fit climatologies, bases and PC series");
  std::string prep_store;
  prep->add_option("--store", prep_store, "store directory")->required();

  // featurize
  auto* feat = app.add_subcommand("featurize", "assemble model-ready datasets");
  std::string feat_store, feat_mode = "one_day", feat_scope = "global";
  int feat_month = 6;
  feat->add_option("--store", feat_store, "store directory")->required();
  feat->add_option("--mode", feat_mode)
      ->check(CLI::IsMember({"one_day", "four_days", "all_days"}));
  feat->add_option("--scope", feat_scope)
      ->check(CLI::IsMember({"global", "local"}));
  feat->add_option("--month", feat_month, "test month for local scope");

  // train-eval
  auto* tre = app.add_subcommand("train-eval",
                                 "train a model per month and score it");
  std::string tre_store, tre_model, tre_mode = "one_day",
                          tre_scope = "global", tre_out;
  bool tre_shuffle = false;
  tre->add_option("--store", tre_store, "store directory")->required();
  tre->add_option("--model", tre_model, "model id")
      ->required()
      ->check(CLI::IsMember(model_ids()));
  tre->add_option("--mode", tre_mode)
      ->check(CLI::IsMember({"one_day", "four_days", "all_days"}));
  tre->add_option("--scope", tre_scope)
      ->check(CLI::IsMember({"global", "local"}));
  tre->add_option("--out", tre_out, "report directory");
  tre->add_flag("--shuffle-labels", tre_shuffle,
                "permutation control: shuffle training targets");
  detail::PlanFlags tre_plans;
  tre_plans.add_options(tre);

  // diagnose
  auto* diag = app.add_subcommand(
      "diagnose", "dependence maps and feature importance tables");
  std::string diag_store, diag_out;
  DiagnoseFlags diag_flags;
  diag->add_option("--store", diag_store, "store directory")->required();
  diag->add_option("--out", diag_out, "output directory");
  diag->add_option("--mic-boot", diag_flags.mic_boot,
                   "bootstrap replicates per cell");
  diag->add_option("--mic-stride", diag_flags.mic_stride_days,
                   "sampling stride in days for the MIC series");
  diag->add_option("--months", diag_flags.n_months,
                   "monthly models for importance averaging");
  detail::PlanFlags diag_plans;
  diag_plans.add_options(diag);

  // report
  auto* rep = app.add_subcommand("report", "comparison table and skill maps");
  std::vector<std::string> rep_inputs;
  std::string rep_out;
  rep->add_option("--out", rep_out, "output directory")->required();
  rep->add_option("reports", rep_inputs, "report directories")->required();

  std::vector<const char*> argv;
  argv.push_back("ssf");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const auto cfg = detail::load_config(config_path);
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    const bool have_seed = seed_opt->count() > 0;
    if (!have_seed) seed = cfg.value("seed", seed);

    if (synth->parsed()) {
      nlohmann::json effective = cfg;
      SynthConfig sc = SynthConfig::defaults();
      if (cfg.contains("synth")) from_json(cfg["synth"], sc);
      if (have_seed || !cfg.contains("synth") || !cfg["synth"].contains("seed"))
        sc.seed = seed;
      if (synth_years > 0) sc.years = synth_years;
      if (synth_grid > 0) sc.n_lat = sc.n_lon = synth_grid;
      if (synth_snr > 0) sc.snr = synth_snr;
      effective["synth"] = sc;
      cmd_synth(synth_out, effective, sc.seed, true);
    } else if (prep->parsed()) {
      cmd_preprocess(prep_store, cfg);
    } else if (feat->parsed()) {
      cmd_featurize(feat_store, parse_mode(feat_mode), parse_scope(feat_scope),
                    feat_month);
    } else if (tre->parsed()) {
      tre_plans.merge_config(cfg);
      ModelSpec spec;
      spec.id = tre_model;
      spec.mode = parse_mode(tre_mode);
      spec.scope = parse_scope(tre_scope);
      spec.seed = seed;
      spec.shuffle_labels = tre_shuffle;
      if (cfg.contains("hyper")) spec.hyper = cfg["hyper"];
      nlohmann::json effective{{"command", "train-eval"},
                               {"model", spec.id},
                               {"mode", tre_mode},
                               {"scope", tre_scope},
                               {"seed", seed},
                               {"shuffle_labels", tre_shuffle},
                               {"hyper", spec.hyper},
                               {"plans", tre_plans.to_json()}};
      cmd_train_eval(tre_store, spec, tre_plans, tre_out, jobs, effective);
    } else if (diag->parsed()) {
      diag_plans.merge_config(cfg);
      nlohmann::json effective{{"command", "diagnose"},
                               {"seed", seed},
                               {"mic_boot", diag_flags.mic_boot},
                               {"mic_stride", diag_flags.mic_stride_days},
                               {"months", diag_flags.n_months},
                               {"plans", diag_plans.to_json()}};
      cmd_diagnose(diag_store, diag_plans, diag_flags, seed, jobs, diag_out,
                   effective);
    } else if (rep->parsed()) {
      nlohmann::json effective{{"command", "report"}, {"inputs", rep_inputs}};
      cmd_report(rep_inputs, rep_out, effective);
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace ssf::cli
