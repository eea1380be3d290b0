// ebcobart: fit / predict / simulate / eval / pd front end.
// Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ebcobart/cli_config.hpp"
#include "ebcobart/kernels.hpp"
#include "ebcobart/metrics.hpp"
#include "ebcobart/model_io.hpp"
#include "ebcobart/sim.hpp"

namespace {

using namespace ebcobart;

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

nlohmann::json iteration_report(const std::vector<IterationRecord>& history,
                                std::size_t selected) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const IterationRecord& rec : history) {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [name, w] : rec.group_weight_summary) groups[name] = w;
    iterations.push_back({{"iteration", rec.iteration},
                          {"criterion", rec.criterion},
                          {"waic_lppd", rec.waic_lppd},
                          {"waic_p", rec.waic_p},
                          {"gelman_rubin", rec.gelman_rubin_stat},
                          {"alpha", rec.hyper.alpha},
                          {"beta", rec.hyper.beta},
                          {"k", rec.hyper.k},
                          {"eta", rec.codata_fit.eta},
                          {"codata_converged", rec.codata_fit.converged},
                          {"group_weights", std::move(groups)},
                          {"selected", rec.iteration == selected}});
  }
  return iterations;
}

int cmd_fit(const std::string& train_path, const std::string& config_path,
            const std::string& codata_path, const std::string& model_path,
            const std::string& report_path, const std::string& trace_path) {
  const FitConfig cfg = config_path.empty()
                            ? parse_fit_config(default_fit_config_json())
                            : load_fit_config(config_path);
  const CsvTable train_csv = read_csv_file(train_path);
  const Dataset data =
      dataset_from_csv(train_csv, cfg.response_column, cfg.response_kind);

  const bool eb_loop = cfg.run.max_iterations > 1;
  if (eb_loop && codata_path.empty())
    throw InputError("co-data required for EB loop (set max_iterations to 1 for plain BART)");

  std::ofstream trace_out;
  if (!trace_path.empty()) {
    trace_out.open(trace_path, std::ios::binary);
    if (!trace_out) throw InputError("cannot open '" + trace_path + "' for writing");
  }
  auto trace_record = [&](std::size_t eb_iter, const TraceRecord& rec) {
    nlohmann::json line = {{"eb_iteration", eb_iter},
                           {"iteration", rec.iteration},
                           {"chain", rec.chain},
                           {"sigma2", rec.sigma2},
                           {"total_leaves", rec.total_leaves},
                           {"b", rec.b}};
    trace_out << line << "\n";
  };

  nlohmann::json report;
  report["preset"] = cfg.run.preset == Preset::rigid ? "rigid" : "flexible";
  report["response_kind"] =
      data.kind == ResponseKind::binary ? "binary" : "continuous";
  report["seed"] = cfg.run.chain.seed;

  DrawSet draws;
  std::vector<double> train_fit;
  if (eb_loop) {
    const CsvTable codata_csv = read_csv_file(codata_path);
    const CoDataMatrix codata = codata_from_csv(codata_csv, data.p(), cfg.codata_kinds);
    EbTracking tracking;
    if (!trace_path.empty()) tracking.trace_sink = trace_record;
    EbFitResult fit = eb_cobart_fit(data, codata, cfg.run, tracking);
    report["selected_iteration"] = fit.selected_iteration;
    report["iterations"] = iteration_report(fit.history, fit.selected_iteration);
    draws = std::move(fit.best);
    train_fit = std::move(fit.train_pred_mean);
  } else {
    RunConfig run = cfg.run;
    const Hyperparams hyper = initial_hyperparams(data, run);
    ChainConfig ccfg = run.chain;
    ccfg.seed = derive_seed(run.chain.seed, {0x65626974, 0});
    SampleOptions opts;
    if (!trace_path.empty())
      opts.trace_sink = [&](const TraceRecord& rec) { trace_record(0, rec); };
    SampleResult res = run_chains(data, hyper, run.n_trees, ccfg, opts);
    const WaicResult w = waic(res.draws.loglik);
    report["selected_iteration"] = 0;
    report["iterations"] = {{{"iteration", 0},
                             {"criterion", w.waic},
                             {"waic_lppd", w.lppd},
                             {"waic_p", w.p_waic},
                             {"alpha", hyper.alpha},
                             {"beta", hyper.beta},
                             {"k", hyper.k},
                             {"selected", true}}};
    draws = std::move(res.draws);
    train_fit = std::move(res.train_pred_mean);
  }

  // sigma2 summaries on both scales
  if (data.kind == ResponseKind::continuous && !draws.sigma2.empty()) {
    const double mean_s2 =
        kernels::sum(draws.sigma2.data(), draws.sigma2.size()) /
        static_cast<double>(draws.sigma2.size());
    const double r = draws.scaling.range();
    report["sigma2_mean_internal"] = mean_s2;
    report["sigma2_mean_original"] = mean_s2 * r * r;
  }
  report["train_fit"] = train_fit;

  save_drawset(draws, model_path, data.covariate_names);
  if (!report_path.empty())
    write_text_file(report_path, report.dump(2) + "\n");
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
  std::vector<std::string> covariates;
  const DrawSet draws = load_drawset(model_path, &covariates);
  const CsvTable table = read_csv_file(data_path);

  // name-based alignment; extra columns are ignored, missing ones are an error
  std::set<std::string> have(table.header.begin(), table.header.end());
  std::vector<std::string> missing;
  for (const std::string& c : covariates)
    if (!have.count(c)) missing.push_back(c);
  if (!missing.empty()) {
    std::set<std::string> want(covariates.begin(), covariates.end());
    std::string msg = "covariate mismatch; symmetric difference:";
    for (const std::string& c : missing) msg += " -" + c;
    for (const std::string& c : table.header)
      if (!want.count(c)) msg += " +" + c;
    throw InputError(msg);
  }

  std::string out = "prediction,q2.5,q97.5\n";
  if (table.n_rows() > 0) {
    const Matrix X = matrix_from_csv(table, covariates);
    const Predictions pred = predict(draws, X);
    for (std::size_t i = 0; i < X.rows; ++i)
      out += format_double(pred.mean[i]) + "," + format_double(pred.lo[i]) + "," +
             format_double(pred.hi[i]) + "\n";
  }
  write_text_file(out_path, out);
  return 0;
}

int cmd_simulate(const std::string& regime, std::size_t replicates, std::size_t n,
                 std::size_t groups, const std::string& preset,
                 const std::string& budget, std::uint64_t seed,
                 std::size_t max_iterations, const std::string& csv_path,
                 const std::string& json_path) {
  ExperimentSettings settings;
  settings.regime = parse_regime(regime);
  settings.replicates = replicates;
  settings.n_train = n;
  settings.groups = groups;

  if (preset == "both") {
    settings.presets = {Preset::rigid, Preset::flexible};
  } else if (preset == "rigid") {
    settings.presets = {Preset::rigid};
  } else if (preset == "flexible") {
    settings.presets = {Preset::flexible};
  } else {
    throw InputError("preset must be rigid, flexible or both");
  }

  if (budget == "smoke") {
    settings.run.chain = ChainConfig{2, 250, 100, 1, 0};
    settings.run.max_iterations = 3;
  } else if (budget == "desk") {
    settings.run.chain = ChainConfig{4, 2500, 500, 1, 0};
    settings.run.max_iterations = 20;
  } else if (budget == "paper") {
    settings.run.chain = ChainConfig{10, 10000, 2000, 1, 0};
    settings.run.max_iterations = 40;
  } else {
    throw InputError("budget must be smoke, desk or paper");
  }
  if (max_iterations > 0) settings.run.max_iterations = max_iterations;

  const ExperimentResult result = run_experiment(settings, seed);
  write_text_file(csv_path, experiment_csv(result));

  nlohmann::json summary = experiment_summary(result);
  summary["settings"] = {{"regime", regime},
                         {"replicates", replicates},
                         {"n_train", n},
                         {"groups", groups},
                         {"preset", preset},
                         {"budget", budget},
                         {"seed", seed},
                         {"max_iterations", settings.run.max_iterations}};
  write_text_file(json_path, summary.dump(2) + "\n");

  for (const ExperimentRow& row : result.rows)
    if (!row.error.empty())
      std::cerr << "replicate " << row.replicate << " (" << row.preset
                << "): " << row.error << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path,
             const std::string& pred_column, const std::string& truth_column,
             const std::string& kind) {
  const CsvTable preds = read_csv_file(pred_path);
  const CsvTable truth = read_csv_file(truth_path);
  if (preds.n_rows() != truth.n_rows())
    throw InputError("eval: prediction and truth row counts differ");
  if (preds.n_rows() == 0) throw InputError("eval: no rows");

  const std::size_t pc = preds.column(pred_column);
  const std::size_t tc = truth.column(truth_column);
  std::vector<double> yhat(preds.n_rows()), y(truth.n_rows());
  for (std::size_t i = 0; i < preds.n_rows(); ++i) {
    yhat[i] = csv_number(preds.rows[i][pc], pred_column, i);
    y[i] = csv_number(truth.rows[i][tc], truth_column, i);
  }

  const bool all01 =
      std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0 || v == 1.0; });
  bool binary;
  if (kind == "auto") {
    binary = all01;
  } else if (kind == "binary") {
    if (!all01)
      throw InputError("eval: binary requested but the truth column is not 0/1");
    binary = true;
  } else if (kind == "continuous") {
    binary = false;
  } else {
    throw InputError("eval: kind must be auto, continuous or binary");
  }

  if (binary) {
    std::cout << "auc " << format_double(auc(y, yhat)) << "\n";
    std::cout << "brier " << format_double(brier(y, yhat)) << "\n";
  } else {
    std::cout << "pmse " << format_double(pmse(y, yhat)) << "\n";
  }
  return 0;
}

int cmd_pd(const std::string& model_path, const std::string& train_path,
           const std::string& config_path, const std::string& var,
           std::size_t grid_points, std::size_t max_draws,
           const std::string& out_path) {
  std::vector<std::string> covariates;
  const DrawSet draws = load_drawset(model_path, &covariates);
  const FitConfig cfg = config_path.empty()
                            ? parse_fit_config(default_fit_config_json())
                            : load_fit_config(config_path);
  const CsvTable train_csv = read_csv_file(train_path);
  Dataset data = dataset_from_csv(train_csv, cfg.response_column, cfg.response_kind);

  const auto it = std::find(covariates.begin(), covariates.end(), var);
  if (it == covariates.end())
    throw InputError("pd: covariate '" + var + "' not in the model");
  const std::size_t var_index = static_cast<std::size_t>(it - covariates.begin());

  double lo = data.X(0, var_index), hi = lo;
  for (std::size_t i = 0; i < data.n(); ++i) {
    lo = std::min(lo, data.X(i, var_index));
    hi = std::max(hi, data.X(i, var_index));
  }
  std::vector<double> grid(grid_points);
  for (std::size_t g = 0; g < grid_points; ++g)
    grid[g] = grid_points == 1
                  ? lo
                  : lo + (hi - lo) * static_cast<double>(g) /
                            static_cast<double>(grid_points - 1);

  const auto pd = partial_dependence(draws, data, var_index, grid, max_draws);
  std::string out = "grid_value,mean,sd\n";
  for (const auto& pt : pd)
    out += format_double(pt.grid_value) + "," + format_double(pt.mean) + "," +
           format_double(pt.sd) + "\n";
  if (out_path.empty())
    std::cout << out;
  else
    write_text_file(out_path, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EB-coBART: co-data guided Bayesian additive regression trees"};
  app.require_subcommand(1);

  std::string train_path, config_path, codata_path, model_path, report_path,
      trace_path;
  auto* fit = app.add_subcommand("fit", "fit a model to a training CSV");
  fit->add_option("--train", train_path, "training CSV (header row required)")
      ->required();
  fit->add_option("--config", config_path,
                  "fit config JSON; defaults match configs/example_config.json");
  fit->add_option("--codata", codata_path, "co-data CSV, one row per covariate");
  fit->add_option("--model", model_path, "output model JSON")->required();
  fit->add_option("--report", report_path, "output run report JSON");
  fit->add_option("--trace", trace_path, "newline-delimited JSON draw trace");

  std::string pr_model, pr_data, pr_out;
  auto* predict_cmd = app.add_subcommand("predict", "predict from a fitted model");
  predict_cmd->add_option("--model", pr_model, "model JSON from fit")->required();
  predict_cmd->add_option("--data", pr_data, "covariate CSV")->required();
  predict_cmd->add_option("--out", pr_out, "output predictions CSV")->required();

  std::string regime = "sparse-nonlinear", sim_preset = "both", budget = "desk";
  std::size_t replicates = 20, sim_n = 100, sim_groups = 5, sim_max_iter = 0;
  std::uint64_t sim_seed = 0;
  std::string sim_csv = "simulation.csv", sim_json = "simulation_summary.json";
  auto* simulate = app.add_subcommand("simulate", "run a simulation experiment");
  simulate->add_option("--regime", regime,
                       "sparse-nonlinear | dense-linear | uninformative");
  simulate->add_option("--replicates", replicates, "number of replicates");
  simulate->add_option("--n", sim_n, "training sample size");
  simulate->add_option("--groups", sim_groups, "grouping co-data group count");
  simulate->add_option("--preset", sim_preset, "rigid | flexible | both");
  simulate->add_option("--budget", budget, "smoke | desk | paper chain budget");
  simulate->add_option("--seed", sim_seed, "master seed");
  simulate->add_option("--max-iterations", sim_max_iter,
                       "override the budget's EB iteration count");
  simulate->add_option("--out-csv", sim_csv, "per-replicate results CSV");
  simulate->add_option("--out-json", sim_json, "aggregate summary JSON");

  std::string ev_pred, ev_truth, ev_pred_col = "prediction", ev_truth_col = "y",
              ev_kind = "auto";
  auto* eval = app.add_subcommand("eval", "score predictions against truth");
  eval->add_option("--predictions", ev_pred, "predictions CSV")->required();
  eval->add_option("--truth", ev_truth, "truth CSV")->required();
  eval->add_option("--prediction-column", ev_pred_col, "prediction column name");
  eval->add_option("--response", ev_truth_col, "truth column name");
  eval->add_option("--kind", ev_kind, "auto | continuous | binary");

  std::string pd_model, pd_train, pd_config, pd_var, pd_out;
  std::size_t pd_points = 20, pd_max_draws = 1000;
  auto* pd = app.add_subcommand("pd", "partial dependence of one covariate");
  pd->add_option("--model", pd_model, "model JSON from fit")->required();
  pd->add_option("--train", pd_train, "training CSV used for the fit")->required();
  pd->add_option("--config", pd_config, "fit config JSON (for the response column)");
  pd->add_option("--var", pd_var, "covariate name")->required();
  pd->add_option("--grid-points", pd_points, "equally spaced grid size");
  pd->add_option("--max-draws", pd_max_draws, "cap on posterior draws used (0 = all)");
  pd->add_option("--out", pd_out, "output CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (fit->parsed())
      return cmd_fit(train_path, config_path, codata_path, model_path, report_path,
                     trace_path);
    if (predict_cmd->parsed()) return cmd_predict(pr_model, pr_data, pr_out);
    if (simulate->parsed())
      return cmd_simulate(regime, replicates, sim_n, sim_groups, sim_preset, budget,
                          sim_seed, sim_max_iter, sim_csv, sim_json);
    if (eval->parsed())
      return cmd_eval(ev_pred, ev_truth, ev_pred_col, ev_truth_col, ev_kind);
    if (pd->parsed())
      return cmd_pd(pd_model, pd_train, pd_config, pd_var, pd_points, pd_max_draws,
                    pd_out);
  } catch (const ebcobart::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ebcobart::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
