#include "ebcobart/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ebcobart/eb_updates.hpp"
#include "ebcobart/kernels.hpp"
#include "ebcobart/model_io.hpp"

namespace ebcobart {

namespace {

constexpr std::uint64_t kIterTag = 0x65626974;  // 'ebit'

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

ResponseScaling response_scaling_of(const Dataset& data) {
  ResponseScaling scaling{0.0, 1.0};
  if (data.kind == ResponseKind::continuous) {
    auto [mn, mx] = std::minmax_element(data.y.begin(), data.y.end());
    scaling.min = *mn;
    scaling.max = *mx;
    if (scaling.min == scaling.max) {
      scaling.min -= 0.5;
      scaling.max += 0.5;
    }
  }
  return scaling;
}

double variance_of_scaled(const Dataset& data, const ResponseScaling& scaling) {
  const std::size_t n = data.n();
  if (n < 2) return 1.0;
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = scaling.to_internal(data.y[i]);
  const double mean = kernels::sum(ys.data(), n) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : ys) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(n - 1);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t m = sorted.size();
  if (m == 1) return sorted[0];
  const double h = q * static_cast<double>(m - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= m) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

Hyperparams initial_hyperparams(const Dataset& data, const RunConfig& cfg) {
  Hyperparams hyper = Hyperparams::preset(cfg.preset, data.p());
  hyper.nu = cfg.nu;
  if (data.kind == ResponseKind::continuous) {
    const ResponseScaling scaling = response_scaling_of(data);
    if (cfg.lambda) {
      const double r = scaling.range();
      hyper.lambda = *cfg.lambda / (r * r);  // user lambda is on the original scale
    } else {
      hyper.lambda = calibrate_lambda(variance_of_scaled(data, scaling), hyper.nu);
    }
  }
  return hyper;
}

EbFitResult eb_cobart_fit(const Dataset& data, const CoDataMatrix& codata,
                          const RunConfig& cfg, const EbTracking& tracking) {
  data.validate();
  codata.validate();
  cfg.validate();
  if (codata.p() != data.p())
    throw InputError("eb_cobart_fit: co-data row count != covariate count");

  Hyperparams hyper = initial_hyperparams(data, cfg);

  EbFitResult result;
  std::vector<DrawSet> cache;
  std::vector<std::vector<double>> train_preds;
  std::vector<std::pair<std::size_t, double>> criterion_history;

  for (std::size_t q = 0; q < cfg.max_iterations; ++q) {
    try {
      ChainConfig ccfg = cfg.chain;
      ccfg.seed = derive_seed(cfg.chain.seed, {kIterTag, q});
      SampleOptions opts;
      opts.keep_forests = true;
      opts.X_test = tracking.X_test;
      if (tracking.trace_sink)
        opts.trace_sink = [&tracking, q](const TraceRecord& rec) {
          tracking.trace_sink(q, rec);
        };
      SampleResult res = run_chains(data, hyper, cfg.n_trees, ccfg, opts);

      IterationRecord rec;
      rec.iteration = q;
      rec.hyper = hyper;

      const WaicResult w = waic(res.draws.loglik);
      rec.waic_lppd = w.lppd;
      rec.waic_p = w.p_waic;
      rec.criterion = w.waic;
      if (cfg.stopping.kind == Stopping::Kind::cv)
        rec.criterion = cv_criterion(data, hyper, cfg.n_trees, cfg.stopping.folds, ccfg);

      if (cfg.chain.n_chains >= 2) {
        const auto& traces = data.kind == ResponseKind::continuous
                                 ? res.sigma2_trace
                                 : res.mean_g_trace;
        try {
          rec.gelman_rubin_stat = gelman_rubin(traces);
        } catch (const NumericError&) {
          rec.gelman_rubin_stat = 0.0;
        }
      }

      const SplitCounts counts = count_splits(res.draws);
      rec.codata_fit = fit_codata_model(codata, counts.b, counts.total);
      rec.group_weight_summary = group_weight_summary(codata, rec.codata_fit.weights);

      // install the next iteration's hyperparameters
      Hyperparams next = hyper;
      next.s = rec.codata_fit.weights;
      if (cfg.update_alpha_k) {
        next.alpha = update_alpha_beta(res.draws, hyper.beta).alpha;
        next.k = update_k(res.draws, cfg.n_trees, leaf_scale_constant(data.kind));
      }

      criterion_history.emplace_back(q, rec.criterion);
      result.history.push_back(std::move(rec));
      train_preds.push_back(std::move(res.train_pred_mean));
      if (tracking.X_test)
        result.test_pred_by_iteration.push_back(std::move(res.test_pred_mean));

      if (tracking.keep_drawsets) {
        if (tracking.spill_dir.empty()) {
          cache.push_back(std::move(res.draws));
        } else {
          std::filesystem::create_directories(tracking.spill_dir);
          save_drawset(res.draws,
                       tracking.spill_dir + "/iteration_" + std::to_string(q) + ".json");
        }
      }
      hyper = std::move(next);
    } catch (const InputError& e) {
      throw InputError("eb iteration " + std::to_string(q) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("eb iteration " + std::to_string(q) + ": " + e.what());
    }
  }

  result.selected_iteration = select_minimum(criterion_history);
  result.train_pred_mean = std::move(train_preds[result.selected_iteration]);
  if (tracking.keep_drawsets) {
    if (tracking.spill_dir.empty()) {
      result.best = std::move(cache[result.selected_iteration]);
    } else {
      result.best = load_drawset(tracking.spill_dir + "/iteration_" +
                                 std::to_string(result.selected_iteration) + ".json");
    }
  }
  return result;
}

PlainFit fit_plain_bart(const Dataset& data, const RunConfig& cfg,
                        const Matrix* X_test, bool keep_forests) {
  data.validate();
  cfg.validate();
  const Hyperparams hyper = initial_hyperparams(data, cfg);
  ChainConfig ccfg = cfg.chain;
  ccfg.seed = derive_seed(cfg.chain.seed, {kIterTag, 0});  // = EB iteration 0
  SampleOptions opts;
  opts.keep_forests = keep_forests;
  opts.X_test = X_test;
  SampleResult res = run_chains(data, hyper, cfg.n_trees, ccfg, opts);
  PlainFit fit;
  fit.criterion = waic(res.draws.loglik).waic;
  fit.draws = std::move(res.draws);
  fit.train_pred_mean = std::move(res.train_pred_mean);
  fit.test_pred_mean = std::move(res.test_pred_mean);
  return fit;
}

Predictions predict(const DrawSet& draws, const Matrix& X_new) {
  if (X_new.cols != draws.p)
    throw InputError("predict: matrix has " + std::to_string(X_new.cols) +
                     " columns, model expects " + std::to_string(draws.p));
  if (draws.forests.empty()) throw InputError("predict: draw set carries no forests");

  const std::size_t m = draws.forests.size();
  const std::size_t n = X_new.rows;
  Predictions out;
  out.mean.assign(n, 0.0);
  out.lo.assign(n, 0.0);
  out.hi.assign(n, 0.0);
  if (n == 0) return out;

  // row blocks bound the draws x rows scratch
  const std::size_t block = 256;
  std::vector<std::vector<double>> per_row(std::min(block, n),
                                           std::vector<double>(m));
  for (std::size_t start = 0; start < n; start += block) {
    const std::size_t stop = std::min(n, start + block);
    for (auto& v : per_row) v.resize(m);
    for (std::size_t q = 0; q < m; ++q) {
      const Forest& f = draws.forests[q];
      for (std::size_t i = start; i < stop; ++i) {
        double g = 0.0;
        for (const Tree& t : f.trees) g += t.predict(X_new.row(i));
        const double value = draws.kind == ResponseKind::binary
                                 ? normal_cdf(g)
                                 : draws.scaling.to_original(g);
        per_row[i - start][q] = value;
      }
    }
    for (std::size_t i = start; i < stop; ++i) {
      auto& v = per_row[i - start];
      out.mean[i] = kernels::sum(v.data(), m) / static_cast<double>(m);
      std::sort(v.begin(), v.end());
      out.lo[i] = quantile_sorted(v, 0.025);
      out.hi[i] = quantile_sorted(v, 0.975);
    }
  }
  return out;
}

std::vector<PartialDependencePoint> partial_dependence(
    const DrawSet& draws, const Dataset& data, std::size_t var_index,
    std::span<const double> grid, std::size_t max_draws) {
  if (var_index >= data.p())
    throw InputError("partial_dependence: covariate index out of range");
  if (draws.forests.empty())
    throw InputError("partial_dependence: draw set carries no forests");

  const std::size_t m = draws.forests.size();
  std::vector<std::size_t> use;
  if (max_draws == 0 || max_draws >= m) {
    use.resize(m);
    for (std::size_t q = 0; q < m; ++q) use[q] = q;
  } else {
    use.resize(max_draws);
    for (std::size_t q = 0; q < max_draws; ++q) use[q] = q * m / max_draws;
  }

  std::vector<PartialDependencePoint> out;
  out.reserve(grid.size());
  Matrix X = data.X;
  for (double g : grid) {
    for (std::size_t i = 0; i < X.rows; ++i) X(i, var_index) = g;
    std::vector<double> per_draw(use.size());
    for (std::size_t qi = 0; qi < use.size(); ++qi) {
      const Forest& f = draws.forests[use[qi]];
      double acc = 0.0;
      for (std::size_t i = 0; i < X.rows; ++i) {
        double latent = 0.0;
        for (const Tree& t : f.trees) latent += t.predict(X.row(i));
        acc += latent;
      }
      double v = acc / static_cast<double>(X.rows);
      if (draws.kind == ResponseKind::continuous) v = draws.scaling.to_original(v);
      per_draw[qi] = v;
    }
    PartialDependencePoint pt;
    pt.grid_value = g;
    const double md = static_cast<double>(per_draw.size());
    pt.mean = kernels::sum(per_draw.data(), per_draw.size()) / md;
    double ss = 0.0;
    for (double v : per_draw) ss += (v - pt.mean) * (v - pt.mean);
    pt.sd = per_draw.size() > 1 ? std::sqrt(ss / (md - 1.0)) : 0.0;
    out.push_back(pt);
  }
  return out;
}

}  // namespace ebcobart
