#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ebcobart/codata.hpp"
#include "ebcobart/model_selection.hpp"
#include "ebcobart/sampler.hpp"

namespace ebcobart {

struct Stopping {
  enum class Kind { waic, cv };
  Kind kind = Kind::waic;
  std::size_t folds = 5;  // cv only
};

struct RunConfig {
  Preset preset = Preset::flexible;
  bool update_alpha_k = false;     // EB-coBART 2 when true
  std::size_t max_iterations = 20;
  Stopping stopping;
  std::size_t n_trees = 50;        // K
  ChainConfig chain;
  // sigma2 prior: nu fixed, lambda calibrated from the response variance
  // unless given (original scale)
  double nu = 10.0;
  std::optional<double> lambda;

  void validate() const {
    if (max_iterations < 1) throw InputError("run config: max_iterations must be >= 1");
    if (n_trees < 1) throw InputError("run config: K must be >= 1");
    chain.validate();
  }
};

struct IterationRecord {
  std::size_t iteration = 0;
  Hyperparams hyper;           // hyperparameters used at this iteration
  double criterion = 0.0;      // WAIC or CV value of this iteration's fit
  CoDataFit codata_fit;        // fit on this iteration's split counts
  std::vector<std::pair<std::string, double>> group_weight_summary;
  double waic_lppd = 0.0;
  double waic_p = 0.0;
  double gelman_rubin_stat = 0.0;  // 0 when undefined (single chain)
};

struct EbTracking {
  const Matrix* X_test = nullptr;  // records per-iteration mean test predictions
  bool keep_drawsets = true;       // cache every iteration's DrawSet
  std::string spill_dir;           // when set, cache as JSON files instead of RAM
  // forwarded to the sampler's draw-trace dump, tagged by EB iteration
  std::function<void(std::size_t, const TraceRecord&)> trace_sink;
};

struct EbFitResult {
  DrawSet best;                    // the cached DrawSet of the selected iteration
  std::size_t selected_iteration = 0;
  std::vector<IterationRecord> history;
  std::vector<std::vector<double>> test_pred_by_iteration;  // when tracking
  std::vector<double> train_pred_mean;   // of the selected iteration
};

// The outer empirical-Bayes loop: fit, count splits, fit the co-data model,
// install the new covariate weights (optionally alpha and k), track the
// criterion, and return the fit at the criterion-minimizing iteration.
EbFitResult eb_cobart_fit(const Dataset& data, const CoDataMatrix& codata,
                          const RunConfig& cfg, const EbTracking& tracking = {});

struct PlainFit {
  DrawSet draws;
  std::vector<double> train_pred_mean;
  std::vector<double> test_pred_mean;
  double criterion = 0.0;
};

// single sampler run with preset hyperparameters and uniform covariate weights
PlainFit fit_plain_bart(const Dataset& data, const RunConfig& cfg,
                        const Matrix* X_test = nullptr, bool keep_forests = true);

struct Predictions {
  std::vector<double> mean;   // response scale: value (continuous) or P(y=1)
  std::vector<double> lo;     // 2.5% posterior quantile
  std::vector<double> hi;     // 97.5% posterior quantile
};

// per-draw predictions (probit-transformed per draw for binary), then
// averaged; quantiles across draws
Predictions predict(const DrawSet& draws, const Matrix& X_new);

struct PartialDependencePoint {
  double grid_value = 0.0;
  double mean = 0.0;  // latent scale, averaged over training rows and draws
  double sd = 0.0;    // across draws
};

// marginal effect of one covariate: training rows with the covariate
// overwritten by each grid value; max_draws caps the draws used (0 = all)
std::vector<PartialDependencePoint> partial_dependence(
    const DrawSet& draws, const Dataset& data, std::size_t var_index,
    std::span<const double> grid, std::size_t max_draws = 0);

// internal-scale lambda calibrated per the run config and response
Hyperparams initial_hyperparams(const Dataset& data, const RunConfig& cfg);

}  // namespace ebcobart
