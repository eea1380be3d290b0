#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebcobart/codata.hpp"
#include "ebcobart/metrics.hpp"
#include "ebcobart/orchestrator.hpp"

namespace ebcobart {

enum class SimRegime { sparse_nonlinear, dense_linear, uninformative };

SimRegime parse_regime(const std::string& name);  // throws InputError
std::string regime_name(SimRegime regime);

// response mean of the sparse nonlinear design at one covariate vector
// (0-based indices 0,1,2,100,101 are predictive)
double sparse_nonlinear_f(const double* x);
// five-block variant where every group of 100 covariates contributes equally
double uninformative_f(const double* x);

struct GeneratedData {
  Dataset data;
  std::vector<double> f_true;  // noise-free response means
};

// x ~ U(0,1)^p iid, y = f_SN(x) + N(0,1); requires p >= 102
GeneratedData gen_sparse_nonlinear(std::size_t n, std::size_t p, std::uint64_t seed);

struct DenseLinearData {
  Dataset data;
  std::vector<double> f_true;
  std::vector<double> theta;   // sorted decreasing Expo(1) coefficients
  CoDataMatrix codata;         // intercept + noisy theta column
};

// x ~ N(0,1) iid, y = x.theta + N(0,1); co-data = theta + noise with sd
// noise_frac * sd(theta)
DenseLinearData gen_dense_linear(std::size_t n, std::size_t p, double noise_frac,
                                 std::uint64_t seed);

struct UninformativeData {
  Dataset data;
  std::vector<double> f_true;
  std::vector<std::int32_t> group_of;  // 5 groups of 100 consecutive covariates
};

// p = 500, five equally-contributing blocks; grouping co-data is uninformative
UninformativeData gen_uninformative(std::size_t n, std::uint64_t seed);

struct ExperimentSettings {
  SimRegime regime = SimRegime::sparse_nonlinear;
  std::size_t n_train = 100;
  std::size_t n_test = 500;
  std::size_t p = 500;
  std::size_t groups = 5;           // sparse-nonlinear grouping
  double noise_frac = 0.2;          // dense-linear co-data noise
  std::vector<Preset> presets = {Preset::rigid, Preset::flexible};
  std::size_t replicates = 20;
  RunConfig run;                    // chain budget, K, max_iterations, stopping
};

struct ExperimentRow {
  std::size_t replicate = 0;
  std::string preset;
  std::string method;               // "bart" or "eb-cobart"
  double pmse_test = 0.0;
  double ratio = 0.0;               // eb-cobart rows: PMSE_EB / PMSE_BART
  std::size_t selected_iteration = 0;
  std::vector<double> group_weights;  // per dummy column at the selection
  std::string error;                // nonempty when the replicate failed
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<std::string> group_names;
};

// one row per replicate x preset x method; replicates run in parallel on
// seeds derived from the master seed by replicate index
ExperimentResult run_experiment(const ExperimentSettings& settings,
                                std::uint64_t seed);

// CSV rows + JSON summary (means/medians/quantiles per preset and method)
std::string experiment_csv(const ExperimentResult& result);
nlohmann::json experiment_summary(const ExperimentResult& result);

}  // namespace ebcobart
