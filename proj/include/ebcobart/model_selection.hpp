#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ebcobart/sampler.hpp"

namespace ebcobart {

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
  std::vector<double> pointwise;  // -2*lppd_i + 2*p_waic_i per observation
};

// WAIC from a draws x N pointwise log-likelihood matrix: lppd via max-shifted
// log-mean-exp, p_waic via (n_draws - 1)-denominator sample variance
WaicResult waic(const std::vector<std::vector<double>>& loglik_matrix);

// earliest iteration attaining the minimum criterion value
std::size_t select_minimum(const std::vector<std::pair<std::size_t, double>>& history);

// mean over folds of held-out PMSE (continuous) or Brier score (binary) from
// refits on the complementary folds; fold assignment is a seeded permutation
double cv_criterion(const Dataset& data, const Hyperparams& hyper,
                    std::size_t n_trees, std::size_t folds, const ChainConfig& cfg);

}  // namespace ebcobart
