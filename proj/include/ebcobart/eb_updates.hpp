#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ebcobart/sampler.hpp"

namespace ebcobart {

struct SplitCounts {
  std::vector<std::int64_t> b;  // per-covariate split counts, pooled
  std::int64_t total = 0;       // B
};

// pooled occurrences of each covariate over all internal nodes, trees, draws
// and chains
SplitCounts count_splits(const DrawSet& draws);

// b_j / B; throws NumericError when B = 0
std::vector<double> s1_estimate(const std::vector<std::int64_t>& b, std::int64_t total);

// k implied by the leaf-value MLE sigma_mu = sqrt(sum mu^2 / n_leaves) under
// sigma_mu = c/(k sqrt(K)); c is 0.5 (continuous) or 3 (probit)
double update_k(const DrawSet& draws, std::size_t n_trees, double c);

struct NuLambda {
  double nu = 0.0;
  double lambda = 0.0;
  int iterations = 0;
};

// maximum likelihood fit of IG(nu/2, nu*lambda/2) to positive draws; Newton
// on the shape through the digamma equation, scale profiled out
NuLambda update_nu_lambda(std::span<const double> sigma2_draws);

struct AlphaBeta {
  double alpha = 0.0;
  double beta = 0.0;
  bool boundary = false;  // alpha pinned at the lower box edge (all-stump input)
};

// maximizes the tree-structure log-likelihood over alpha in (eps, 1-eps) and
// beta in (0, beta_max]. With fixed_beta set, solves the 1-D alpha problem at
// that beta (monotone score, bisection); otherwise multi-start Nelder-Mead.
AlphaBeta update_alpha_beta(const DrawSet& draws,
                            std::optional<double> fixed_beta = std::nullopt);

// depth histograms backing the (alpha, beta) objective; exposed for tests
struct DepthHistogram {
  std::vector<std::int64_t> internal;  // count of internal nodes by depth
  std::vector<std::int64_t> terminal;  // count of terminal nodes by depth
};
DepthHistogram depth_histogram(const DrawSet& draws);
double alpha_beta_objective(const DepthHistogram& h, double alpha, double beta);

}  // namespace ebcobart
