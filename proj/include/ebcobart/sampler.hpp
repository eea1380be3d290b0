#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ebcobart/dataset.hpp"
#include "ebcobart/rng.hpp"
#include "ebcobart/serialize.hpp"
#include "ebcobart/tree.hpp"

namespace ebcobart {

struct ChainConfig {
  int n_chains = 4;
  int n_samples = 2500;   // total sweeps per chain, burn-in included
  int n_burnin = 500;
  int thin = 1;
  std::uint64_t seed = 0;

  int retained_per_chain() const { return (n_samples - n_burnin + thin - 1) / thin; }

  void validate() const {
    if (n_chains < 1) throw InputError("chain config: n_chains must be >= 1");
    if (thin < 1) throw InputError("chain config: thin must be >= 1");
    if (n_burnin < 0 || n_burnin >= n_samples)
      throw InputError("chain config: need 0 <= n_burnin < n_samples");
    if (retained_per_chain() < 1)
      throw InputError("chain config: no retained draws");
  }
};

// Thinned post-burn-in posterior draws pooled over chains. Forest snapshots
// are the canonical per-draw record; split variables and the pointwise
// log-likelihoods are recorded by the sampler as it runs.
struct DrawSet {
  std::size_t p = 0;
  std::size_t K = 0;
  std::size_t n_train = 0;
  ResponseKind kind = ResponseKind::continuous;
  ResponseScaling scaling;

  std::vector<Forest> forests;                    // one per retained draw
  std::vector<double> sigma2;                     // per draw (internal scale)
  std::vector<std::vector<double>> loglik;        // per draw, length n_train
  std::vector<std::vector<std::int32_t>> split_vars;  // per draw, one per internal node
  std::vector<int> chain_index;                   // per draw
  std::vector<int> sweep_index;                   // per draw (within chain)

  std::size_t n_draws() const { return sigma2.size(); }

  // draws x N pointwise log-likelihood matrix view
  const std::vector<std::vector<double>>& loglik_matrix() const { return loglik; }
};

struct TraceRecord {
  int iteration = 0;  // sweep index within the chain
  int chain = 0;
  double sigma2 = 0.0;
  std::size_t total_leaves = 0;
  std::vector<std::int64_t> b;  // per-covariate split counts of this draw
};

struct SampleOptions {
  bool keep_forests = true;
  bool parallel_chains = true;
  const Matrix* X_test = nullptr;      // enables test-prediction tracking
  bool check_invariants = false;       // recompute residuals from scratch each sweep
  std::function<void(const TraceRecord&)> trace_sink;  // NDJSON dump hook
  std::function<void(std::span<const double>)> latent_observer;  // binary only
};

struct SampleResult {
  DrawSet draws;
  // mean over retained draws of the response-scale prediction
  // (per-draw probit-transformed first for binary)
  std::vector<double> train_pred_mean;
  std::vector<double> test_pred_mean;            // empty unless X_test given
  std::vector<std::vector<double>> sigma2_trace; // per chain (continuous)
  std::vector<std::vector<double>> mean_g_trace; // per chain (binary)
};

// r_t = y_work - sum_{t' != t} g_{t'}
std::vector<double> residual(std::span<const double> y_work, const Forest& forest,
                             const Matrix& X, std::size_t t);

// log integral of prod_h N(r_h; mu, sigma2) * N(mu; 0, sigma_mu2) dmu;
// 0 for an empty node
double node_marginal_loglik(std::span<const double> residuals_in_node,
                            double sigma2, double sigma_mu2);
double node_marginal_loglik_stats(std::size_t n, double sum_r, double sum_r2,
                                  double sigma2, double sigma_mu2);

// one inverse-gamma draw from IG((N+nu)/2, (nu*lambda + SSR)/2);
// continuous responses only (sigma2 is pinned to 1 under the probit link)
double draw_sigma2(std::span<const double> y, std::span<const double> yhat,
                   double nu, double lambda, Rng& rng,
                   ResponseKind kind = ResponseKind::continuous);

// z_i ~ N(g_i, 1) truncated to (0, inf) if y_i = 1, to (-inf, 0] if y_i = 0
std::vector<double> draw_latent_probit(std::span<const double> y01,
                                       std::span<const double> g, Rng& rng);

// potential scale reduction factor; >= 2 chains of equal length >= 2
double gelman_rubin(const std::vector<std::vector<double>>& traces);

// lambda such that the 75% quantile of the IG(nu/2, nu*lambda/2) prior equals
// (2/3) * var_y
double calibrate_lambda(double var_y, double nu);

SampleResult run_chains(const Dataset& data, const Hyperparams& hyper,
                        std::size_t n_trees, const ChainConfig& cfg,
                        const SampleOptions& opts = {});

// --- pieces exposed for unit tests -----------------------------------------

// One Metropolis-Hastings step on a single tree given its partial residual.
// Returns the (possibly unchanged) tree; `accepted_structure` reports whether
// the tree's shape changed.
Tree propose_and_accept_tree(const Tree& tree, std::span<const double> r_t,
                             const Matrix& X, const SplitGrid& grid,
                             double sigma2, double sigma_mu,
                             const Hyperparams& hyper, Rng& rng,
                             bool* accepted_structure = nullptr);

// Conjugate leaf draws given the routed residual subsets.
Tree draw_leaf_values(const Tree& tree, std::span<const double> r_t,
                      const Matrix& X, double sigma2, double sigma_mu, Rng& rng);

}  // namespace ebcobart
