#include "ebcobart/model_selection.hpp"

#include <algorithm>
#include <cmath>

#include "ebcobart/kernels.hpp"

namespace ebcobart {

WaicResult waic(const std::vector<std::vector<double>>& loglik_matrix) {
  const std::size_t m = loglik_matrix.size();
  if (m < 2) throw InputError("waic: need at least 2 draws");
  const std::size_t n = loglik_matrix[0].size();
  for (const auto& row : loglik_matrix) {
    if (row.size() != n) throw InputError("waic: ragged log-likelihood matrix");
    for (double v : row)
      if (!std::isfinite(v)) throw InputError("waic: non-finite log-likelihood");
  }

  WaicResult out;
  out.pointwise.resize(n);
  std::vector<double> column(m);
  const double md = static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t q = 0; q < m; ++q) column[q] = loglik_matrix[q][i];
    const double shift = kernels::max(column.data(), m);
    const double lppd_i =
        shift + std::log(kernels::sum_exp(column.data(), shift, m) / md);
    const double mean = kernels::sum(column.data(), m) / md;
    double ss = 0.0;
    for (double v : column) ss += (v - mean) * (v - mean);
    const double var_i = ss / (md - 1.0);
    out.lppd += lppd_i;
    out.p_waic += var_i;
    out.pointwise[i] = -2.0 * lppd_i + 2.0 * var_i;
  }
  out.waic = -2.0 * out.lppd + 2.0 * out.p_waic;
  return out;
}

std::size_t select_minimum(const std::vector<std::pair<std::size_t, double>>& history) {
  if (history.empty()) throw InputError("select_minimum: empty history");
  std::size_t best = history[0].first;
  double best_val = history[0].second;
  for (const auto& [it, val] : history) {
    if (val < best_val) {
      best_val = val;
      best = it;
    }
  }
  return best;
}

double cv_criterion(const Dataset& data, const Hyperparams& hyper,
                    std::size_t n_trees, std::size_t folds, const ChainConfig& cfg) {
  data.validate();
  if (folds < 2) throw InputError("cv_criterion: need folds >= 2");
  if (folds > data.n()) throw InputError("cv_criterion: more folds than observations");

  // seeded permutation, partitioned as evenly as possible
  const std::size_t n = data.n();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(cfg.seed, {0x63767065u /*'cvpe'*/}));
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_int(static_cast<std::uint32_t>(i))]);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = i % folds;

  double total = 0.0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i)
      (fold_of[i] == f ? test_rows : train_rows).push_back(i);
    if (test_rows.empty() || train_rows.empty())
      throw InputError("cv_criterion: a fold has no observations");

    Dataset train;
    train.kind = data.kind;
    train.X = Matrix(train_rows.size(), data.p());
    train.y.resize(train_rows.size());
    for (std::size_t r = 0; r < train_rows.size(); ++r) {
      std::copy_n(data.X.row(train_rows[r]), data.p(), train.X.row(r));
      train.y[r] = data.y[train_rows[r]];
    }
    Matrix X_test(test_rows.size(), data.p());
    for (std::size_t r = 0; r < test_rows.size(); ++r)
      std::copy_n(data.X.row(test_rows[r]), data.p(), X_test.row(r));

    ChainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, {0x63766664u /*'cvfd'*/, f});
    SampleOptions opts;
    opts.keep_forests = false;
    opts.X_test = &X_test;
    const SampleResult res = run_chains(train, hyper, n_trees, fold_cfg, opts);

    double fold_err = 0.0;
    for (std::size_t r = 0; r < test_rows.size(); ++r) {
      const double d = res.test_pred_mean[r] - data.y[test_rows[r]];
      fold_err += d * d;
    }
    total += fold_err / static_cast<double>(test_rows.size());
  }
  return total / static_cast<double>(folds);
}

}  // namespace ebcobart
