#include "ebcobart/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>

#include "ebcobart/kernels.hpp"
#include "ebcobart/threading.hpp"

namespace ebcobart {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

double clamp_prob(double p) {
  return std::min(1.0 - 1e-12, std::max(1e-12, p));
}

double sample_variance(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n < 2) return 1.0;
  const double mean = kernels::sum(v.data(), n) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(n - 1);
}

}  // namespace

SplitGrid::SplitGrid(const Matrix& X) {
  cuts_.resize(X.cols);
  std::vector<double> col(X.rows);
  for (std::size_t j = 0; j < X.cols; ++j) {
    for (std::size_t i = 0; i < X.rows; ++i) col[i] = X(i, j);
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
    if (!col.empty()) col.pop_back();  // cut at the max leaves the right child empty
    cuts_[j] = col;
  }
}

std::vector<double> residual(std::span<const double> y_work, const Forest& forest,
                             const Matrix& X, std::size_t t) {
  if (t >= forest.trees.size()) throw InputError("residual: tree index out of range");
  std::vector<double> r(y_work.begin(), y_work.end());
  for (std::size_t u = 0; u < forest.trees.size(); ++u) {
    if (u == t) continue;
    const Tree& tree = forest.trees[u];
    for (std::size_t i = 0; i < X.rows; ++i) r[i] -= tree.predict(X.row(i));
  }
  return r;
}

double node_marginal_loglik_stats(std::size_t n, double sum_r, double sum_r2,
                                  double sigma2, double sigma_mu2) {
  if (!(sigma2 > 0.0) || !(sigma_mu2 > 0.0))
    throw InputError("node_marginal_loglik: variances must be positive");
  if (n == 0) return 0.0;
  const double nd = static_cast<double>(n);
  const double denom = sigma2 + nd * sigma_mu2;
  return -0.5 * nd * (kLog2Pi + std::log(sigma2)) +
         0.5 * std::log(sigma2 / denom) - sum_r2 / (2.0 * sigma2) +
         sigma_mu2 * sum_r * sum_r / (2.0 * sigma2 * denom);
}

double node_marginal_loglik(std::span<const double> residuals_in_node,
                            double sigma2, double sigma_mu2) {
  double s = 0.0, ss = 0.0;
  for (double r : residuals_in_node) {
    s += r;
    ss += r * r;
  }
  return node_marginal_loglik_stats(residuals_in_node.size(), s, ss, sigma2,
                                    sigma_mu2);
}

double draw_sigma2(std::span<const double> y, std::span<const double> yhat,
                   double nu, double lambda, Rng& rng, ResponseKind kind) {
  if (kind == ResponseKind::binary)
    throw InputError("draw_sigma2: sigma2 is fixed to 1 for binary responses");
  if (y.size() != yhat.size()) throw InputError("draw_sigma2: length mismatch");
  const double ssr = kernels::mse(y.data(), yhat.data(), y.size()) *
                     static_cast<double>(y.size());
  const double shape = (static_cast<double>(y.size()) + nu) / 2.0;
  const double scale = (nu * lambda + ssr) / 2.0;
  return rng.inverse_gamma(shape, scale);
}

std::vector<double> draw_latent_probit(std::span<const double> y01,
                                       std::span<const double> g, Rng& rng) {
  if (y01.size() != g.size()) throw InputError("draw_latent_probit: length mismatch");
  std::vector<double> z(y01.size());
  for (std::size_t i = 0; i < y01.size(); ++i)
    z[i] = rng.probit_latent(g[i], y01[i] == 1.0);
  return z;
}

double gelman_rubin(const std::vector<std::vector<double>>& traces) {
  if (traces.size() < 2) throw InputError("gelman_rubin: need >= 2 chains");
  const std::size_t n = traces[0].size();
  if (n < 2) throw InputError("gelman_rubin: need chain length >= 2");
  for (const auto& t : traces)
    if (t.size() != n) throw InputError("gelman_rubin: unequal chain lengths");

  const double m = static_cast<double>(traces.size());
  const double nd = static_cast<double>(n);
  std::vector<double> means;
  means.reserve(traces.size());
  double w = 0.0;
  for (const auto& t : traces) {
    const double mu = kernels::sum(t.data(), n) / nd;
    means.push_back(mu);
    double ss = 0.0;
    for (double x : t) ss += (x - mu) * (x - mu);
    w += ss / (nd - 1.0);
  }
  w /= m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b_over_n = 0.0;
  for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= (m - 1.0);
  if (w == 0.0)
    throw NumericError("gelman_rubin: zero within-chain variance, diagnostic undefined");
  const double var_plus = (nd - 1.0) / nd * w + b_over_n;
  return std::sqrt(var_plus / w);
}

double calibrate_lambda(double var_y, double nu) {
  if (!(var_y > 0.0)) return 1.0;
  // q75 of IG(nu/2, nu*lambda/2) equals q <=> nu*lambda/q is the 25% quantile
  // of chi^2_nu
  const boost::math::chi_squared_distribution<double> chi2(nu);
  const double q = (2.0 / 3.0) * var_y;
  return q * boost::math::quantile(chi2, 0.25) / nu;
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings tree move
// ---------------------------------------------------------------------------

namespace {

struct MoveWeights {
  double grow = 0.0, prune = 0.0, change = 0.0;
};

// GROW 0.25 / PRUNE 0.25 / CHANGE 0.50, renormalized over feasible moves
MoveWeights move_weights(std::size_t n_internal, std::size_t n_nog) {
  MoveWeights w;
  w.grow = 0.25;
  w.prune = n_nog > 0 ? 0.25 : 0.0;
  w.change = n_internal > 0 ? 0.5 : 0.0;
  const double total = w.grow + w.prune + w.change;
  w.grow /= total;
  w.prune /= total;
  w.change /= total;
  return w;
}

struct NodeLists {
  std::vector<std::int32_t> leaves;
  std::vector<std::int32_t> internals;
  std::vector<std::int32_t> nogs;  // internal nodes with two terminal children
};

NodeLists collect_nodes(const Tree& tree) {
  NodeLists out;
  const auto nodes = tree.nodes();
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(nodes.size()); ++i) {
    const TreeNode& n = nodes[i];
    if (n.is_leaf()) {
      out.leaves.push_back(i);
    } else {
      out.internals.push_back(i);
      if (nodes[n.left].is_leaf() && nodes[n.right].is_leaf()) out.nogs.push_back(i);
    }
  }
  return out;
}

struct LeafStats {
  std::vector<std::int64_t> n;
  std::vector<double> sum;
  std::vector<double> sum2;

  void reset(std::size_t n_nodes) {
    n.assign(n_nodes, 0);
    sum.assign(n_nodes, 0.0);
    sum2.assign(n_nodes, 0.0);
  }

  void accumulate(std::span<const std::int32_t> assign, std::span<const double> r) {
    for (std::size_t i = 0; i < assign.size(); ++i) {
      const std::int32_t a = assign[i];
      n[a] += 1;
      sum[a] += r[i];
      sum2[a] += r[i] * r[i];
    }
  }
};

double log_split_prob(double alpha, double beta, std::int32_t depth) {
  return std::log(alpha) - beta * std::log1p(static_cast<double>(depth));
}

double log_stay_prob(double alpha, double beta, std::int32_t depth) {
  const double sp =
      alpha * std::pow(1.0 + static_cast<double>(depth), -beta);
  return std::log1p(-sp);
}

struct MhOutcome {
  Tree tree;
  std::vector<std::int32_t> assign;
  bool structure_changed = false;
};

// One MH step; nullopt means the proposal was rejected (input state stands).
std::optional<MhOutcome> mh_step(const Tree& tree,
                                 std::span<const std::int32_t> assign,
                                 const LeafStats& stats,
                                 std::span<const double> r, const Matrix& X,
                                 const SplitGrid& grid, const Hyperparams& hyper,
                                 const CategoricalSampler& var_sampler,
                                 double sigma2, double sigma_mu2, Rng& rng) {
  const NodeLists lists = collect_nodes(tree);
  const MoveWeights w = move_weights(lists.internals.size(), lists.nogs.size());
  const double u_move = rng.uniform();

  const double alpha = hyper.alpha, beta = hyper.beta;

  if (u_move < w.grow) {
    // GROW: split a uniformly chosen terminal
    const std::int32_t leaf =
        lists.leaves[rng.uniform_int(static_cast<std::uint32_t>(lists.leaves.size()))];
    const auto var = static_cast<std::int32_t>(var_sampler.draw(rng));
    const auto& cuts = grid.cuts(var);
    if (cuts.empty()) return std::nullopt;
    const double cut = cuts[rng.uniform_int(static_cast<std::uint32_t>(cuts.size()))];

    std::int64_t n_left = 0;
    double sum_left = 0.0, sum2_left = 0.0;
    for (std::size_t i = 0; i < assign.size(); ++i) {
      if (assign[i] != leaf) continue;
      if (X(i, var) <= cut) {
        ++n_left;
        sum_left += r[i];
        sum2_left += r[i] * r[i];
      }
    }
    const std::int64_t n_right = stats.n[leaf] - n_left;
    if (n_left == 0 || n_right == 0) return std::nullopt;  // empty child: auto-reject
    const double sum_right = stats.sum[leaf] - sum_left;
    const double sum2_right = stats.sum2[leaf] - sum2_left;

    const std::int32_t d = tree.node(leaf).depth;
    const double delta_ml =
        node_marginal_loglik_stats(n_left, sum_left, sum2_left, sigma2, sigma_mu2) +
        node_marginal_loglik_stats(n_right, sum_right, sum2_right, sigma2, sigma_mu2) -
        node_marginal_loglik_stats(stats.n[leaf], stats.sum[leaf], stats.sum2[leaf],
                                   sigma2, sigma_mu2);
    const double delta_prior = log_split_prob(alpha, beta, d) +
                               2.0 * log_stay_prob(alpha, beta, d + 1) -
                               log_stay_prob(alpha, beta, d);
    // s_j and the uniform cut probability cancel against the proposal density

    // proposed tree
    Tree prop = tree;
    TreeNode left_child, right_child;
    left_child.depth = d + 1;
    right_child.depth = d + 1;
    const std::int32_t li = prop.add_node(left_child);
    const std::int32_t ri = prop.add_node(right_child);
    TreeNode& parent = prop.node(leaf);
    parent.left = li;
    parent.right = ri;
    parent.split = SplitRule{var, cut};
    parent.mu = 0.0;

    const NodeLists prop_lists = collect_nodes(prop);
    const MoveWeights w_prop =
        move_weights(prop_lists.internals.size(), prop_lists.nogs.size());
    const double log_accept =
        delta_ml + delta_prior + std::log(w_prop.prune) -
        std::log(static_cast<double>(prop_lists.nogs.size())) - std::log(w.grow) +
        std::log(static_cast<double>(lists.leaves.size()));

    if (std::log(rng.uniform_pos()) >= log_accept) return std::nullopt;

    MhOutcome out{std::move(prop), std::vector<std::int32_t>(assign.begin(), assign.end()), true};
    for (std::size_t i = 0; i < out.assign.size(); ++i)
      if (out.assign[i] == leaf) out.assign[i] = X(i, var) <= cut ? li : ri;
    return out;
  }

  if (u_move < w.grow + w.prune) {
    // PRUNE: collapse a uniformly chosen internal node with two terminal children
    const std::int32_t nog =
        lists.nogs[rng.uniform_int(static_cast<std::uint32_t>(lists.nogs.size()))];
    const TreeNode& z = tree.node(nog);
    const std::int32_t d = z.depth;
    const std::int64_t n_merged = stats.n[z.left] + stats.n[z.right];
    const double sum_merged = stats.sum[z.left] + stats.sum[z.right];
    const double sum2_merged = stats.sum2[z.left] + stats.sum2[z.right];

    const double delta_ml =
        node_marginal_loglik_stats(n_merged, sum_merged, sum2_merged, sigma2, sigma_mu2) -
        node_marginal_loglik_stats(stats.n[z.left], stats.sum[z.left], stats.sum2[z.left],
                                   sigma2, sigma_mu2) -
        node_marginal_loglik_stats(stats.n[z.right], stats.sum[z.right],
                                   stats.sum2[z.right], sigma2, sigma_mu2);
    const double delta_prior = log_stay_prob(alpha, beta, d) -
                               log_split_prob(alpha, beta, d) -
                               2.0 * log_stay_prob(alpha, beta, d + 1);

    // proposed tree: rebuild the arena without the two pruned children
    std::vector<TreeNode> arena;
    arena.reserve(tree.size() - 2);
    std::vector<std::int32_t> remap(tree.size(), -1);
    std::vector<std::int32_t> order;  // preorder with the nog turned into a leaf
    order.reserve(tree.size());
    {
      std::vector<std::int32_t> st{0};
      while (!st.empty()) {
        const std::int32_t id = st.back();
        st.pop_back();
        order.push_back(id);
        const TreeNode& n = tree.node(id);
        if (!n.is_leaf() && id != nog) {
          st.push_back(n.right);
          st.push_back(n.left);
        }
      }
    }
    for (std::size_t k = 0; k < order.size(); ++k)
      remap[order[k]] = static_cast<std::int32_t>(k);
    for (std::int32_t id : order) {
      TreeNode n = tree.node(id);
      if (id == nog) {
        n.left = -1;
        n.right = -1;
        n.split = SplitRule{};
        n.mu = 0.0;
      } else if (!n.is_leaf()) {
        n.left = remap[n.left];
        n.right = remap[n.right];
      }
      arena.push_back(n);
    }
    Tree prop = Tree::from_nodes(std::move(arena));

    const NodeLists prop_lists = collect_nodes(prop);
    const MoveWeights w_prop =
        move_weights(prop_lists.internals.size(), prop_lists.nogs.size());
    const double log_accept =
        delta_ml + delta_prior + std::log(w_prop.grow) -
        std::log(static_cast<double>(prop_lists.leaves.size())) +
        std::log(static_cast<double>(lists.nogs.size())) - std::log(w.prune);

    if (std::log(rng.uniform_pos()) >= log_accept) return std::nullopt;

    MhOutcome out;
    out.assign.resize(assign.size());
    const std::int32_t merged = remap[nog];
    for (std::size_t i = 0; i < assign.size(); ++i) {
      const std::int32_t a = assign[i];
      out.assign[i] =
          (a == tree.node(nog).left || a == tree.node(nog).right) ? merged : remap[a];
    }
    out.tree = std::move(prop);
    out.structure_changed = true;
    return out;
  }

  // CHANGE: redraw the rule of a uniformly chosen internal node
  const std::int32_t target =
      lists.internals[rng.uniform_int(static_cast<std::uint32_t>(lists.internals.size()))];
  const auto var = static_cast<std::int32_t>(var_sampler.draw(rng));
  const auto& cuts = grid.cuts(var);
  if (cuts.empty()) return std::nullopt;
  const double cut = cuts[rng.uniform_int(static_cast<std::uint32_t>(cuts.size()))];

  Tree prop = tree;
  prop.node(target).split = SplitRule{var, cut};

  // leaves under the target subtree
  std::vector<char> under(tree.size(), 0);
  {
    std::vector<std::int32_t> st{target};
    while (!st.empty()) {
      const std::int32_t id = st.back();
      st.pop_back();
      under[id] = 1;
      const TreeNode& n = tree.node(id);
      if (!n.is_leaf()) {
        st.push_back(n.left);
        st.push_back(n.right);
      }
    }
  }

  // re-route affected rows through the proposed subtree
  std::vector<std::int32_t> new_assign(assign.begin(), assign.end());
  LeafStats new_stats;
  new_stats.reset(prop.size());
  double old_ml = 0.0;
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (!under[assign[i]]) continue;
    std::int32_t id = target;
    const double* x = X.row(i);
    while (!prop.node(id).is_leaf()) {
      const TreeNode& n = prop.node(id);
      id = x[n.split.var_index] <= n.split.cut_value ? n.left : n.right;
    }
    new_assign[i] = id;
    new_stats.n[id] += 1;
    new_stats.sum[id] += r[i];
    new_stats.sum2[id] += r[i] * r[i];
  }
  double new_ml = 0.0;
  bool empty_leaf = false;
  for (std::int32_t id = 0; id < static_cast<std::int32_t>(prop.size()); ++id) {
    if (!under[id] || !prop.node(id).is_leaf()) continue;
    if (new_stats.n[id] == 0) {
      empty_leaf = true;
      break;
    }
    new_ml += node_marginal_loglik_stats(new_stats.n[id], new_stats.sum[id],
                                         new_stats.sum2[id], sigma2, sigma_mu2);
    old_ml += node_marginal_loglik_stats(stats.n[id], stats.sum[id], stats.sum2[id],
                                         sigma2, sigma_mu2);
  }
  if (empty_leaf) return std::nullopt;

  // prior rule terms cancel against the symmetric proposal; pure ml ratio
  if (std::log(rng.uniform_pos()) >= new_ml - old_ml) return std::nullopt;

  MhOutcome out{std::move(prop), std::move(new_assign), true};
  return out;
}

std::vector<std::int32_t> route_all(const Tree& tree, const Matrix& X) {
  std::vector<std::int32_t> assign(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) assign[i] = tree.route(X.row(i));
  return assign;
}

}  // namespace

Tree propose_and_accept_tree(const Tree& tree, std::span<const double> r_t,
                             const Matrix& X, const SplitGrid& grid,
                             double sigma2, double sigma_mu,
                             const Hyperparams& hyper, Rng& rng,
                             bool* accepted_structure) {
  if (r_t.size() != X.rows)
    throw InputError("propose_and_accept_tree: residual length != row count");
  const CategoricalSampler var_sampler(hyper.s);
  const std::vector<std::int32_t> assign = route_all(tree, X);
  LeafStats stats;
  stats.reset(tree.size());
  stats.accumulate(assign, r_t);
  auto out = mh_step(tree, assign, stats, r_t, X, grid, hyper, var_sampler, sigma2,
                     sigma_mu * sigma_mu, rng);
  if (accepted_structure) *accepted_structure = out.has_value();
  return out ? std::move(out->tree) : tree;
}

Tree draw_leaf_values(const Tree& tree, std::span<const double> r_t,
                      const Matrix& X, double sigma2, double sigma_mu, Rng& rng) {
  const std::vector<std::int32_t> assign = route_all(tree, X);
  LeafStats stats;
  stats.reset(tree.size());
  stats.accumulate(assign, r_t);
  Tree out = tree;
  const double sigma_mu2 = sigma_mu * sigma_mu;
  for (auto& n : out.nodes()) {
    if (!n.is_leaf()) continue;
    const std::size_t id = static_cast<std::size_t>(&n - out.nodes().data());
    const double cnt = static_cast<double>(stats.n[id]);
    if (cnt == 0.0) {
      n.mu = rng.normal(0.0, sigma_mu);
    } else {
      const double v = 1.0 / (cnt / sigma2 + 1.0 / sigma_mu2);
      const double m = v * stats.sum[id] / sigma2;
      n.mu = rng.normal(m, std::sqrt(v));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

namespace {

struct ChainOutput {
  std::vector<Forest> forests;
  std::vector<double> sigma2;
  std::vector<std::vector<double>> loglik;
  std::vector<std::vector<std::int32_t>> split_vars;
  std::vector<int> sweep_index;
  std::vector<double> train_pred_sum;   // response scale
  std::vector<double> test_pred_sum;    // response scale
  std::vector<double> sigma2_trace;
  std::vector<double> mean_g_trace;
  std::vector<TraceRecord> trace;
  std::vector<std::vector<double>> latents;
};

class ChainSampler {
 public:
  ChainSampler(const Dataset& data, const SplitGrid& grid, const Hyperparams& hyper,
               std::size_t n_trees, const ChainConfig& cfg, const SampleOptions& opts,
               const ResponseScaling& scaling, int chain_id)
      : data_(data),
        grid_(grid),
        hyper_(hyper),
        opts_(opts),
        cfg_(cfg),
        scaling_(scaling),
        var_sampler_(hyper.s),
        K_(n_trees),
        N_(data.n()),
        chain_id_(chain_id),
        rng_(cfg.seed + static_cast<std::uint64_t>(chain_id)) {
    sigma_mu_ = hyper.sigma_mu(K_, data.kind);
    sigma_mu2_ = sigma_mu_ * sigma_mu_;

    y_work_.resize(N_);
    if (data.kind == ResponseKind::continuous) {
      for (std::size_t i = 0; i < N_; ++i) y_work_[i] = scaling_.to_internal(data.y[i]);
      sigma2_ = sample_variance(y_work_);
      if (!(sigma2_ > 0.0)) sigma2_ = 1.0;
    } else {
      // deterministic latent start; burn-in washes it out
      for (std::size_t i = 0; i < N_; ++i) y_work_[i] = data.y[i] == 1.0 ? 0.6745 : -0.6745;
      sigma2_ = 1.0;
    }

    trees_.assign(K_, Tree::stump());
    assign_.assign(K_, std::vector<std::int32_t>(N_, 0));
    mu_flat_.assign(K_, std::vector<double>(1, 0.0));
    R_ = y_work_;  // all trees predict 0

    if (opts_.X_test) {
      const std::size_t nt = opts_.X_test->rows;
      assign_test_.assign(K_, std::vector<std::int32_t>(nt, 0));
      acc_mu_.assign(K_, std::vector<double>(1, 0.0));
      out_.test_pred_sum.assign(nt, 0.0);
      if (data.kind == ResponseKind::binary) g_test_.assign(nt, 0.0);
    }
    out_.train_pred_sum.assign(N_, 0.0);
  }

  ChainOutput run() {
    scratch_r_.resize(N_);
    scratch_g_.resize(N_);
    const int n_retained = cfg_.retained_per_chain();
    out_.forests.reserve(opts_.keep_forests ? n_retained : 0);
    out_.sigma2.reserve(n_retained);

    for (int sweep = 0; sweep < cfg_.n_samples; ++sweep) {
      for (std::size_t t = 0; t < K_; ++t) update_tree(t);

      if (data_.kind == ResponseKind::continuous) {
        const double ssr = kernels::sumsq(R_.data(), N_);
        const double shape = (static_cast<double>(N_) + hyper_.nu) / 2.0;
        const double scale = (hyper_.nu * hyper_.lambda + ssr) / 2.0;
        sigma2_ = rng_.inverse_gamma(shape, scale);
      } else {
        update_latent();
      }

      if ((sweep & 0xFF) == 0xFF) resync_residual();
      if (opts_.check_invariants) check_residual_invariant();

      if (sweep >= cfg_.n_burnin && (sweep - cfg_.n_burnin) % cfg_.thin == 0)
        record(sweep);
    }
    flush_all_test_accumulators();
    return std::move(out_);
  }

 private:
  void update_tree(std::size_t t) {
    // r_t = R + g_t
    std::copy(R_.begin(), R_.end(), scratch_r_.begin());
    kernels::gather_add(scratch_r_.data(), mu_flat_[t].data(), assign_[t].data(), N_);

    LeafStats stats;
    stats.reset(trees_[t].size());
    stats.accumulate(assign_[t], scratch_r_);

    auto moved = mh_step(trees_[t], assign_[t], stats, scratch_r_, data_.X, grid_,
                         hyper_, var_sampler_, sigma2_, sigma_mu2_, rng_);
    if (moved) {
      flush_test_accumulator(t);
      trees_[t] = std::move(moved->tree);
      assign_[t] = std::move(moved->assign);
      stats.reset(trees_[t].size());
      stats.accumulate(assign_[t], scratch_r_);
      if (opts_.X_test) {
        reroute_test(t);
        acc_mu_[t].assign(trees_[t].size(), 0.0);
      }
      mu_flat_[t].assign(trees_[t].size(), 0.0);
    }

    // conjugate leaf draws
    auto nodes = trees_[t].nodes();
    for (std::size_t id = 0; id < nodes.size(); ++id) {
      if (!nodes[id].is_leaf()) continue;
      const double cnt = static_cast<double>(stats.n[id]);
      double mu;
      if (cnt == 0.0) {
        mu = rng_.normal(0.0, sigma_mu_);
      } else {
        const double v = 1.0 / (cnt / sigma2_ + 1.0 / sigma_mu2_);
        mu = rng_.normal(v * stats.sum[id] / sigma2_, std::sqrt(v));
      }
      nodes[id].mu = mu;
      mu_flat_[t][id] = mu;
    }

    // R = r_t - g_t_new
    std::copy(scratch_r_.begin(), scratch_r_.end(), R_.begin());
    kernels::gather_sub(R_.data(), mu_flat_[t].data(), assign_[t].data(), N_);
  }

  void update_latent() {
    // G = y_work - R; then z ~ truncated normal around G
    kernels::sub(scratch_g_.data(), y_work_.data(), R_.data(), N_);
    for (std::size_t i = 0; i < N_; ++i)
      y_work_[i] = rng_.probit_latent(scratch_g_[i], data_.y[i] == 1.0);
    kernels::sub(R_.data(), y_work_.data(), scratch_g_.data(), N_);
  }

  void reroute_test(std::size_t t) {
    const Matrix& XT = *opts_.X_test;
    auto& a = assign_test_[t];
    for (std::size_t i = 0; i < XT.rows; ++i) a[i] = trees_[t].route(XT.row(i));
  }

  // lazy per-leaf accumulation of retained leaf values between structure
  // changes; called before the assignment map goes stale
  void flush_test_accumulator(std::size_t t) {
    if (!opts_.X_test || data_.kind == ResponseKind::binary) return;
    kernels::gather_add(out_.test_pred_sum.data(), acc_mu_[t].data(),
                        assign_test_[t].data(), assign_test_[t].size());
    std::fill(acc_mu_[t].begin(), acc_mu_[t].end(), 0.0);
  }

  void flush_all_test_accumulators() {
    if (!opts_.X_test || data_.kind == ResponseKind::binary) return;
    for (std::size_t t = 0; t < K_; ++t) flush_test_accumulator(t);
  }

  void resync_residual() {
    std::copy(y_work_.begin(), y_work_.end(), R_.begin());
    for (std::size_t t = 0; t < K_; ++t)
      kernels::gather_sub(R_.data(), mu_flat_[t].data(), assign_[t].data(), N_);
  }

  void check_residual_invariant() const {
    for (std::size_t i = 0; i < N_; ++i) {
      double g = 0.0;
      for (std::size_t t = 0; t < K_; ++t) g += trees_[t].predict(data_.X.row(i));
      const double want = y_work_[i] - g;
      if (std::abs(want - R_[i]) > 1e-8)
        throw NumericError("sampler: residual bookkeeping drifted past 1e-8");
    }
    for (std::size_t t = 0; t < K_; ++t)
      if (trees_[t].leaf_count() != trees_[t].internal_count() + 1)
        throw NumericError("sampler: tree lost the L = Z + 1 invariant");
  }

  void record(int sweep) {
    // G = y_work - R
    kernels::sub(scratch_g_.data(), y_work_.data(), R_.data(), N_);

    std::vector<double> ll(N_);
    if (data_.kind == ResponseKind::continuous) {
      const double log_norm = -0.5 * (kLog2Pi + std::log(sigma2_));
      for (std::size_t i = 0; i < N_; ++i)
        ll[i] = log_norm - R_[i] * R_[i] / (2.0 * sigma2_);
      for (std::size_t i = 0; i < N_; ++i)
        out_.train_pred_sum[i] += scaling_.to_original(scratch_g_[i]);
      out_.sigma2_trace.push_back(sigma2_);
    } else {
      for (std::size_t i = 0; i < N_; ++i) {
        const double p = clamp_prob(normal_cdf(scratch_g_[i]));
        ll[i] = data_.y[i] == 1.0 ? std::log(p) : std::log1p(-p);
        out_.train_pred_sum[i] += p;
      }
      out_.mean_g_trace.push_back(kernels::sum(scratch_g_.data(), N_) /
                                  static_cast<double>(N_));
    }
    out_.loglik.push_back(std::move(ll));
    out_.sigma2.push_back(sigma2_);
    out_.sweep_index.push_back(sweep);

    std::vector<std::int32_t> vars;
    std::size_t total_leaves = 0;
    for (std::size_t t = 0; t < K_; ++t) {
      for (const TreeNode& n : trees_[t].nodes()) {
        if (n.is_leaf())
          ++total_leaves;
        else
          vars.push_back(n.split.var_index);
      }
    }
    out_.split_vars.push_back(std::move(vars));

    if (opts_.keep_forests) {
      Forest f;
      f.sigma2 = sigma2_;
      f.trees = trees_;
      out_.forests.push_back(std::move(f));
    }

    if (opts_.X_test) {
      if (data_.kind == ResponseKind::continuous) {
        for (std::size_t t = 0; t < K_; ++t) {
          const auto nodes = trees_[t].nodes();
          for (std::size_t id = 0; id < nodes.size(); ++id)
            if (nodes[id].is_leaf()) acc_mu_[t][id] += nodes[id].mu;
        }
      } else {
        // eager per-draw probit transform (averaging order matters)
        std::fill(g_test_.begin(), g_test_.end(), 0.0);
        for (std::size_t t = 0; t < K_; ++t)
          kernels::gather_add(g_test_.data(), mu_flat_[t].data(),
                              assign_test_[t].data(), g_test_.size());
        for (std::size_t i = 0; i < g_test_.size(); ++i)
          out_.test_pred_sum[i] += normal_cdf(g_test_[i]);
      }
    }

    if (opts_.trace_sink) {
      TraceRecord rec;
      rec.iteration = sweep;
      rec.chain = chain_id_;
      rec.sigma2 = sigma2_;
      rec.total_leaves = total_leaves;
      rec.b.assign(data_.p(), 0);
      for (std::int32_t v : out_.split_vars.back()) rec.b[v] += 1;
      out_.trace.push_back(std::move(rec));
    }
    if (opts_.latent_observer && data_.kind == ResponseKind::binary)
      out_.latents.emplace_back(y_work_);
  }

  const Dataset& data_;
  const SplitGrid& grid_;
  const Hyperparams& hyper_;
  const SampleOptions& opts_;
  const ChainConfig& cfg_;
  ResponseScaling scaling_;
  CategoricalSampler var_sampler_;
  std::size_t K_, N_;
  int chain_id_;
  Rng rng_;

  double sigma_mu_ = 1.0, sigma_mu2_ = 1.0, sigma2_ = 1.0;
  std::vector<double> y_work_, R_, scratch_r_, scratch_g_;
  std::vector<Tree> trees_;
  std::vector<std::vector<std::int32_t>> assign_;
  std::vector<std::vector<double>> mu_flat_;

  std::vector<std::vector<std::int32_t>> assign_test_;
  std::vector<std::vector<double>> acc_mu_;
  std::vector<double> g_test_;

  ChainOutput out_;
};

}  // namespace

SampleResult run_chains(const Dataset& data, const Hyperparams& hyper,
                        std::size_t n_trees, const ChainConfig& cfg,
                        const SampleOptions& opts) {
  data.validate();
  hyper.validate();
  cfg.validate();
  if (n_trees < 1) throw InputError("run_chains: need K >= 1");
  if (hyper.s.size() != data.p())
    throw InputError("run_chains: s length != covariate count");
  if (opts.X_test && opts.X_test->cols != data.p())
    throw InputError("run_chains: test matrix column count mismatch");

  ResponseScaling scaling;
  if (data.kind == ResponseKind::continuous) {
    auto [mn, mx] = std::minmax_element(data.y.begin(), data.y.end());
    scaling.min = *mn;
    scaling.max = *mx;
    if (scaling.min == scaling.max) {
      scaling.min -= 0.5;
      scaling.max += 0.5;
    }
  } else {
    scaling = ResponseScaling{0.0, 1.0};
  }

  const SplitGrid grid(data.X);

  std::vector<ChainOutput> outputs(cfg.n_chains);
  parallel_for(
      static_cast<std::size_t>(cfg.n_chains),
      [&](std::size_t c) {
        ChainSampler sampler(data, grid, hyper, n_trees, cfg, opts, scaling,
                             static_cast<int>(c));
        outputs[c] = sampler.run();
      },
      opts.parallel_chains ? 0 : 1);

  SampleResult result;
  DrawSet& ds = result.draws;
  ds.p = data.p();
  ds.K = n_trees;
  ds.n_train = data.n();
  ds.kind = data.kind;
  ds.scaling = scaling;

  std::size_t total = 0;
  for (const auto& o : outputs) total += o.sigma2.size();
  ds.sigma2.reserve(total);

  result.train_pred_mean.assign(data.n(), 0.0);
  if (opts.X_test) result.test_pred_mean.assign(opts.X_test->rows, 0.0);

  for (int c = 0; c < cfg.n_chains; ++c) {
    ChainOutput& o = outputs[c];
    for (std::size_t i = 0; i < o.sigma2.size(); ++i) {
      ds.sigma2.push_back(o.sigma2[i]);
      ds.loglik.push_back(std::move(o.loglik[i]));
      ds.split_vars.push_back(std::move(o.split_vars[i]));
      ds.chain_index.push_back(c);
      ds.sweep_index.push_back(o.sweep_index[i]);
      if (opts.keep_forests) ds.forests.push_back(std::move(o.forests[i]));
    }
    for (std::size_t i = 0; i < data.n(); ++i)
      result.train_pred_mean[i] += o.train_pred_sum[i];
    if (opts.X_test)
      for (std::size_t i = 0; i < result.test_pred_mean.size(); ++i)
        result.test_pred_mean[i] += o.test_pred_sum[i];
    if (!o.sigma2_trace.empty()) result.sigma2_trace.push_back(std::move(o.sigma2_trace));
    if (!o.mean_g_trace.empty()) result.mean_g_trace.push_back(std::move(o.mean_g_trace));
    if (opts.trace_sink)
      for (const TraceRecord& rec : o.trace) opts.trace_sink(rec);
    if (opts.latent_observer)
      for (const auto& z : o.latents) opts.latent_observer(z);
  }

  const double denom = static_cast<double>(total);
  for (double& v : result.train_pred_mean) v /= denom;
  if (opts.X_test) {
    for (double& v : result.test_pred_mean) v /= denom;
    if (data.kind == ResponseKind::continuous)
      for (double& v : result.test_pred_mean) v = scaling.to_original(v);
  }
  return result;
}

}  // namespace ebcobart
