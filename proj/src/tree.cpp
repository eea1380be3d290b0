#include "ebcobart/tree.hpp"

#include <cmath>
#include <limits>

namespace ebcobart {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

void Tree::validate(std::size_t p) const {
  if (nodes_.empty()) throw InputError("tree: empty arena");
  if (nodes_[0].depth != 0) throw InputError("tree: root depth must be 0");
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<std::int32_t> stack{0};
  std::size_t visited = 0;
  while (!stack.empty()) {
    const std::int32_t i = stack.back();
    stack.pop_back();
    if (i < 0 || static_cast<std::size_t>(i) >= nodes_.size() || seen[i])
      throw InputError("tree: invalid or shared node reference");
    seen[i] = 1;
    ++visited;
    const TreeNode& n = nodes_[i];
    if (n.is_leaf()) {
      if (n.right >= 0) throw InputError("tree: leaf with one child");
      continue;
    }
    if (n.right < 0) throw InputError("tree: internal node missing a child");
    if (p > 0 && (n.split.var_index < 0 ||
                  static_cast<std::size_t>(n.split.var_index) >= p))
      throw InputError("tree: split variable out of range");
    if (nodes_[n.left].depth != n.depth + 1 || nodes_[n.right].depth != n.depth + 1)
      throw InputError("tree: child depth must be parent depth + 1");
    stack.push_back(n.left);
    stack.push_back(n.right);
  }
  if (visited != nodes_.size()) throw InputError("tree: unreachable arena nodes");
}

Hyperparams Hyperparams::preset(Preset which, std::size_t p) {
  Hyperparams h;
  if (which == Preset::rigid) {
    h.alpha = 0.1;
    h.beta = 4.0;
    h.k = 1.0;
  } else {
    h.alpha = 0.95;
    h.beta = 2.0;
    h.k = 2.0;
  }
  h.nu = 10.0;
  h.lambda = 1.0;
  h.s.assign(p, p > 0 ? 1.0 / static_cast<double>(p) : 0.0);
  return h;
}

double leaf_scale_constant(ResponseKind kind) {
  return kind == ResponseKind::binary ? 3.0 : 0.5;
}

double Hyperparams::sigma_mu(std::size_t n_trees, ResponseKind kind) const {
  return leaf_scale_constant(kind) / (k * std::sqrt(static_cast<double>(n_trees)));
}

void Hyperparams::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("hyperparams: alpha must be in (0,1)");
  if (!(beta > 0.0)) throw InputError("hyperparams: beta must be > 0");
  if (!(k > 0.0)) throw InputError("hyperparams: k must be > 0");
  if (!(nu > 0.0) || !(lambda > 0.0))
    throw InputError("hyperparams: nu and lambda must be > 0");
  double total = 0.0;
  for (double sj : s) {
    if (!(sj > 0.0)) throw InputError("hyperparams: s entries must be > 0");
    total += sj;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw InputError("hyperparams: s must sum to 1");
}

double log_prior_tree(const Tree& tree, const Hyperparams& hyper) {
  double lp = 0.0;
  for (const TreeNode& n : tree.nodes()) {
    const double split_p =
        hyper.alpha * std::pow(1.0 + static_cast<double>(n.depth), -hyper.beta);
    if (n.is_leaf()) {
      const double stay = 1.0 - split_p;
      if (!(stay > 0.0))
        throw NumericError("log_prior_tree: terminal probability 1-alpha(1+d)^-beta <= 0");
      lp += std::log(stay);
    } else {
      if (!(split_p > 0.0)) throw NumericError("log_prior_tree: log of zero split probability");
      lp += std::log(split_p) + std::log(hyper.s[n.split.var_index]);
    }
  }
  return lp;
}

double log_prior_leaves(const Tree& tree, double sigma_mu) {
  const double var = sigma_mu * sigma_mu;
  double lp = 0.0;
  for (const TreeNode& n : tree.nodes()) {
    if (!n.is_leaf()) continue;
    lp += -0.5 * (kLog2Pi + std::log(var)) - n.mu * n.mu / (2.0 * var);
  }
  return lp;
}

double predict_tree(const Tree& tree, std::span<const double> x) {
  return tree.predict(x.data());
}

std::vector<double> predict_forest(const Forest& forest, const Matrix& X) {
  for (const Tree& t : forest.trees)
    for (const TreeNode& n : t.nodes())
      if (!n.is_leaf() && static_cast<std::size_t>(n.split.var_index) >= X.cols)
        throw InputError("predict_forest: matrix has fewer columns than the forest expects");
  std::vector<double> out(X.rows, 0.0);
  for (const Tree& t : forest.trees)
    for (std::size_t i = 0; i < X.rows; ++i) out[i] += t.predict(X.row(i));
  return out;
}

}  // namespace ebcobart
