#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ebcobart/errors.hpp"

namespace ebcobart {

// Row-major dense matrix, the only matrix shape this library needs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }
};

struct SplitRule {
  std::int32_t var_index = -1;
  double cut_value = 0.0;
};

// Arena node: leaf iff left < 0. Depth is stored so prior evaluation is a
// single pass over the arena.
struct TreeNode {
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t depth = 0;
  SplitRule split;
  double mu = 0.0;

  bool is_leaf() const { return left < 0; }
};

class Tree {
 public:
  Tree() { nodes_.push_back(TreeNode{}); }  // single-terminal tree, mu = 0

  static Tree stump(double mu = 0.0) {
    Tree t;
    t.nodes_[0].mu = mu;
    return t;
  }

  // adopt a prebuilt arena (root at index 0)
  static Tree from_nodes(std::vector<TreeNode> nodes) {
    Tree t;
    t.nodes_ = std::move(nodes);
    return t;
  }

  std::span<const TreeNode> nodes() const { return nodes_; }
  std::span<TreeNode> nodes() { return nodes_; }
  const TreeNode& node(std::int32_t i) const { return nodes_[i]; }
  TreeNode& node(std::int32_t i) { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }

  std::int32_t add_node(const TreeNode& n) {
    nodes_.push_back(n);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  // index of the terminal node x routes to (left iff x[var] <= cut)
  std::int32_t route(const double* x) const {
    std::int32_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const TreeNode& n = nodes_[i];
      i = (x[n.split.var_index] <= n.split.cut_value) ? n.left : n.right;
    }
    return i;
  }

  double predict(const double* x) const { return nodes_[route(x)].mu; }
  double predict(std::span<const double> x) const { return predict(x.data()); }

  std::size_t leaf_count() const {
    std::size_t c = 0;
    for (const auto& n : nodes_) c += n.is_leaf();
    return c;
  }

  std::size_t internal_count() const { return nodes_.size() - leaf_count(); }

  // throws InputError if the arena is not a proper binary tree with
  // consistent depths
  void validate(std::size_t p = 0) const;

 private:
  std::vector<TreeNode> nodes_;
};

struct Forest {
  std::vector<Tree> trees;
  double sigma2 = 1.0;  // fixed to 1 for binary responses
};

enum class Preset { rigid, flexible };
enum class ResponseKind { continuous, binary };

struct Hyperparams {
  double alpha = 0.95;
  double beta = 2.0;
  double k = 2.0;
  double nu = 10.0;
  double lambda = 1.0;
  std::vector<double> s;  // splitting-variable probabilities, sums to 1

  // rigid: (alpha=0.1, beta=4, k=1); flexible: (alpha=0.95, beta=2, k=2);
  // s uniform
  static Hyperparams preset(Preset which, std::size_t p);

  // terminal-node prior scale c/(k*sqrt(K)): c = 0.5 continuous (response
  // scaled to [-1/2, 1/2]), c = 3 probit
  double sigma_mu(std::size_t n_trees, ResponseKind kind) const;

  void validate() const;
};

double leaf_scale_constant(ResponseKind kind);

// log of the tree-structure prior: split-variable terms plus the
// alpha(1+d)^-beta internal/terminal factors. Throws NumericError when a
// terminal factor 1 - alpha(1+d)^-beta is not positive.
double log_prior_tree(const Tree& tree, const Hyperparams& hyper);

// sum over leaves of log N(mu; 0, sigma_mu^2)
double log_prior_leaves(const Tree& tree, double sigma_mu);

double predict_tree(const Tree& tree, std::span<const double> x);

// row-wise sum over trees; throws InputError on column-count mismatch
std::vector<double> predict_forest(const Forest& forest, const Matrix& X);

}  // namespace ebcobart
