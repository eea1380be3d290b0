#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ebcobart/errors.hpp"
#include "ebcobart/tree.hpp"

namespace ebcobart {

struct Dataset {
  Matrix X;                 // N x p covariates
  std::vector<double> y;    // length N; 0/1 for binary
  ResponseKind kind = ResponseKind::continuous;
  std::vector<std::string> covariate_names;  // optional, used by the CLI

  std::size_t n() const { return X.rows; }
  std::size_t p() const { return X.cols; }

  void validate() const {
    if (X.rows == 0 || X.cols == 0) throw InputError("dataset: N and p must be >= 1");
    if (y.size() != X.rows) throw InputError("dataset: response length != row count");
    for (double v : X.data)
      if (!std::isfinite(v)) throw InputError("dataset: non-finite covariate value");
    for (double v : y) {
      if (!std::isfinite(v)) throw InputError("dataset: non-finite response value");
      if (kind == ResponseKind::binary && v != 0.0 && v != 1.0)
        throw InputError("dataset: binary response must be 0/1");
    }
  }
};

// Per-covariate candidate split values: the observed training values of the
// covariate excluding its maximum (a cut at the maximum would always leave an
// empty right child). A covariate with a single distinct value has no cuts.
class SplitGrid {
 public:
  SplitGrid() = default;
  explicit SplitGrid(const Matrix& X);

  const std::vector<double>& cuts(std::size_t var) const { return cuts_[var]; }
  std::size_t n_cuts(std::size_t var) const { return cuts_[var].size(); }
  std::size_t n_vars() const { return cuts_.size(); }

 private:
  std::vector<std::vector<double>> cuts_;
};

}  // namespace ebcobart
