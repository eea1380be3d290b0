#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ebcobart/tree.hpp"

namespace ebcobart {

enum class CoDataColumnKind { dummy, continuous };

struct CoDataColumnMeta {
  std::string name;
  CoDataColumnKind kind = CoDataColumnKind::continuous;
};

// p x kappa co-data design matrix: one row per covariate of the primary data.
struct CoDataMatrix {
  Matrix values;
  std::vector<CoDataColumnMeta> column_meta;

  std::size_t p() const { return values.rows; }
  std::size_t kappa() const { return values.cols; }
  void validate() const;
};

struct CoDataFit {
  std::vector<double> eta;      // kappa coefficients
  bool converged = false;
  int iterations = 0;
  std::vector<double> weights;  // normalized p-vector, strictly positive
  double objective = 0.0;       // penalized log-likelihood at eta
};

// full dummy coding of a grouping: p x G, row j has a 1 in column group_of[j];
// throws on an empty group
CoDataMatrix build_grouping_codata(std::size_t p,
                                   const std::vector<std::int32_t>& group_of,
                                   const std::string& name_prefix = "group");

// Raw co-data columns as ingested (grouping labels or continuous values).
struct RawCoDataColumn {
  std::string name;
  bool is_grouping = false;
  std::vector<std::int32_t> labels;  // when grouping: group id per covariate
  std::vector<double> values;        // when continuous
};

// Assembles the design matrix: the first grouping keeps all its columns and
// spans the intercept; later groupings drop their first column; continuous
// columns pass through. Without any grouping an explicit intercept column is
// prepended.
CoDataMatrix assemble_codata(std::size_t p, const std::vector<RawCoDataColumn>& cols);

// Binomial-logistic co-data model fit by IRLS with a small stabilizing ridge;
// b_j successes out of B trials per covariate row.
CoDataFit fit_codata_model(const CoDataMatrix& C, const std::vector<std::int64_t>& b,
                           std::int64_t total);

// expit(C eta) normalized to sum 1
std::vector<double> predict_weights(const CoDataMatrix& C,
                                    const std::vector<double>& eta);

// penalized binomial log-likelihood (exposed for the monotonicity tests)
double codata_objective(const CoDataMatrix& C, const std::vector<std::int64_t>& b,
                        std::int64_t total, const std::vector<double>& eta);

// summed normalized weight per dummy column (the paper-style group weights)
std::vector<std::pair<std::string, double>> group_weight_summary(
    const CoDataMatrix& C, const std::vector<double>& weights);

}  // namespace ebcobart
