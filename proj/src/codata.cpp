#include "ebcobart/codata.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "ebcobart/errors.hpp"

namespace ebcobart {

namespace {

constexpr double kRidge = 1e-6;       // stabilizes complete separation
constexpr double kScoreTol = 1e-8;
constexpr int kMaxIter = 100;

double expit(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log expit(x) and log(1 - expit(x)), overflow-safe
double log_expit(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

}  // namespace

void CoDataMatrix::validate() const {
  if (values.rows == 0 || values.cols == 0)
    throw InputError("codata: empty design matrix");
  if (column_meta.size() != values.cols)
    throw InputError("codata: column metadata count mismatch");
  for (std::size_t j = 0; j < values.cols; ++j) {
    for (std::size_t i = 0; i < values.rows; ++i) {
      const double v = values(i, j);
      if (!std::isfinite(v)) throw InputError("codata: non-finite entry");
      if (column_meta[j].kind == CoDataColumnKind::dummy && v != 0.0 && v != 1.0)
        throw InputError("codata: dummy column '" + column_meta[j].name +
                         "' has a non-0/1 entry");
    }
  }
}

CoDataMatrix build_grouping_codata(std::size_t p,
                                   const std::vector<std::int32_t>& group_of,
                                   const std::string& name_prefix) {
  if (group_of.size() != p) throw InputError("grouping codata: label count != p");
  std::int32_t n_groups = 0;
  for (std::int32_t g : group_of) {
    if (g < 0) throw InputError("grouping codata: negative group label");
    n_groups = std::max(n_groups, g + 1);
  }
  std::vector<std::int64_t> sizes(n_groups, 0);
  for (std::int32_t g : group_of) sizes[g] += 1;
  for (std::int32_t g = 0; g < n_groups; ++g)
    if (sizes[g] == 0)
      throw InputError("grouping codata: group " + std::to_string(g) + " is empty");

  CoDataMatrix out;
  out.values = Matrix(p, static_cast<std::size_t>(n_groups));
  for (std::size_t j = 0; j < p; ++j) out.values(j, group_of[j]) = 1.0;
  out.column_meta.resize(n_groups);
  for (std::int32_t g = 0; g < n_groups; ++g)
    out.column_meta[g] = {name_prefix + std::to_string(g + 1), CoDataColumnKind::dummy};
  return out;
}

CoDataMatrix assemble_codata(std::size_t p, const std::vector<RawCoDataColumn>& cols) {
  std::vector<std::vector<double>> out_cols;
  std::vector<CoDataColumnMeta> metas;
  bool have_grouping = false;

  for (const RawCoDataColumn& col : cols) {
    if (col.is_grouping) {
      CoDataMatrix dummies = build_grouping_codata(p, col.labels, col.name + "=");
      // later groupings drop their first (reference) column to keep the
      // combined design full rank
      const std::size_t start = have_grouping ? 1 : 0;
      for (std::size_t g = start; g < dummies.values.cols; ++g) {
        std::vector<double> column(p);
        for (std::size_t j = 0; j < p; ++j) column[j] = dummies.values(j, g);
        out_cols.push_back(std::move(column));
        metas.push_back(dummies.column_meta[g]);
      }
      have_grouping = true;
    } else {
      if (col.values.size() != p)
        throw InputError("codata column '" + col.name + "': length != p");
      out_cols.push_back(col.values);
      metas.push_back({col.name, CoDataColumnKind::continuous});
    }
  }
  if (!have_grouping) {
    out_cols.insert(out_cols.begin(), std::vector<double>(p, 1.0));
    metas.insert(metas.begin(), CoDataColumnMeta{"intercept", CoDataColumnKind::dummy});
  }

  CoDataMatrix out;
  out.values = Matrix(p, out_cols.size());
  for (std::size_t j = 0; j < out_cols.size(); ++j)
    for (std::size_t i = 0; i < p; ++i) out.values(i, j) = out_cols[j][i];
  out.column_meta = std::move(metas);
  out.validate();
  return out;
}

double codata_objective(const CoDataMatrix& C, const std::vector<std::int64_t>& b,
                        std::int64_t total, const std::vector<double>& eta) {
  const std::size_t p = C.p(), kappa = C.kappa();
  double obj = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    double lin = 0.0;
    for (std::size_t q = 0; q < kappa; ++q) lin += C.values(j, q) * eta[q];
    const double bj = static_cast<double>(b[j]);
    obj += bj * log_expit(lin) + (static_cast<double>(total) - bj) * log_expit(-lin);
  }
  double norm2 = 0.0;
  for (double e : eta) norm2 += e * e;
  return obj - kRidge * norm2;
}

CoDataFit fit_codata_model(const CoDataMatrix& C, const std::vector<std::int64_t>& b,
                           std::int64_t total) {
  C.validate();
  if (total <= 0) throw InputError("fit_codata_model: B must be > 0");
  if (b.size() != C.p()) throw InputError("fit_codata_model: count vector length != p");
  for (std::int64_t bj : b)
    if (bj < 0 || bj > total)
      throw InputError("fit_codata_model: counts must lie in [0, B]");

  const std::size_t p = C.p(), kappa = C.kappa();
  Eigen::MatrixXd X(p, kappa);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < kappa; ++j) X(i, j) = C.values(i, j);

  // reject rank-deficient designs, naming the dependent columns
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    if (rank < static_cast<Eigen::Index>(kappa)) {
      std::string names;
      const auto& perm = qr.colsPermutation().indices();
      for (Eigen::Index i = rank; i < perm.size(); ++i) {
        if (!names.empty()) names += ", ";
        names += C.column_meta[perm[i]].name;
      }
      throw InputError("fit_codata_model: rank-deficient co-data design; dependent columns: " + names);
    }
  }

  Eigen::VectorXd bd(p), eta = Eigen::VectorXd::Zero(kappa);
  for (std::size_t i = 0; i < p; ++i) bd(i) = static_cast<double>(b[i]);
  const double B = static_cast<double>(total);

  auto eta_vec = [&](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  double obj = codata_objective(C, b, total, eta_vec(eta));

  CoDataFit fit;
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    const Eigen::VectorXd lin = X * eta;
    Eigen::VectorXd w(p), mu(p);
    for (std::size_t i = 0; i < p; ++i) {
      const double pi = expit(lin(i));
      mu(i) = B * pi;
      w(i) = std::max(B * pi * (1.0 - pi), 1e-12);
    }
    const Eigen::VectorXd score = X.transpose() * (bd - mu) - 2.0 * kRidge * eta;
    if (score.lpNorm<Eigen::Infinity>() < kScoreTol) {
      fit.converged = true;
      fit.iterations = iter - 1;
      break;
    }
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal().array() += 2.0 * kRidge;
    const Eigen::VectorXd delta = H.ldlt().solve(score);

    // monotonicity guard: halve the Newton step until the penalized
    // objective does not decrease
    double step = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 50; ++halving) {
      const Eigen::VectorXd trial = eta + step * delta;
      const double trial_obj = codata_objective(C, b, total, eta_vec(trial));
      if (trial_obj >= obj) {
        eta = trial;
        obj = trial_obj;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      fit.eta = eta_vec(eta);
      fit.iterations = iter;
      fit.objective = obj;
      fit.weights = predict_weights(C, fit.eta);
      throw NumericError("fit_codata_model: IRLS failed to improve the objective (last eta retained in fit)");
    }
    fit.iterations = iter;
  }
  if (!fit.converged)
    throw NumericError("fit_codata_model: IRLS did not reach score tolerance within 100 iterations");

  fit.eta = eta_vec(eta);
  fit.objective = obj;
  fit.weights = predict_weights(C, fit.eta);
  return fit;
}

std::vector<double> predict_weights(const CoDataMatrix& C,
                                    const std::vector<double>& eta) {
  if (eta.size() != C.kappa())
    throw InputError("predict_weights: eta length != co-data column count");
  const std::size_t p = C.p();
  std::vector<double> w(p);
  double sum = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    double lin = 0.0;
    for (std::size_t q = 0; q < eta.size(); ++q) lin += C.values(j, q) * eta[q];
    w[j] = expit(lin);
    sum += w[j];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<std::pair<std::string, double>> group_weight_summary(
    const CoDataMatrix& C, const std::vector<double>& weights) {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t q = 0; q < C.kappa(); ++q) {
    if (C.column_meta[q].kind != CoDataColumnKind::dummy) continue;
    double sum = 0.0;
    for (std::size_t j = 0; j < C.p(); ++j)
      if (C.values(j, q) == 1.0) sum += weights[j];
    out.emplace_back(C.column_meta[q].name, sum);
  }
  return out;
}

}  // namespace ebcobart
