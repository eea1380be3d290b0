#include "ebcobart/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "ebcobart/errors.hpp"
#include "ebcobart/kernels.hpp"

namespace ebcobart {

double pmse(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw InputError("pmse: length mismatch");
  if (y_true.empty()) throw InputError("pmse: empty input");
  return kernels::mse(y_true.data(), y_pred.data(), y_true.size());
}

double brier(std::span<const double> y01, std::span<const double> prob) {
  if (y01.size() != prob.size()) throw InputError("brier: length mismatch");
  if (y01.empty()) throw InputError("brier: empty input");
  return kernels::mse(y01.data(), prob.data(), y01.size());
}

double auc(std::span<const double> y01, std::span<const double> score) {
  if (y01.size() != score.size()) throw InputError("auc: length mismatch");
  const std::size_t n = y01.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });

  // midranks over tied scores
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && score[order[j + 1]] == score[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (y01[k] == 1.0) {
      rank_sum_pos += rank[k];
      ++n_pos;
    } else if (y01[k] != 0.0) {
      throw InputError("auc: labels must be 0/1");
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw InputError("auc: need at least one positive and one negative label");
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

}  // namespace ebcobart
