#pragma once

#include <span>

namespace ebcobart {

// mean squared error; throws InputError on length mismatch
double pmse(std::span<const double> y_true, std::span<const double> y_pred);

// mean squared difference between predicted probabilities and 0/1 labels
double brier(std::span<const double> y01, std::span<const double> prob);

// rank-statistic AUC with midranks for ties; throws if either class is empty
double auc(std::span<const double> y01, std::span<const double> score);

}  // namespace ebcobart
