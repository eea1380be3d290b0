#pragma once

#include <string>

#include <json.hpp>

#include "ebcobart/tree.hpp"

namespace ebcobart {

// Affine window the continuous response was mapped from onto [-1/2, 1/2].
// For binary responses min=0, max=1 and no mapping is applied.
struct ResponseScaling {
  double min = 0.0;
  double max = 1.0;

  double to_internal(double y) const {
    return (y - min) / (max - min) - 0.5;
  }
  double to_original(double g) const {
    return (g + 0.5) * (max - min) + min;
  }
  double range() const { return max - min; }
};

// Versioned forest document: {version, K, sigma2, response_scaling:{min,max},
// trees: [preorder node list, explicit "kind" per node]}. Reals round-trip
// bit-exactly (shortest-decimal encoding).
nlohmann::json forest_to_json(const Forest& forest, const ResponseScaling& scaling);
Forest forest_from_json(const nlohmann::json& doc, ResponseScaling* scaling = nullptr);

}  // namespace ebcobart
