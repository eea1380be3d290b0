#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ebcobart/sampler.hpp"

namespace ebcobart {

// Full DrawSet document: metadata plus one forest document per retained draw
// (each in the versioned forest schema). Used for fitted-model files and for
// the orchestrator's spill-to-disk cache; round-trips bit-exactly.
nlohmann::json drawset_to_json(const DrawSet& draws,
                               const std::vector<std::string>& covariate_names = {});
DrawSet drawset_from_json(const nlohmann::json& doc,
                          std::vector<std::string>* covariate_names = nullptr);

void save_drawset(const DrawSet& draws, const std::string& path,
                  const std::vector<std::string>& covariate_names = {});
DrawSet load_drawset(const std::string& path,
                     std::vector<std::string>* covariate_names = nullptr);

}  // namespace ebcobart
