#pragma once

#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "ebcobart/codata.hpp"
#include "ebcobart/csv.hpp"
#include "ebcobart/orchestrator.hpp"

namespace ebcobart {

// Fit configuration document. Unknown keys anywhere are rejected.
struct FitConfig {
  std::string response_column = "y";
  std::string response_kind = "auto";  // auto | continuous | binary
  RunConfig run;
  std::optional<double> lambda_original;        // absent = auto-calibrated
  std::map<std::string, std::string> codata_kinds;  // column -> dummy-source|continuous

  ResponseKind resolve_kind(const Dataset& data) const;
};

FitConfig parse_fit_config(const nlohmann::json& doc);
FitConfig load_fit_config(const std::string& path);
nlohmann::json default_fit_config_json();  // the documented defaults

// covariates = every non-response column, in header order
Dataset dataset_from_csv(const CsvTable& table, const std::string& response_column,
                         const std::string& response_kind);

// header-only covariate matrix in the given column order
Matrix matrix_from_csv(const CsvTable& table,
                       const std::vector<std::string>& column_order);

// one row per covariate; kinds map assigns every column dummy-source or
// continuous; dummy-source labels are mapped to group ids in sorted order
CoDataMatrix codata_from_csv(const CsvTable& table, std::size_t p,
                             const std::map<std::string, std::string>& kinds);

}  // namespace ebcobart
