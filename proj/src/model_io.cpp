#include "ebcobart/model_io.hpp"

#include <fstream>

#include "ebcobart/serialize.hpp"

namespace ebcobart {

nlohmann::json drawset_to_json(const DrawSet& draws,
                               const std::vector<std::string>& covariate_names) {
  nlohmann::json forests = nlohmann::json::array();
  for (const Forest& f : draws.forests)
    forests.push_back(forest_to_json(f, draws.scaling));
  return {{"version", 1},
          {"p", draws.p},
          {"K", draws.K},
          {"n_train", draws.n_train},
          {"response_kind",
           draws.kind == ResponseKind::binary ? "binary" : "continuous"},
          {"response_scaling", {{"min", draws.scaling.min}, {"max", draws.scaling.max}}},
          {"covariates", covariate_names},
          {"forests", std::move(forests)},
          {"sigma2", draws.sigma2},
          {"loglik", draws.loglik},
          {"split_vars", draws.split_vars},
          {"chain_index", draws.chain_index},
          {"sweep_index", draws.sweep_index}};
}

DrawSet drawset_from_json(const nlohmann::json& doc,
                          std::vector<std::string>* covariate_names) {
  if (doc.at("version").get<int>() != 1)
    throw InputError("model json: unsupported version");
  DrawSet ds;
  ds.p = doc.at("p").get<std::size_t>();
  ds.K = doc.at("K").get<std::size_t>();
  ds.n_train = doc.at("n_train").get<std::size_t>();
  const std::string kind = doc.at("response_kind").get<std::string>();
  if (kind == "binary")
    ds.kind = ResponseKind::binary;
  else if (kind == "continuous")
    ds.kind = ResponseKind::continuous;
  else
    throw InputError("model json: unknown response kind '" + kind + "'");
  ds.scaling.min = doc.at("response_scaling").at("min").get<double>();
  ds.scaling.max = doc.at("response_scaling").at("max").get<double>();
  if (covariate_names)
    *covariate_names = doc.at("covariates").get<std::vector<std::string>>();
  for (const nlohmann::json& f : doc.at("forests"))
    ds.forests.push_back(forest_from_json(f));
  ds.sigma2 = doc.at("sigma2").get<std::vector<double>>();
  ds.loglik = doc.at("loglik").get<std::vector<std::vector<double>>>();
  ds.split_vars = doc.at("split_vars").get<std::vector<std::vector<std::int32_t>>>();
  ds.chain_index = doc.at("chain_index").get<std::vector<int>>();
  ds.sweep_index = doc.at("sweep_index").get<std::vector<int>>();
  if (ds.forests.size() != ds.sigma2.size())
    throw InputError("model json: forest/sigma2 count mismatch");
  return ds;
}

void save_drawset(const DrawSet& draws, const std::string& path,
                  const std::vector<std::string>& covariate_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << drawset_to_json(draws, covariate_names) << "\n";
  if (!out) throw InputError("failed writing '" + path + "'");
}

DrawSet load_drawset(const std::string& path,
                     std::vector<std::string>* covariate_names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  nlohmann::json doc;
  in >> doc;
  return drawset_from_json(doc, covariate_names);
}

}  // namespace ebcobart
