#include "ebcobart/cli_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace ebcobart {

namespace {

void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.count(key))
      throw InputError("config: unknown key '" + key + "' in " + where);
  }
}

}  // namespace

nlohmann::json default_fit_config_json() {
  return {{"response_column", "y"},
          {"response_kind", "auto"},
          {"preset", "flexible"},
          {"update_alpha_k", false},
          {"max_iterations", 20},
          {"stopping", {{"type", "waic"}}},
          {"K", 50},
          {"chains",
           {{"n_chains", 4}, {"n_samples", 2500}, {"n_burnin", 500}, {"thin", 1}}},
          {"seed", 0},
          {"nu", 10.0},
          {"lambda", "auto"},
          {"codata_kinds", nlohmann::json::object()}};
}

FitConfig parse_fit_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError("config: document must be a JSON object");
  reject_unknown_keys(doc,
                      {"response_column", "response_kind", "preset", "update_alpha_k",
                       "max_iterations", "stopping", "K", "chains", "seed", "nu",
                       "lambda", "codata_kinds"},
                      "the top-level object");

  FitConfig cfg;
  cfg.response_column = doc.value("response_column", cfg.response_column);
  cfg.response_kind = doc.value("response_kind", cfg.response_kind);
  if (cfg.response_kind != "auto" && cfg.response_kind != "continuous" &&
      cfg.response_kind != "binary")
    throw InputError("config: response_kind must be auto, continuous or binary");

  const std::string preset = doc.value("preset", std::string("flexible"));
  if (preset == "rigid")
    cfg.run.preset = Preset::rigid;
  else if (preset == "flexible")
    cfg.run.preset = Preset::flexible;
  else
    throw InputError("config: preset must be rigid or flexible");

  cfg.run.update_alpha_k = doc.value("update_alpha_k", false);
  cfg.run.max_iterations = doc.value("max_iterations", std::size_t{20});
  cfg.run.n_trees = doc.value("K", std::size_t{50});
  cfg.run.nu = doc.value("nu", 10.0);

  if (doc.contains("stopping")) {
    const nlohmann::json& st = doc.at("stopping");
    reject_unknown_keys(st, {"type", "folds"}, "stopping");
    const std::string type = st.value("type", std::string("waic"));
    if (type == "waic") {
      cfg.run.stopping.kind = Stopping::Kind::waic;
    } else if (type == "cv") {
      cfg.run.stopping.kind = Stopping::Kind::cv;
      cfg.run.stopping.folds = st.value("folds", std::size_t{5});
    } else {
      throw InputError("config: stopping.type must be waic or cv");
    }
  }

  if (doc.contains("chains")) {
    const nlohmann::json& ch = doc.at("chains");
    reject_unknown_keys(ch, {"n_chains", "n_samples", "n_burnin", "thin"}, "chains");
    cfg.run.chain.n_chains = ch.value("n_chains", cfg.run.chain.n_chains);
    cfg.run.chain.n_samples = ch.value("n_samples", cfg.run.chain.n_samples);
    cfg.run.chain.n_burnin = ch.value("n_burnin", cfg.run.chain.n_burnin);
    cfg.run.chain.thin = ch.value("thin", cfg.run.chain.thin);
  }
  cfg.run.chain.seed = doc.value("seed", std::uint64_t{0});

  if (doc.contains("lambda") && doc.at("lambda") != "auto") {
    if (!doc.at("lambda").is_number())
      throw InputError("config: lambda must be \"auto\" or a number");
    cfg.lambda_original = doc.at("lambda").get<double>();
    cfg.run.lambda = cfg.lambda_original;
  }

  if (doc.contains("codata_kinds")) {
    for (const auto& [col, kind] : doc.at("codata_kinds").items()) {
      const std::string k = kind.get<std::string>();
      if (k != "dummy-source" && k != "continuous")
        throw InputError("config: codata kind for '" + col +
                         "' must be dummy-source or continuous");
      cfg.codata_kinds[col] = k;
    }
  }

  cfg.run.validate();
  return cfg;
}

FitConfig load_fit_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_fit_config(doc);
}

ResponseKind FitConfig::resolve_kind(const Dataset& data) const {
  if (response_kind == "continuous") return ResponseKind::continuous;
  if (response_kind == "binary") return ResponseKind::binary;
  const bool all01 = std::all_of(data.y.begin(), data.y.end(),
                                 [](double v) { return v == 0.0 || v == 1.0; });
  return all01 ? ResponseKind::binary : ResponseKind::continuous;
}

Dataset dataset_from_csv(const CsvTable& table, const std::string& response_column,
                         const std::string& response_kind) {
  const std::size_t y_col = table.column(response_column);
  if (table.n_cols() < 2)
    throw InputError("csv: need at least one covariate column besides '" +
                     response_column + "'");
  if (table.n_rows() == 0) throw InputError("csv: no data rows");

  Dataset data;
  for (std::size_t j = 0; j < table.n_cols(); ++j)
    if (j != y_col) data.covariate_names.push_back(table.header[j]);
  data.X = Matrix(table.n_rows(), table.n_cols() - 1);
  data.y.resize(table.n_rows());
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    std::size_t out_j = 0;
    for (std::size_t j = 0; j < table.n_cols(); ++j) {
      const double v = csv_number(table.rows[i][j], table.header[j], i);
      if (j == y_col)
        data.y[i] = v;
      else
        data.X(i, out_j++) = v;
    }
  }

  FitConfig probe;
  probe.response_kind = response_kind;
  data.kind = probe.resolve_kind(data);
  data.validate();
  return data;
}

Matrix matrix_from_csv(const CsvTable& table,
                       const std::vector<std::string>& column_order) {
  Matrix X(table.n_rows(), column_order.size());
  std::vector<std::size_t> src(column_order.size());
  for (std::size_t j = 0; j < column_order.size(); ++j)
    src[j] = table.column(column_order[j]);
  for (std::size_t i = 0; i < table.n_rows(); ++i)
    for (std::size_t j = 0; j < column_order.size(); ++j)
      X(i, j) = csv_number(table.rows[i][src[j]], column_order[j], i);
  return X;
}

CoDataMatrix codata_from_csv(const CsvTable& table, std::size_t p,
                             const std::map<std::string, std::string>& kinds) {
  if (table.n_rows() != p)
    throw InputError("codata csv: " + std::to_string(table.n_rows()) +
                     " rows but the training data has " + std::to_string(p) +
                     " covariates (one row per covariate required)");
  std::vector<RawCoDataColumn> cols;
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    const std::string& name = table.header[j];
    const auto it = kinds.find(name);
    if (it == kinds.end())
      throw InputError("codata csv: column '" + name +
                       "' has no kind in the config codata_kinds map");
    RawCoDataColumn col;
    col.name = name;
    if (it->second == "dummy-source") {
      col.is_grouping = true;
      std::vector<std::string> labels(p);
      for (std::size_t i = 0; i < p; ++i) labels[i] = table.rows[i][j];
      std::vector<std::string> unique = labels;
      std::sort(unique.begin(), unique.end());
      unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
      col.labels.resize(p);
      for (std::size_t i = 0; i < p; ++i)
        col.labels[i] = static_cast<std::int32_t>(
            std::lower_bound(unique.begin(), unique.end(), labels[i]) -
            unique.begin());
    } else {
      col.values.resize(p);
      for (std::size_t i = 0; i < p; ++i)
        col.values[i] = csv_number(table.rows[i][j], name, i);
    }
    cols.push_back(std::move(col));
  }
  return assemble_codata(p, cols);
}

}  // namespace ebcobart
