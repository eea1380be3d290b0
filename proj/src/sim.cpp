#include "ebcobart/sim.hpp"

#include <algorithm>
#include <cmath>

#include "ebcobart/csv.hpp"
#include "ebcobart/kernels.hpp"
#include "ebcobart/rng.hpp"
#include "ebcobart/threading.hpp"

namespace ebcobart {

namespace {

constexpr double kPi = 3.14159265358979323846;

// stream tags for the documented seed-splitting rule
constexpr std::uint64_t kTagX = 1;
constexpr std::uint64_t kTagNoise = 2;
constexpr std::uint64_t kTagTheta = 3;
constexpr std::uint64_t kTagCoData = 4;
constexpr std::uint64_t kTagTrain = 10;
constexpr std::uint64_t kTagTest = 11;
constexpr std::uint64_t kTagReplicate = 20;
constexpr std::uint64_t kTagPreset = 21;
constexpr std::uint64_t kTagBart = 22;
constexpr std::uint64_t kTagEb = 23;

Matrix uniform_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
  Matrix X(n, p);
  Rng rng(derive_seed(seed, kTagX));
  for (double& v : X.data) v = rng.uniform();
  return X;
}

Matrix normal_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
  Matrix X(n, p);
  Rng rng(derive_seed(seed, kTagX));
  for (double& v : X.data) v = rng.normal();
  return X;
}

std::vector<double> add_noise(const std::vector<double>& f, std::uint64_t seed) {
  std::vector<double> y(f.size());
  Rng rng(derive_seed(seed, kTagNoise));
  for (std::size_t i = 0; i < f.size(); ++i) y[i] = f[i] + rng.normal();
  return y;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double quantile_of(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
}

}  // namespace

SimRegime parse_regime(const std::string& name) {
  if (name == "sparse-nonlinear") return SimRegime::sparse_nonlinear;
  if (name == "dense-linear") return SimRegime::dense_linear;
  if (name == "uninformative") return SimRegime::uninformative;
  throw InputError("unknown simulation regime '" + name +
                   "' (expected sparse-nonlinear, dense-linear or uninformative)");
}

std::string regime_name(SimRegime regime) {
  switch (regime) {
    case SimRegime::sparse_nonlinear: return "sparse-nonlinear";
    case SimRegime::dense_linear: return "dense-linear";
    case SimRegime::uninformative: return "uninformative";
  }
  return "?";
}

double sparse_nonlinear_f(const double* x) {
  return 10.0 * std::sin(kPi * x[0] * x[1]) + 10.0 * x[2] +
         20.0 * (x[100] - 0.5) * (x[100] - 0.5) + 10.0 * x[101];
}

double uninformative_f(const double* x) {
  double f = 0.0;
  for (std::size_t o = 0; o < 500; o += 100) {
    f += 10.0 * std::sin(kPi * x[o] * x[o + 1]) +
         20.0 * (x[o + 2] - 0.5) * (x[o + 2] - 0.5) + 10.0 * x[o + 3] +
         10.0 * x[o + 4];
  }
  return f;
}

GeneratedData gen_sparse_nonlinear(std::size_t n, std::size_t p, std::uint64_t seed) {
  if (p < 102) throw InputError("gen_sparse_nonlinear: needs p >= 102");
  GeneratedData out;
  out.data.kind = ResponseKind::continuous;
  out.data.X = uniform_matrix(n, p, seed);
  out.f_true.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.f_true[i] = sparse_nonlinear_f(out.data.X.row(i));
  out.data.y = add_noise(out.f_true, seed);
  return out;
}

namespace {

DenseLinearData dense_linear_with_theta(std::size_t n, std::size_t p,
                                        std::vector<double> theta,
                                        double noise_frac, std::uint64_t seed) {
  DenseLinearData out;
  out.theta = std::move(theta);
  out.data.kind = ResponseKind::continuous;
  out.data.X = normal_matrix(n, p, seed);
  out.f_true.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.f_true[i] = kernels::dot(out.data.X.row(i), out.theta.data(), p);
  out.data.y = add_noise(out.f_true, seed);

  double mean = kernels::sum(out.theta.data(), p) / static_cast<double>(p);
  double ss = 0.0;
  for (double t : out.theta) ss += (t - mean) * (t - mean);
  const double sd_theta = p > 1 ? std::sqrt(ss / static_cast<double>(p - 1)) : 0.0;

  Rng rc(derive_seed(seed, kTagCoData));
  RawCoDataColumn col;
  col.name = "effect";
  col.values.resize(p);
  for (std::size_t j = 0; j < p; ++j)
    col.values[j] = out.theta[j] + noise_frac * sd_theta * rc.normal();
  out.codata = assemble_codata(p, {col});
  return out;
}

std::vector<double> draw_theta(std::size_t p, std::uint64_t seed) {
  Rng rt(derive_seed(seed, kTagTheta));
  std::vector<double> theta(p);
  for (double& t : theta) t = rt.exponential();
  std::sort(theta.begin(), theta.end(), std::greater<>());
  return theta;
}

}  // namespace

DenseLinearData gen_dense_linear(std::size_t n, std::size_t p, double noise_frac,
                                 std::uint64_t seed) {
  if (p < 1) throw InputError("gen_dense_linear: needs p >= 1");
  return dense_linear_with_theta(n, p, draw_theta(p, seed), noise_frac, seed);
}

UninformativeData gen_uninformative(std::size_t n, std::uint64_t seed) {
  constexpr std::size_t p = 500;
  UninformativeData out;
  out.data.kind = ResponseKind::continuous;
  out.data.X = uniform_matrix(n, p, seed);
  out.f_true.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.f_true[i] = uninformative_f(out.data.X.row(i));
  out.data.y = add_noise(out.f_true, seed);
  out.group_of.resize(p);
  for (std::size_t j = 0; j < p; ++j)
    out.group_of[j] = static_cast<std::int32_t>(j / 100);
  return out;
}

namespace {

std::vector<std::int32_t> consecutive_groups(std::size_t p, std::size_t groups) {
  std::vector<std::int32_t> g(p);
  for (std::size_t j = 0; j < p; ++j)
    g[j] = static_cast<std::int32_t>(std::min(j * groups / p, groups - 1));
  return g;
}

struct ReplicateInput {
  Dataset train;
  Dataset test;
  CoDataMatrix codata;
};

ReplicateInput make_replicate(const ExperimentSettings& s, std::uint64_t rep_seed) {
  ReplicateInput out;
  switch (s.regime) {
    case SimRegime::sparse_nonlinear: {
      out.train = gen_sparse_nonlinear(s.n_train, s.p, derive_seed(rep_seed, kTagTrain)).data;
      out.test = gen_sparse_nonlinear(s.n_test, s.p, derive_seed(rep_seed, kTagTest)).data;
      out.codata = build_grouping_codata(s.p, consecutive_groups(s.p, s.groups));
      break;
    }
    case SimRegime::dense_linear: {
      const std::uint64_t train_seed = derive_seed(rep_seed, kTagTrain);
      auto theta = draw_theta(s.p, train_seed);
      DenseLinearData train =
          dense_linear_with_theta(s.n_train, s.p, theta, s.noise_frac, train_seed);
      DenseLinearData test = dense_linear_with_theta(
          s.n_test, s.p, theta, s.noise_frac, derive_seed(rep_seed, kTagTest));
      out.train = std::move(train.data);
      out.test = std::move(test.data);
      out.codata = std::move(train.codata);
      break;
    }
    case SimRegime::uninformative: {
      UninformativeData train = gen_uninformative(s.n_train, derive_seed(rep_seed, kTagTrain));
      UninformativeData test = gen_uninformative(s.n_test, derive_seed(rep_seed, kTagTest));
      out.codata = build_grouping_codata(500, train.group_of);
      out.train = std::move(train.data);
      out.test = std::move(test.data);
      break;
    }
  }
  return out;
}

// continuous co-data reporting: Supp-style buckets of consecutive covariates
std::vector<double> bucket_weights(const std::vector<double>& w, std::size_t buckets) {
  std::vector<double> out(buckets, 0.0);
  for (std::size_t j = 0; j < w.size(); ++j)
    out[std::min(j * buckets / w.size(), buckets - 1)] += w[j];
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSettings& settings,
                                std::uint64_t seed) {
  settings.run.validate();
  if (settings.replicates < 1)
    throw InputError("run_experiment: need at least one replicate");

  ExperimentResult result;
  {
    // group naming matches the reporting scheme per regime
    if (settings.regime == SimRegime::dense_linear) {
      for (int b = 1; b <= 10; ++b)
        result.group_names.push_back("bucket" + std::to_string(b));
    } else {
      const std::size_t g =
          settings.regime == SimRegime::uninformative ? 5 : settings.groups;
      for (std::size_t i = 1; i <= g; ++i)
        result.group_names.push_back("group" + std::to_string(i));
    }
  }

  const std::size_t n_presets = settings.presets.size();
  std::vector<std::vector<ExperimentRow>> per_replicate(settings.replicates);

  parallel_for(settings.replicates, [&](std::size_t r) {
    std::vector<ExperimentRow>& rows = per_replicate[r];
    const std::uint64_t rep_seed = derive_seed(seed, {kTagReplicate, r});
    ReplicateInput input;
    try {
      input = make_replicate(settings, rep_seed);
    } catch (const std::exception& e) {
      ExperimentRow row;
      row.replicate = r;
      row.error = std::string("generation: ") + e.what();
      rows.push_back(row);
      return;
    }

    for (std::size_t pi = 0; pi < n_presets; ++pi) {
      const Preset preset = settings.presets[pi];
      const std::string preset_name = preset == Preset::rigid ? "rigid" : "flexible";
      try {
        RunConfig cfg = settings.run;
        cfg.preset = preset;
        cfg.chain.seed = derive_seed(rep_seed, {kTagPreset, pi, kTagBart});
        const PlainFit bart =
            fit_plain_bart(input.train, cfg, &input.test.X, /*keep_forests=*/false);
        const double pmse_bart = pmse(input.test.y, bart.test_pred_mean);

        cfg.chain.seed = derive_seed(rep_seed, {kTagPreset, pi, kTagEb});
        EbTracking tracking;
        tracking.X_test = &input.test.X;
        tracking.keep_drawsets = false;
        const EbFitResult eb = eb_cobart_fit(input.train, input.codata, cfg, tracking);
        const std::size_t sel = eb.selected_iteration;
        const double pmse_eb = pmse(input.test.y, eb.test_pred_by_iteration[sel]);

        ExperimentRow bart_row;
        bart_row.replicate = r;
        bart_row.preset = preset_name;
        bart_row.method = "bart";
        bart_row.pmse_test = pmse_bart;
        rows.push_back(std::move(bart_row));

        ExperimentRow eb_row;
        eb_row.replicate = r;
        eb_row.preset = preset_name;
        eb_row.method = "eb-cobart";
        eb_row.pmse_test = pmse_eb;
        eb_row.ratio = pmse_eb / pmse_bart;
        eb_row.selected_iteration = sel;
        const IterationRecord& rec = eb.history[sel];
        if (settings.regime == SimRegime::dense_linear) {
          eb_row.group_weights = bucket_weights(rec.codata_fit.weights, 10);
        } else {
          for (const auto& [name, w] : rec.group_weight_summary)
            eb_row.group_weights.push_back(w);
        }
        rows.push_back(std::move(eb_row));
      } catch (const std::exception& e) {
        ExperimentRow row;
        row.replicate = r;
        row.preset = preset_name;
        row.error = e.what();
        rows.push_back(row);
      }
    }
  });

  for (auto& rows : per_replicate)
    for (auto& row : rows) result.rows.push_back(std::move(row));
  return result;
}

std::string experiment_csv(const ExperimentResult& result) {
  std::string out = "replicate,preset,method,pmse,ratio,selected_iteration";
  for (const std::string& g : result.group_names) out += ",w_" + g;
  out += ",error\n";
  auto num = [](double v) { return format_double(v); };
  for (const ExperimentRow& row : result.rows) {
    out += std::to_string(row.replicate) + "," + row.preset + "," + row.method + ",";
    if (row.error.empty()) {
      out += num(row.pmse_test);
      out += ",";
      if (row.method == "eb-cobart") {
        out += num(row.ratio) + "," + std::to_string(row.selected_iteration);
      } else {
        out += ",";
      }
      for (std::size_t g = 0; g < result.group_names.size(); ++g) {
        out += ",";
        if (g < row.group_weights.size()) out += num(row.group_weights[g]);
      }
      out += ",";
    } else {
      out += ",,";
      for (std::size_t g = 0; g < result.group_names.size(); ++g) out += ",";
      out += ",\"" + row.error + "\"";
    }
    out += "\n";
  }
  return out;
}

nlohmann::json experiment_summary(const ExperimentResult& result) {
  nlohmann::json summary;
  summary["group_names"] = result.group_names;
  nlohmann::json cells = nlohmann::json::array();

  std::vector<std::pair<std::string, std::string>> keys;
  for (const ExperimentRow& row : result.rows) {
    if (row.error.empty() &&
        std::find(keys.begin(), keys.end(),
                  std::make_pair(row.preset, row.method)) == keys.end())
      keys.emplace_back(row.preset, row.method);
  }

  std::size_t failed = 0;
  for (const ExperimentRow& row : result.rows) failed += !row.error.empty();
  summary["failed_rows"] = failed;

  for (const auto& [preset, method] : keys) {
    std::vector<double> pmses, ratios, iters;
    std::vector<double> weight_sums;
    std::size_t n_weighted = 0;
    for (const ExperimentRow& row : result.rows) {
      if (!row.error.empty() || row.preset != preset || row.method != method) continue;
      pmses.push_back(row.pmse_test);
      if (method == "eb-cobart") {
        ratios.push_back(row.ratio);
        iters.push_back(static_cast<double>(row.selected_iteration));
        if (weight_sums.size() < row.group_weights.size())
          weight_sums.resize(row.group_weights.size(), 0.0);
        for (std::size_t g = 0; g < row.group_weights.size(); ++g)
          weight_sums[g] += row.group_weights[g];
        ++n_weighted;
      }
    }
    nlohmann::json cell;
    cell["preset"] = preset;
    cell["method"] = method;
    cell["replicates"] = pmses.size();
    cell["pmse"] = {{"mean", kernels::sum(pmses.data(), pmses.size()) /
                                 std::max<std::size_t>(1, pmses.size())},
                    {"median", median_of(pmses)},
                    {"q25", quantile_of(pmses, 0.25)},
                    {"q75", quantile_of(pmses, 0.75)}};
    if (!ratios.empty()) {
      cell["ratio"] = {{"mean", kernels::sum(ratios.data(), ratios.size()) /
                                    static_cast<double>(ratios.size())},
                       {"median", median_of(ratios)},
                       {"q25", quantile_of(ratios, 0.25)},
                       {"q75", quantile_of(ratios, 0.75)}};
      cell["selected_iteration"] = {{"mean", kernels::sum(iters.data(), iters.size()) /
                                                 static_cast<double>(iters.size())},
                                    {"median", median_of(iters)}};
      nlohmann::json mw = nlohmann::json::array();
      for (double wsum : weight_sums)
        mw.push_back(wsum / static_cast<double>(n_weighted));
      cell["mean_group_weights"] = std::move(mw);
    }
    cells.push_back(std::move(cell));
  }
  summary["cells"] = std::move(cells);
  return summary;
}

}  // namespace ebcobart
