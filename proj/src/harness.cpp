#include "moo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "moo/parallel.hpp"
#include "moo/rng.hpp"
#include "moo/synthetic.hpp"

namespace moo {

using nlohmann::json;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string mode_name(MonotoneMode m) {
  switch (m) {
    case MonotoneMode::loss: return "loss";
    case MonotoneMode::rank: return "rank";
    case MonotoneMode::energy: return "energy";
  }
  return "loss";
}

MonotoneMode mode_from_string(const std::string& s) {
  if (s == "loss") return MonotoneMode::loss;
  if (s == "rank") return MonotoneMode::rank;
  if (s == "energy") return MonotoneMode::energy;
  throw ConfigError("unknown monotone mode '" + s + "' (loss | rank | energy)");
}

std::string metric_name(RankMetric m) {
  return m == RankMetric::kolmogorov ? "kolmogorov" : "cramer_von_mises";
}

RankMetric metric_from_string(const std::string& s) {
  if (s == "kolmogorov" || s == "ks") return RankMetric::kolmogorov;
  if (s == "cramer_von_mises" || s == "cvm") return RankMetric::cramer_von_mises;
  throw ConfigError("unknown rank metric '" + s + "' (kolmogorov | cramer_von_mises)");
}

std::string energy_name(EnergyNormalization e) {
  return e == EnergyNormalization::proper ? "proper" : "printed";
}

EnergyNormalization energy_from_string(const std::string& s) {
  if (s == "proper") return EnergyNormalization::proper;
  if (s == "printed") return EnergyNormalization::printed;
  throw ConfigError("unknown energy normalization '" + s + "' (proper | printed)");
}

bool uses_loss(const std::string& name) {
  return name == "moo" || name == "mko" || name == "mao" || name == "moolc" || name == "moobl";
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <class T>
T field(const json& obj, const char* key, T fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

// Oracle metric matched with each masking criterion.
std::string oracle_metric_for(const std::string& name) {
  if (name == "moort" || name == "moort_vsum") return "rank";
  if (name == "mooen") return "energy";
  if (name == "moo" || name == "mko" || name == "mao") return "loss";
  return "";
}

}  // namespace

// --------------------------------------------------------------------------
// criteria

std::string CriterionSpec::tag() const {
  const bool monotone = name == "moolc" || name == "moobl";
  std::string t = name;
  if (name == "mko") t += std::to_string(K);
  if (monotone && mode != MonotoneMode::loss) t += "_" + mode_name(mode);
  if (uses_loss(name) && (!monotone || mode == MonotoneMode::loss) && loss == LossKind::absolute)
    t += "_absolute";
  return t;
}

const std::vector<std::string>& known_criteria() {
  static const std::vector<std::string> names{"moo",        "mko",   "mao",   "moort",
                                              "moort_vsum", "mooen", "moolc", "moobl"};
  return names;
}

CriterionSpec parse_criterion_spec(const json& j) {
  CriterionSpec c;
  if (j.is_string()) {
    c.name = j.get<std::string>();
  } else if (j.is_object()) {
    c.name = field<std::string>(j, "name", "");
    c.K = field<int>(j, "K", 2);
    if (j.contains("loss")) {
      try {
        c.loss = loss_from_string(j.at("loss").get<std::string>()).kind;
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  } else {
    throw ConfigError("criterion must be a name or an object");
  }
  const auto& names = known_criteria();
  if (std::find(names.begin(), names.end(), c.name) == names.end())
    throw ConfigError("unknown criterion '" + c.name + "'");
  if (c.name == "mko" && c.K < 1) throw ConfigError("mko needs K >= 1");
  return c;
}

CriterionReport evaluate_criterion(const CriterionSpec& spec, const ImputationModel& model,
                                   const IncompleteDataset& ds, const CriterionConfig& cfg) {
  const LossFn loss{spec.loss};
  CriterionReport rep;
  if (spec.name == "moo") rep = moo_risk(model, ds, loss, cfg);
  else if (spec.name == "mko") rep = mko_risk(model, ds, spec.K, loss, cfg);
  else if (spec.name == "mao") rep = mko_risk(model, ds, ds.cols(), loss, cfg);
  else if (spec.name == "moort") rep = moort(model, ds, cfg);
  else if (spec.name == "moort_vsum") rep = moort_variable_sum(model, ds, cfg);
  else if (spec.name == "mooen") rep = mooen(model, ds, cfg);
  else if (spec.name == "moolc") rep = moolc_risk(model, as_monotone(ds), spec.mode, loss, cfg);
  else if (spec.name == "moobl") rep = moobl_risk(model, as_monotone(ds), spec.mode, loss, cfg);
  else throw ConfigError("unknown criterion '" + spec.name + "'");
  rep.criterion = spec.tag();
  return rep;
}

// --------------------------------------------------------------------------
// spec

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentSpec ExperimentSpec::from_json(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
  const auto only = [](const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (const auto& [k, v] : obj.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        throw ConfigError("unknown key '" + k + "' in " + where);
    }
  };
  only(doc, "config",
       {"data", "standardize", "amputation", "models", "criteria", "criterion_settings", "folds", "oracle",
        "threads"});
  ExperimentSpec s;
  const json data = doc.value("data", json::object());
  only(data, "data", {"file", "na_token", "generator", "params", "n", "seed"});
  s.data_file = field<std::string>(data, "file", "");
  if (!s.data_file.empty() && !base_dir.empty() && std::filesystem::path(s.data_file).is_relative())
    s.data_file = (base_dir / s.data_file).lexically_normal().string();
  s.na_token = field<std::string>(data, "na_token", "NA");
  s.generator = field<std::string>(data, "generator", "");
  if (data.contains("params")) s.generator_params = data.at("params");
  s.n = field<int>(data, "n", s.n);
  s.data_seed = field<std::uint64_t>(data, "seed", s.data_seed);
  s.standardize = field<bool>(doc, "standardize", s.standardize);

  const json amp = doc.value("amputation", json::object());
  only(amp, "amputation", {"mechanism", "fraction", "slope", "base", "seed"});
  s.mechanism = field<std::string>(amp, "mechanism", s.mechanism);
  s.fraction = field<double>(amp, "fraction", s.fraction);
  s.slope = field<double>(amp, "slope", s.slope);
  s.base = field<double>(amp, "base", s.base);
  s.amputation_seed = field<std::uint64_t>(amp, "seed", s.amputation_seed);

  if (doc.contains("models")) {
    if (!doc.at("models").is_array()) throw ConfigError("'models' must be an array of model specs");
    for (const auto& m : doc.at("models")) {
      if (!m.is_string()) throw ConfigError("model entries must be strings such as \"nn_hot_deck:k=5\"");
      s.models.push_back(m.get<std::string>());
    }
  }
  if (doc.contains("criteria")) {
    if (!doc.at("criteria").is_array()) throw ConfigError("'criteria' must be an array");
    for (const auto& c : doc.at("criteria")) s.criteria.push_back(parse_criterion_spec(c));
  }
  const json cs = doc.value("criterion_settings", json::object());
  only(cs, "criterion_settings", {"M", "repeats", "seed", "metric", "energy"});
  s.M = field<int>(cs, "M", s.M);
  s.repeats = field<int>(cs, "repeats", s.repeats);
  s.criterion_seed = field<std::uint64_t>(cs, "seed", s.criterion_seed);
  s.metric = metric_from_string(field<std::string>(cs, "metric", metric_name(s.metric)));
  s.energy = energy_from_string(field<std::string>(cs, "energy", energy_name(s.energy)));

  const json folds = doc.value("folds", json::object());
  only(folds, "folds", {"K", "seed"});
  s.folds = field<int>(folds, "K", s.folds);
  s.fold_seed = field<std::uint64_t>(folds, "seed", s.fold_seed);

  const json oracle = doc.value("oracle", json::object());
  only(oracle, "oracle", {"enabled", "M", "seed"});
  s.oracle = field<bool>(oracle, "enabled", s.oracle);
  s.oracle_M = field<int>(oracle, "M", s.oracle_M);
  s.oracle_seed = field<std::uint64_t>(oracle, "seed", s.oracle_seed);

  s.threads = field<int>(doc, "threads", s.threads);
  return s;
}

ExperimentSpec ExperimentSpec::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(doc, path.parent_path());
}

json ExperimentSpec::to_json() const {
  json data = json::object();
  if (!data_file.empty()) {
    data["file"] = data_file;
    data["na_token"] = na_token;
  } else {
    data["generator"] = generator;
    data["params"] = generator_params;
    data["n"] = n;
    data["seed"] = data_seed;
  }
  json criteria_doc = json::array();
  for (const auto& c : criteria) {
    json e{{"name", c.name}, {"loss", LossFn{c.loss}.name()}};
    if (c.name == "mko") e["K"] = c.K;
    if (c.name == "moolc" || c.name == "moobl") e["mode"] = mode_name(c.mode);
    criteria_doc.push_back(e);
  }
  return json{
      {"data", data},
      {"standardize", standardize},
      {"amputation",
       {{"mechanism", mechanism}, {"fraction", fraction}, {"slope", slope}, {"base", base},
        {"seed", amputation_seed}}},
      {"models", models},
      {"criteria", criteria_doc},
      {"criterion_settings",
       {{"M", M}, {"repeats", repeats}, {"seed", criterion_seed}, {"metric", metric_name(metric)},
        {"energy", energy_name(energy)}}},
      {"folds", {{"K", folds}, {"seed", fold_seed}}},
      {"oracle", {{"enabled", oracle}, {"M", oracle_M}, {"seed", oracle_seed}}},
  };
}

void ExperimentSpec::validate() const {
  if (data_file.empty() == generator.empty())
    throw ConfigError("data needs exactly one of 'file' or 'generator'");
  if (!generator.empty()) {
    const auto& ids = synthetic_generators();
    if (std::find(ids.begin(), ids.end(), generator) == ids.end())
      throw ConfigError("unknown synthetic generator '" + generator + "'");
    if (n < 2) throw ConfigError("data.n must be at least 2");
  }
  static const std::set<std::string> mechanisms{"none", "mcar", "mar", "monotone"};
  if (!mechanisms.contains(mechanism))
    throw ConfigError("unknown amputation mechanism '" + mechanism + "' (none | mcar | mar | monotone)");
  if ((mechanism == "mcar" || mechanism == "mar") && !(fraction >= 0.0 && fraction < 1.0))
    throw ConfigError("amputation fraction must lie in [0, 1)");
  if (models.empty()) throw ConfigError("at least one model is required");
  std::set<std::string> labels;
  for (const auto& m : models) {
    ModelSpec ms;
    try {
      ms = parse_model_spec(m);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (!labels.insert(ms.display()).second)
      throw ConfigError("duplicate model label '" + ms.display() + "'; add label=...");
  }
  if (criteria.empty()) throw ConfigError("at least one criterion is required");
  std::set<std::string> tags;
  for (const auto& c : criteria)
    if (!tags.insert(c.tag()).second) throw ConfigError("criterion '" + c.tag() + "' listed twice");
  if (M < 1 || repeats < 1) throw ConfigError("criterion_settings M and repeats must be positive");
  if (folds < 1) throw ConfigError("folds.K must be at least 1");
  if (oracle && oracle_M < 2) throw ConfigError("oracle.M must be at least 2");
}

std::string ExperimentSpec::config_hash() const { return hex16(fnv1a64(to_json().dump())); }

std::string ExperimentSpec::provenance() const {
  return "seeds data=" + std::to_string(data_seed) + " amputation=" + std::to_string(amputation_seed) +
         " folds=" + std::to_string(fold_seed) + " criteria=" + std::to_string(criterion_seed) +
         " oracle=" + std::to_string(oracle_seed) + " config_hash=" + config_hash();
}

// --------------------------------------------------------------------------
// oracle

void OracleModelRisk::merge(const OracleModelRisk& other) {
  n_entries += other.n_entries;
  loss_sum += other.loss_sum;
  energy_sum += other.energy_sum;
  ranks.insert(ranks.end(), other.ranks.begin(), other.ranks.end());
}

void OracleModelRisk::finalize(RankMetric metric) {
  if (n_entries == 0) {
    loss_risk = rank_risk = energy_risk = kNaN;
    return;
  }
  loss_risk = loss_sum / n_entries;
  energy_risk = energy_sum / n_entries;
  rank_risk = uniform_distance(ranks, metric);
}

OracleModelRisk oracle_entries(const ImputationModel& model, const GroundTruthDataset& gt,
                               const OracleSettings& settings, std::uint64_t salt) {
  const IncompleteDataset& ds = gt.incomplete;
  if (gt.complete.rows() != ds.rows() || gt.complete.cols() != ds.cols())
    throw std::invalid_argument("ground truth and incomplete data differ in shape");
  if (settings.M < 2) throw std::invalid_argument("oracle needs M >= 2");
  const int n = ds.rows(), d = ds.cols();
  const double M = settings.M;
  const double pair_scale =
      settings.energy == EnergyNormalization::printed ? 1.0 / (2.0 * M * (M - 1.0)) : 1.0 / (M * (M - 1.0));
  std::vector<double> loss_sum(n, 0.0), energy_sum(n, 0.0);
  std::vector<std::vector<double>> ranks(n);
  std::vector<long> count(n, 0);
  parallel_for(n, settings.threads, [&](std::size_t i) {
    const Pattern R = ds.pattern(static_cast<int>(i));
    Eigen::VectorXd x = ds.row(static_cast<int>(i));
    std::vector<double> a(settings.M), b(settings.M);
    for (int j = 0; j < d; ++j) {
      if (R.test(j)) continue;
      if (!model.available(j, R)) continue;
      const double truth = gt.complete(static_cast<Eigen::Index>(i), j);
      Rng rng = substream(settings.seed, Stream::oracle, i, static_cast<std::uint64_t>(j), salt);
      model.sample_marginal_n(j, x, R, rng, a);
      model.sample_marginal_n(j, x, R, rng, b);
      double l = 0.0, first = 0.0, pairs = 0.0;
      long lt = 0, eq = 0;
      for (double v : a) {
        l += settings.loss(truth, v);
        first += std::abs(truth - v);
        if (v < truth) ++lt;
        else if (v == truth) ++eq;
      }
      for (int m = 0; m < settings.M; ++m)
        for (int mp = m + 1; mp < settings.M; ++mp) pairs += std::abs(a[m] - b[mp]);
      loss_sum[i] += l / M;
      energy_sum[i] += first / M - pair_scale * pairs;
      ranks[i].push_back(settings.discrete_rank
                             ? (static_cast<double>(lt) + uniform01(rng) * (1.0 + static_cast<double>(eq))) / (M + 1.0)
                             : static_cast<double>(lt + eq) / M);
      ++count[i];
    }
  });
  OracleModelRisk out;
  out.model = model.name();
  for (int i = 0; i < n; ++i) {
    out.loss_sum += loss_sum[i];
    out.energy_sum += energy_sum[i];
    out.n_entries += count[i];
    out.ranks.insert(out.ranks.end(), ranks[i].begin(), ranks[i].end());
  }
  return out;
}

OracleReport oracle_risk(const std::vector<std::pair<std::string, ModelPtr>>& models,
                         const GroundTruthDataset& gt, const OracleSettings& settings) {
  OracleReport rep;
  for (const auto& [label, model] : models) {
    OracleModelRisk r = oracle_entries(*model, gt, settings);
    r.model = label;
    r.finalize(settings.metric);
    rep.models.push_back(std::move(r));
  }
  return rep;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e + 1 < order.size() && v[order[e + 1]] == v[order[k]]) ++e;
    const double r = 0.5 * static_cast<double>(k + e) + 1.0;
    for (std::size_t q = k; q <= e; ++q) ranks[order[q]] = r;
    k = e + 1;
  }
  return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) return kNaN;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

// --------------------------------------------------------------------------
// experiment

std::pair<IncompleteDataset, std::optional<RowMatrix>> prepare_experiment_data(const ExperimentSpec& spec) {
  spec.validate();
  RowMatrix complete;
  std::vector<std::string> names;
  std::optional<IncompleteDataset> given;
  if (!spec.data_file.empty()) {
    IncompleteDataset loaded = load_csv(spec.data_file, spec.na_token);
    names = loaded.column_names();
    if (spec.mechanism == "none") {
      given = std::move(loaded);
    } else {
      for (const Pattern& p : loaded.patterns())
        if (!p.full()) throw ConfigError("amputation needs a complete data file; use mechanism 'none'");
      complete = loaded.values();
    }
  } else {
    try {
      complete = generate_synthetic(spec.generator, spec.generator_params, spec.n, spec.data_seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    for (int j = 0; j < complete.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
  }

  std::optional<RowMatrix> truth;
  IncompleteDataset ds;
  if (given) {
    ds = std::move(*given);
  } else {
    GroundTruthDataset gt;
    if (spec.mechanism == "mcar") gt = ampute_mcar(complete, spec.fraction, spec.amputation_seed);
    else if (spec.mechanism == "mar")
      gt = ampute_mar(complete, MarOptions{spec.fraction, spec.slope}, spec.amputation_seed);
    else if (spec.mechanism == "monotone")
      gt = ampute_monotone(complete, spec.base, spec.slope, spec.amputation_seed);
    else gt = GroundTruthDataset{complete, IncompleteDataset::from_nan(complete)};
    ds = IncompleteDataset(gt.incomplete.values(), gt.incomplete.patterns(), names);
    truth = std::move(gt.complete);
  }
  if (spec.standardize) {
    ds = standardize(ds);
    if (truth) {
      const Standardization& st = *ds.standardization();
      for (int j = 0; j < truth->cols(); ++j)
        truth->col(j) = (truth->col(j).array() - st.mean(j)) / st.sd(j);
    }
  }
  return {std::move(ds), std::move(truth)};
}

namespace {

struct Aggregate {
  double weight = 0.0;
  double total = 0.0;
  double internal = 0.0;
  std::vector<double> per_variable;
  std::vector<long> evaluated, skipped;
  long n_evaluated = 0, n_skipped = 0;
  int n_rows = 0;
  std::vector<double> ranks;
  CriterionReport first;
  bool seen = false;

  void add(const CriterionReport& r) {
    const double w = r.n_rows;
    if (!seen) {
      first = r;
      per_variable.assign(r.per_variable.size(), 0.0);
      evaluated.assign(r.per_variable_evaluated.size(), 0);
      skipped.assign(r.per_variable_skipped.size(), 0);
      seen = true;
    }
    weight += w;
    total += w * r.total_risk;
    internal += w * r.internal_term;
    for (std::size_t j = 0; j < per_variable.size() && j < r.per_variable.size(); ++j)
      per_variable[j] += w * r.per_variable[j];
    for (std::size_t j = 0; j < evaluated.size() && j < r.per_variable_evaluated.size(); ++j)
      evaluated[j] += r.per_variable_evaluated[j];
    for (std::size_t j = 0; j < skipped.size() && j < r.per_variable_skipped.size(); ++j)
      skipped[j] += r.per_variable_skipped[j];
    n_evaluated += r.n_evaluated;
    n_skipped += r.n_skipped;
    n_rows += r.n_rows;
    ranks.insert(ranks.end(), r.ranks.begin(), r.ranks.end());
  }

  CriterionReport report(const std::string& model, std::uint64_t seed) const {
    CriterionReport out = first;
    out.model = model;
    out.total_risk = total / weight;
    out.internal_term = internal / weight;
    out.per_variable = per_variable;
    for (double& v : out.per_variable) v /= weight;
    out.per_variable_evaluated = evaluated;
    out.per_variable_skipped = skipped;
    out.n_evaluated = n_evaluated;
    out.n_skipped = n_skipped;
    out.n_rows = n_rows;
    out.ranks = ranks;
    out.row_evaluations.clear();
    out.settings.seed = seed;
    return out;
  }
};

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  auto [ds, truth] = prepare_experiment_data(spec);
  const int n = ds.rows();
  std::vector<ModelSpec> model_specs;
  for (const auto& m : spec.models) model_specs.push_back(parse_model_spec(m));
  const std::size_t nm = model_specs.size(), nc = spec.criteria.size();

  FoldAssignment folds;
  if (spec.folds == 1) folds = FoldAssignment{std::vector<int>(n, 0), 1};
  else folds = make_folds(n, spec.folds, spec.fold_seed);

  ExperimentResult result;
  std::vector<std::string> failure(nm);
  std::vector<std::vector<Aggregate>> agg(nm, std::vector<Aggregate>(nc));
  std::vector<OracleModelRisk> oracle(nm);
  const bool with_oracle = spec.oracle && truth.has_value();

  for (int k = 0; k < folds.folds; ++k) {
    const std::vector<int> test_rows = folds.rows_in(k);
    const std::vector<int> train_rows = folds.folds == 1 ? test_rows : folds.rows_not_in(k);
    const IncompleteDataset train = ds.subset(train_rows);
    const IncompleteDataset test = ds.subset(test_rows);

    std::vector<ModelPtr> fitted(nm);
    std::vector<std::string> fold_error(nm);
    parallel_for(nm, spec.threads, [&](std::size_t m) {
      if (!failure[m].empty()) return;
      try {
        fitted[m] = fit_model(model_specs[m], train);
      } catch (const std::exception& e) {
        fold_error[m] = std::string("fit failed on fold ") + std::to_string(k) + ": " + e.what();
      }
    });

    for (std::size_t m = 0; m < nm; ++m) {
      if (!failure[m].empty()) continue;
      if (!fold_error[m].empty()) {
        failure[m] = fold_error[m];
        warn("model " + model_specs[m].display() + " dropped: " + failure[m]);
        continue;
      }
      result.fits.push_back(FitRecord{model_specs[m].display(), k, fitted[m]->to_json()});
      for (std::size_t c = 0; c < nc; ++c) {
        CriterionConfig cfg;
        cfg.M = spec.M;
        cfg.repeats = spec.repeats;
        cfg.seed = folds.folds == 1
                       ? spec.criterion_seed
                       : substream_key(spec.criterion_seed, Stream::folds, static_cast<std::uint64_t>(k), 1);
        cfg.metric = spec.metric;
        cfg.energy = spec.energy;
        cfg.threads = spec.threads;
        try {
          CriterionReport rep = evaluate_criterion(spec.criteria[c], *fitted[m], test, cfg);
          rep.model = model_specs[m].display();
          result.fold_risks.push_back(FoldRisk{rep.model, rep.criterion, k, rep.n_rows, rep.total_risk});
          agg[m][c].add(rep);
        } catch (const std::exception& e) {
          failure[m] = "criterion " + spec.criteria[c].tag() + " failed on fold " + std::to_string(k) +
                       ": " + e.what();
          warn("model " + model_specs[m].display() + " dropped: " + failure[m]);
          break;
        }
      }
      if (!failure[m].empty() || !with_oracle) continue;
      GroundTruthDataset gt;
      gt.complete.resize(static_cast<Eigen::Index>(test_rows.size()), ds.cols());
      for (std::size_t a = 0; a < test_rows.size(); ++a) gt.complete.row(a) = truth->row(test_rows[a]);
      gt.incomplete = test;
      OracleSettings os;
      os.M = spec.oracle_M;
      os.seed = spec.oracle_seed;
      os.energy = spec.energy;
      os.metric = spec.metric;
      os.threads = spec.threads;
      oracle[m].merge(oracle_entries(*fitted[m], gt, os, static_cast<std::uint64_t>(k)));
    }
  }

  std::vector<std::size_t> alive;
  for (std::size_t m = 0; m < nm; ++m) {
    if (failure[m].empty()) alive.push_back(m);
    else result.failed.emplace_back(model_specs[m].display(), failure[m]);
  }
  std::erase_if(result.fold_risks, [&](const FoldRisk& f) {
    return std::any_of(result.failed.begin(), result.failed.end(),
                       [&](const auto& p) { return p.first == f.model; });
  });
  std::erase_if(result.fits, [&](const FitRecord& f) {
    return std::any_of(result.failed.begin(), result.failed.end(),
                       [&](const auto& p) { return p.first == f.model; });
  });

  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t m : alive) result.reports.push_back(agg[m][c].report(model_specs[m].display(), spec.criterion_seed));

  // PI points: squared-loss MOO against each imputation criterion.
  const auto find_crit = [&](const std::string& tag) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < nc; ++c)
      if (spec.criteria[c].tag() == tag) return c;
    return std::nullopt;
  };
  if (const auto moo_c = find_crit("moo")) {
    for (const char* ytag : {"moort", "mooen"}) {
      const auto yc = find_crit(ytag);
      if (!yc) continue;
      for (std::size_t m : alive)
        result.pi_points.push_back(PiPoint{model_specs[m].display(),
                                           agg[m][*moo_c].total / agg[m][*moo_c].weight,
                                           agg[m][*yc].total / agg[m][*yc].weight, ytag});
    }
  }

  if (with_oracle) {
    OracleReport rep;
    for (std::size_t m : alive) {
      oracle[m].model = model_specs[m].display();
      oracle[m].finalize(spec.metric);
      rep.models.push_back(oracle[m]);
    }
    for (std::size_t c = 0; c < nc; ++c) {
      const std::string metric = oracle_metric_for(spec.criteria[c].name);
      if (metric.empty()) continue;
      std::vector<double> masked, truth_side;
      for (std::size_t a = 0; a < alive.size(); ++a) {
        const std::size_t m = alive[a];
        masked.push_back(agg[m][c].total / agg[m][c].weight);
        const auto& o = rep.models[a];
        truth_side.push_back(metric == "rank" ? o.rank_risk : metric == "energy" ? o.energy_risk : o.loss_risk);
      }
      rep.concordance.push_back(Concordance{spec.criteria[c].tag(), metric, spearman(masked, truth_side)});
    }
    result.oracle = std::move(rep);
  }
  return result;
}

std::vector<std::filesystem::path> write_experiment(const ExperimentSpec& spec, const ExperimentResult& result,
                                                    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "fits");
  const std::string comment = spec.provenance();
  std::vector<fs::path> written;
  const auto open = [&](const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    written.push_back(path);
    return f;
  };

  {
    auto f = open(dir / "risks.csv");
    f << "# " << comment << '\n';
    write_report_header(f);
    for (const auto& r : result.reports) write_report_rows(f, r);
  }
  {
    auto f = open(dir / "fold_risks.csv");
    f << "# " << comment << '\n' << "model,criterion,fold,n_rows,risk\n";
    for (const auto& r : result.fold_risks)
      f << r.model << ',' << r.criterion << ',' << r.fold << ',' << r.n_rows << ',' << num(r.risk) << '\n';
  }
  if (result.pi_points.empty()) {
    auto f = open(dir / "pi_points.csv");
    write_pi_points(f, {}, comment);
  } else {
    for (auto& p : emit_pi_diagram(result.pi_points, dir, comment)) written.push_back(p);
  }
  if (result.oracle) {
    const OracleReport& o = *result.oracle;
    {
      auto f = open(dir / "oracle_ranks.csv");
      f << "# " << comment << '\n' << "model,criterion,masking_risk,masking_rank,oracle_metric,oracle_risk,oracle_rank\n";
      for (std::size_t c = 0; c < spec.criteria.size(); ++c) {
        const std::string tag = spec.criteria[c].tag();
        const std::string metric = oracle_metric_for(spec.criteria[c].name);
        if (metric.empty()) continue;
        std::vector<double> masked, oracle_side;
        std::vector<std::string> labels;
        for (const auto& r : result.reports)
          if (r.criterion == tag) {
            masked.push_back(r.total_risk);
            labels.push_back(r.model);
          }
        for (const auto& label : labels)
          for (const auto& m : o.models)
            if (m.model == label)
              oracle_side.push_back(metric == "rank" ? m.rank_risk : metric == "energy" ? m.energy_risk : m.loss_risk);
        const auto mr = average_ranks(masked), orr = average_ranks(oracle_side);
        for (std::size_t a = 0; a < labels.size(); ++a)
          f << labels[a] << ',' << tag << ',' << num(masked[a]) << ',' << num(mr[a]) << ',' << metric << ','
            << num(oracle_side[a]) << ',' << num(orr[a]) << '\n';
      }
    }
    {
      auto f = open(dir / "oracle_concordance.csv");
      f << "# " << comment << '\n' << "criterion,oracle_metric,spearman\n";
      for (const auto& c : o.concordance) f << c.criterion << ',' << c.oracle_metric << ',' << num(c.spearman) << '\n';
    }
  }
  {
    auto f = open(dir / "config.json");
    json doc = spec.to_json();
    doc["provenance"] = comment;
    f << doc.dump(2) << '\n';
  }
  for (const auto& fit : result.fits) {
    std::string safe;
    for (char c : fit.model) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ? c : '_';
    auto f = open(dir / "fits" / (safe + "_fold" + std::to_string(fit.fold) + ".json"));
    json doc = fit.parameters;
    doc["label"] = fit.model;
    doc["fold"] = fit.fold;
    doc["provenance"] = comment;
    f << doc.dump(2) << '\n';
  }
  return written;
}

}  // namespace moo
