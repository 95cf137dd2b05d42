#include <algorithm>
#include <sstream>

#include "moo/models.hpp"

namespace moo {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd mat_from(const json& j) {
  const Eigen::Index n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd row = vec_from(j.at(i));
    if (row.size() != n) throw std::invalid_argument("covariance must be square");
    m.row(i) = row.transpose();
  }
  return m;
}

json conditional_json(const RegressionConditional& c) {
  return {{"basis", to_string(c.basis)},
          {"coef", vec_json(c.coef)},
          {"variance", c.variance},
          {"n_donors", c.n_donors},
          {"ridged", c.ridged}};
}

RegressionConditional conditional_from(const json& j) {
  RegressionConditional c;
  c.basis = basis_from_string(j.at("basis").get<std::string>());
  c.coef = vec_from(j.at("coef"));
  c.variance = j.at("variance").get<double>();
  c.n_donors = j.value("n_donors", 0);
  c.ridged = j.value("ridged", false);
  return c;
}

json header(const ImputationModel& m, const std::string& type) {
  return {{"format", "moo-model"},
          {"version", kFormatVersion},
          {"type", type},
          {"name", m.name()},
          {"dim", m.dim()},
          {"parameter_count", m.parameter_count()}};
}

}  // namespace

void ImputationModel::sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                        Rng& rng, std::span<double> out) const {
  for (double& v : out) v = sample_marginal(j, x, r, rng);
}

double ImputationModel::log_density_marginal(double, int, Eigen::Ref<const Eigen::VectorXd>,
                                             Pattern) const {
  throw UnsupportedError(name() + " has no marginal density");
}

Eigen::VectorXd ImputationModel::sample_joint(Pattern, Eigen::Ref<const Eigen::VectorXd>, Pattern,
                                              Rng&) const {
  throw UnsupportedError(name() + " has no joint sampler");
}

json ImputationModel::to_json() const { return header(*this, "opaque"); }

json MeanModel::to_json() const {
  json doc = header(*this, "mean");
  doc["means"] = vec_json(means_);
  return doc;
}

json GaussianJointModel::to_json() const {
  json doc = header(*this, "gaussian_joint");
  doc["mean"] = vec_json(mean_);
  doc["covariance"] = mat_json(cov_);
  doc["ridge"] = ridge_;
  doc["deterministic"] = deterministic_;
  return doc;
}

json HotDeckModel::to_json() const {
  json doc = header(*this, "hot_deck");
  doc["variant"] = variant_ == HotDeckVariant::random ? "random" : "nearest_neighbor";
  doc["k_neighbors"] = k_;
  doc["donor_rows"] = donors_.rows();
  return doc;
}

json PatternRegressionModel::to_json() const {
  json doc = header(*this, "pattern_regression");
  json conds = json::array();
  for (const auto& [key, c] : conds_) {
    json entry = conditional_json(c);
    entry["r"] = key.r.str();
    entry["j"] = key.j;
    conds.push_back(std::move(entry));
  }
  doc["conditionals"] = std::move(conds);
  doc["shared_variance_reduction"] = shared_reduction_;
  return doc;
}

json CcmvModel::to_json() const {
  json doc = header(*this, "ccmv");
  doc["mean"] = vec_json(mean_);
  doc["scatter"] = mat_json(scatter_);
  doc["n_complete"] = n_;
  return doc;
}

json MonotoneSequentialModel::to_json() const {
  json doc = header(*this, "monotone_sequential");
  json stages = json::array();
  for (const auto& s : stages_) stages.push_back(s.n_donors > 0 ? conditional_json(s) : json());
  doc["stages"] = std::move(stages);
  return doc;
}

ModelPtr model_from_json(const json& doc) {
  if (doc.value("format", "") != "moo-model")
    throw std::invalid_argument("not a model document");
  if (doc.value("version", 0) != kFormatVersion)
    throw std::invalid_argument("unsupported model document version");
  const std::string type = doc.at("type").get<std::string>();
  const std::string name = doc.value("name", type);
  if (type == "mean") return std::make_shared<MeanModel>(vec_from(doc.at("means")));
  if (type == "gaussian_joint")
    return std::make_shared<GaussianJointModel>(vec_from(doc.at("mean")),
                                                mat_from(doc.at("covariance")),
                                                doc.value("ridge", 0.0),
                                                doc.value("deterministic", false));
  if (type == "ccmv")
    return std::make_shared<CcmvModel>(vec_from(doc.at("mean")), mat_from(doc.at("scatter")),
                                       doc.at("n_complete").get<int>());
  if (type == "pattern_regression") {
    std::map<CondKey, RegressionConditional> conds;
    for (const auto& e : doc.at("conditionals"))
      conds.emplace(CondKey{Pattern::parse(e.at("r").get<std::string>()), e.at("j").get<int>()},
                    conditional_from(e));
    return std::make_shared<PatternRegressionModel>(name, doc.at("dim").get<int>(),
                                                    std::move(conds),
                                                    doc.value("shared_variance_reduction", 0));
  }
  if (type == "monotone_sequential") {
    std::vector<RegressionConditional> stages;
    for (const auto& e : doc.at("stages"))
      stages.push_back(e.is_null() ? RegressionConditional{} : conditional_from(e));
    return std::make_shared<MonotoneSequentialModel>(name, std::move(stages));
  }
  throw std::invalid_argument("model type '" + type + "' cannot be restored");
}

// --------------------------------------------------------------------------

const std::vector<std::string>& known_model_kinds() {
  static const std::vector<std::string> kinds = {
      "mean", "gaussian_em", "gaussian_mean", "nn_hot_deck", "random_hot_deck",
      "moopm", "separable_gaussian", "ccmv", "ncmv", "acmv"};
  return kinds;
}

ModelSpec parse_model_spec(const std::string& text) {
  ModelSpec spec;
  const auto colon = text.find(':');
  spec.kind = text.substr(0, colon);
  if (std::find(known_model_kinds().begin(), known_model_kinds().end(), spec.kind) ==
      known_model_kinds().end())
    throw std::invalid_argument("unknown model '" + spec.kind + "'");
  if (colon == std::string::npos) return spec;
  std::stringstream rest(text.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected key=value in '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "k") spec.k_neighbors = std::stoi(value);
    else if (key == "ridge") spec.ridge = std::stod(value);
    else if (key == "min_rows") spec.min_rows = std::stoi(value);
    else if (key == "basis") spec.basis = basis_from_string(value);
    else if (key == "label") spec.label = value;
    else throw std::invalid_argument("unknown model option '" + key + "'");
  }
  return spec;
}

ModelPtr fit_model(const ModelSpec& spec, const IncompleteDataset& train) {
  const std::string& k = spec.kind;
  if (k == "mean") return std::make_shared<MeanModel>(fit_mean(train));
  if (k == "gaussian_em" || k == "gaussian_mean") {
    auto em = fit_gaussian_em(train, spec.ridge);
    if (k == "gaussian_mean") return std::make_shared<GaussianJointModel>(em.model.as_deterministic());
    return std::make_shared<GaussianJointModel>(std::move(em.model));
  }
  if (k == "nn_hot_deck")
    return std::make_shared<HotDeckModel>(
        fit_hot_deck(train, HotDeckVariant::nearest_neighbor, spec.k_neighbors));
  if (k == "random_hot_deck")
    return std::make_shared<HotDeckModel>(fit_hot_deck(train, HotDeckVariant::random, 1));
  if (k == "moopm")
    return std::make_shared<PatternRegressionModel>(fit_moopm_empirical(
        train, MoopmOptions{spec.min_rows, spec.basis, VarianceDenominator::unbiased}));
  if (k == "separable_gaussian") {
    auto m = fit_moopm_empirical(train, MoopmOptions{spec.min_rows, spec.basis, VarianceDenominator::mle});
    return std::make_shared<PatternRegressionModel>("separable_gaussian", m.dim(), m.conditionals());
  }
  if (k == "ccmv") return std::make_shared<CcmvModel>(fit_ccmv(train));
  if (k == "ncmv" || k == "acmv")
    return std::make_shared<MonotoneSequentialModel>(
        fit_monotone(as_monotone(train), k == "ncmv" ? MonotoneRule::ncmv : MonotoneRule::acmv)
            .model);
  throw std::invalid_argument("unknown model '" + k + "'");
}

}  // namespace moo
