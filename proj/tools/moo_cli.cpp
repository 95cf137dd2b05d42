#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moo/criteria.hpp"
#include "moo/dataset.hpp"
#include "moo/estimators.hpp"
#include "moo/harness.hpp"
#include "moo/likelihood.hpp"
#include "moo/models.hpp"
#include "moo/pi_diagram.hpp"
#include "moo/regression.hpp"
#include "moo/separable.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moo;

namespace {

constexpr int kUsage = 2;
constexpr int kEnvironment = 3;
constexpr int kNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EnvironmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw EnvironmentError("cannot read " + path);
}

// Writes to `path`, or stdout for "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw EnvironmentError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

IncompleteDataset load(const std::string& path, const std::string& na, bool standardize_data) {
  require_file(path);
  IncompleteDataset ds = load_csv(path, na);
  return standardize_data ? standardize(ds) : ds;
}

json report_json(const CriterionReport& r) {
  json per = json::array();
  for (double v : r.per_variable) per.push_back(std::isnan(v) ? json(nullptr) : json(v));
  return json{{"model", r.model},
              {"criterion", r.criterion},
              {"total_risk", r.total_risk},
              {"per_variable", per},
              {"n_evaluated", r.n_evaluated},
              {"n_skipped", r.n_skipped},
              {"n_rows", r.n_rows},
              {"internal_term", r.internal_term},
              {"M", r.settings.M},
              {"repeats", r.settings.repeats},
              {"seed", r.settings.seed}};
}

struct CriterionFlags {
  int M = 20;
  int repeats = 1;
  std::uint64_t seed = 0;
  std::string metric = "kolmogorov";
  std::string energy = "proper";
  int threads = default_threads();

  void add(CLI::App* cmd) {
    cmd->add_option("--M", M, "Imputation draws per masked entry")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--repeats", repeats, "Independent repeats averaged per entry")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Master seed")->capture_default_str();
    cmd->add_option("--metric", metric, "Rank distance")
        ->capture_default_str()
        ->check(CLI::IsMember({"kolmogorov", "cramer_von_mises"}));
    cmd->add_option("--energy", energy, "MOOEN pair-term scaling")
        ->capture_default_str()
        ->check(CLI::IsMember({"proper", "printed"}));
    cmd->add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }

  CriterionConfig config() const {
    CriterionConfig cfg;
    cfg.M = M;
    cfg.repeats = repeats;
    cfg.seed = seed;
    cfg.metric = metric == "kolmogorov" ? RankMetric::kolmogorov : RankMetric::cramer_von_mises;
    cfg.energy = energy == "proper" ? EnergyNormalization::proper : EnergyNormalization::printed;
    cfg.threads = threads;
    return cfg;
  }

  void apply(ExperimentSpec& spec) const {
    const CriterionConfig cfg = config();
    spec.M = M;
    spec.repeats = repeats;
    spec.criterion_seed = seed;
    spec.fold_seed = seed;
    spec.metric = cfg.metric;
    spec.energy = cfg.energy;
    spec.threads = threads;
  }
};

// --------------------------------------------------------------------------

struct EvaluateArgs {
  std::string data;
  std::string model = "gaussian_em";
  std::string criterion = "moo";
  int K = 2;
  std::string mode = "loss";
  std::string loss = "squared";
  int folds = 0;
  std::string na = "NA";
  bool raw = false;
  std::string format = "csv";
  std::string output = "-";
  CriterionFlags crit;
};

int run_evaluate(const EvaluateArgs& a) {
  json cdoc{{"name", a.criterion}, {"K", a.K}, {"loss", a.loss}, {"mode", a.mode}};
  const CriterionSpec cs = parse_criterion_spec(cdoc);
  std::vector<CriterionReport> reports;
  std::string seeds = "seeds criteria=" + std::to_string(a.crit.seed);
  if (a.folds > 0) {
    require_file(a.data);
    ExperimentSpec spec;
    spec.data_file = a.data;
    spec.na_token = a.na;
    spec.mechanism = "none";
    spec.standardize = !a.raw;
    spec.models = {a.model};
    spec.criteria = {cs};
    spec.folds = a.folds;
    spec.oracle = false;
    a.crit.apply(spec);
    seeds = spec.provenance();
    const ExperimentResult res = run_experiment(spec);
    if (!res.failed.empty()) throw std::runtime_error(res.failed.front().first + ": " + res.failed.front().second);
    reports = res.reports;
  } else {
    const IncompleteDataset ds = load(a.data, a.na, !a.raw);
    const ModelSpec ms = parse_model_spec(a.model);
    const ModelPtr model = fit_model(ms, ds);
    CriterionReport rep = evaluate_criterion(cs, *model, ds, a.crit.config());
    rep.model = ms.display();
    reports.push_back(std::move(rep));
  }
  std::cerr << seeds << '\n';
  Output out(a.output);
  if (a.format == "json") {
    json doc{{"provenance", seeds}, {"reports", json::array()}};
    for (const auto& r : reports) doc["reports"].push_back(report_json(r));
    out.stream() << doc.dump(2) << '\n';
  } else {
    out.stream() << "# " << seeds << '\n';
    write_report_header(out.stream());
    for (const auto& r : reports) write_report_rows(out.stream(), r);
  }
  return 0;
}

// --------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string model = "gaussian_em";
  std::string na = "NA";
  bool raw = false;
  bool gradient = false;
  std::string init = "default";
  double step_size = 1.0;
  int max_iter = 50000;
  double grad_tol = 1e-10;
  bool sandwich = false;
  std::string output = "-";
};

int run_fit(const FitArgs& a) {
  const IncompleteDataset ds = load(a.data, a.na, !a.raw);
  const ModelSpec ms = parse_model_spec(a.model);
  json doc;
  if (a.gradient) {
    if (ms.kind != "separable_gaussian")
      throw UsageError("--gradient applies to separable_gaussian only");
    SeparableGaussianFamily family(ds, adequate_keys(ds, ms.basis, ms.min_rows), ms.basis, {});
    if (family.keys().empty()) throw DataError("no pattern has enough donor rows for a separable fit");
    GradientAscentConfig cfg;
    cfg.step_size = a.step_size;
    cfg.max_iter = a.max_iter;
    cfg.grad_tol = a.grad_tol;
    if (a.init == "unit") cfg.init = family.unit_init();
    GradientFit fit = fit_moo_mle_gradient(family, family.default_init(), cfg);
    if (a.sandwich) {
      fit.diagnostics.sandwich = sandwich_covariance(family, fit.theta);
      fit.diagnostics.standard_errors = sandwich_standard_errors(family, fit.theta);
    }
    doc = family.to_model(fit.theta, ms.display()).to_json();
    doc["diagnostics"] = to_json(fit.diagnostics);
    json names = family.parameter_names();
    doc["parameter_names"] = names;
    if (!fit.diagnostics.converged) std::cerr << "warning: gradient ascent did not converge\n";
  } else {
    doc = fit_model(ms, ds)->to_json();
  }
  doc["label"] = ms.display();
  Output out(a.output);
  out.stream() << doc.dump(2) << '\n';
  return 0;
}

// --------------------------------------------------------------------------

struct SelectArgs {
  std::string data;
  std::vector<std::string> models;
  std::string by = "bic";
  int folds = 0;
  std::string na = "NA";
  bool raw = false;
  std::string format = "csv";
  std::string output = "-";
  CriterionFlags crit;
};

int run_select(const SelectArgs& a) {
  if (a.models.size() < 2) throw UsageError("select needs at least 2 models");
  const IncompleteDataset ds = load(a.data, a.na, !a.raw);
  struct Row {
    std::string label;
    double score;
    int parameters;
  };
  std::vector<Row> rows;
  std::vector<ModelSpec> specs;
  for (const auto& m : a.models) specs.push_back(parse_model_spec(m));
  std::vector<double> cv_scores;
  if (a.by != "bic" && a.folds > 0) {
    ExperimentSpec spec;
    spec.data_file = a.data;
    spec.na_token = a.na;
    spec.mechanism = "none";
    spec.standardize = !a.raw;
    spec.models = a.models;
    spec.criteria = {parse_criterion_spec(json(a.by))};
    spec.folds = a.folds;
    spec.oracle = false;
    a.crit.apply(spec);
    const ExperimentResult res = run_experiment(spec);
    if (!res.failed.empty()) throw std::runtime_error(res.failed.front().first + ": " + res.failed.front().second);
    for (const auto& r : res.reports) cv_scores.push_back(r.total_risk);
  }
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const ModelPtr model = fit_model(specs[m], ds);
    double score;
    if (a.by == "bic") {
      if (!model->has_density())
        throw UnsupportedError("model " + specs[m].display() + " has no density; BIC needs one");
      score = bic(*model, ds);
    } else if (!cv_scores.empty()) {
      score = cv_scores[m];
    } else {
      score = evaluate_criterion(parse_criterion_spec(json(a.by)), *model, ds, a.crit.config()).total_risk;
    }
    rows.push_back(Row{specs[m].display(), score, model->parameter_count()});
  }
  const bool higher_better = a.by == "bic";
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& x, const Row& y) {
    if (x.score != y.score) return higher_better ? x.score > y.score : x.score < y.score;
    if (x.parameters != y.parameters) return x.parameters < y.parameters;
    return x.label < y.label;
  });
  const std::string seeds = "seeds criteria=" + std::to_string(a.crit.seed);
  std::cerr << seeds << '\n';
  Output out(a.output);
  if (a.format == "json") {
    json doc{{"provenance", seeds}, {"by", a.by}, {"ranking", json::array()}};
    for (std::size_t k = 0; k < rows.size(); ++k)
      doc["ranking"].push_back({{"rank", k + 1},
                                {"model", rows[k].label},
                                {"score", rows[k].score},
                                {"parameters", rows[k].parameters},
                                {"winner", k == 0}});
    out.stream() << doc.dump(2) << '\n';
  } else {
    out.stream() << "# " << seeds << '\n' << "rank,model,by,score,parameters,winner\n";
    for (std::size_t k = 0; k < rows.size(); ++k)
      out.stream() << k + 1 << ',' << rows[k].label << ',' << a.by << ',' << rows[k].score << ','
                   << rows[k].parameters << ',' << (k == 0 ? "*" : "") << '\n';
  }
  return 0;
}

// --------------------------------------------------------------------------

struct EstimateArgs {
  std::string data;
  std::string target;
  std::string method = "mr";
  std::string odds_basis = "linear";
  std::string outcome_basis = "linear";
  std::string misspecify;
  std::string scenario;
  int n = 2000;
  int min_rows = 10;
  std::uint64_t seed = 0;
  std::string na = "NA";
  std::string format = "csv";
  std::string output = "-";
};

int run_estimate(const EstimateArgs& a) {
  IncompleteDataset ds;
  if (!a.scenario.empty()) {
    ds = robustness_scenario(a.n, a.seed);
  } else {
    if (a.data.empty()) throw UsageError("a data file or --scenario is required");
    ds = load(a.data, a.na, false);
  }
  std::string target = a.target;
  if (target.empty()) {
    if (a.scenario.empty()) throw UsageError("--target-col is required");
    target = "x1";
  }
  const auto& names = ds.column_names();
  const auto it = std::find(names.begin(), names.end(), target);
  if (it == names.end()) throw UsageError("no column named '" + target + "'");
  NuisanceOptions odds_opt, out_opt;
  odds_opt.target = out_opt.target = static_cast<int>(it - names.begin());
  odds_opt.min_rows = out_opt.min_rows = a.min_rows;
  odds_opt.basis = basis_from_string(a.odds_basis);
  out_opt.basis = basis_from_string(a.outcome_basis);
  if (!a.misspecify.empty()) {
    const NuisanceBases b = robustness_bases(a.misspecify);
    odds_opt.basis = b.odds;
    out_opt.basis = b.outcome;
  }
  std::vector<MeanEstimate> estimates;
  const bool all = a.method == "all";
  std::optional<OddsModel> odds;
  std::optional<OutcomeModel> outcome;
  if (all || a.method == "mr" || a.method == "ipw") odds = fit_odds(ds, odds_opt);
  if (all || a.method == "mr" || a.method == "ra") outcome = fit_outcome(ds, out_opt);
  if (all || a.method == "mr") estimates.push_back(mr_estimate(ds, *odds, *outcome));
  if (all || a.method == "ipw") estimates.push_back(ipw_estimate(ds, *odds));
  if (all || a.method == "ra") estimates.push_back(ra_estimate(ds, *outcome));
  const std::string seeds = "seeds data=" + std::to_string(a.seed);
  std::cerr << seeds << '\n';
  Output out(a.output);
  if (a.format == "json") {
    json doc{{"provenance", seeds}, {"target", target}, {"estimates", json::array()}};
    for (const auto& e : estimates) doc["estimates"].push_back({{"estimator", e.estimator}, {"mu_hat", e.mu_hat}});
    out.stream() << doc.dump(2) << '\n';
  } else {
    out.stream() << "# " << seeds << '\n';
    write_estimate_header(out.stream());
    for (const auto& e : estimates) write_estimate_row(out.stream(), e, a.seed);
  }
  return 0;
}

// --------------------------------------------------------------------------

struct AmputeArgs {
  std::string data;
  std::string mechanism = "mcar";
  double fraction = 0.3;
  double slope = 1.0;
  double base = -1.0;
  std::uint64_t seed = 0;
  std::string na = "NA";
  std::string output = "-";
};

int run_ampute(const AmputeArgs& a) {
  const IncompleteDataset complete = load(a.data, a.na, false);
  for (const Pattern& p : complete.patterns())
    if (!p.full()) throw DataError("amputation needs complete input data");
  GroundTruthDataset gt;
  if (a.mechanism == "mcar") gt = ampute_mcar(complete.values(), a.fraction, a.seed);
  else if (a.mechanism == "mar") gt = ampute_mar(complete.values(), MarOptions{a.fraction, a.slope}, a.seed);
  else gt = ampute_monotone(complete.values(), a.base, a.slope, a.seed);
  const IncompleteDataset out_ds(gt.incomplete.values(), gt.incomplete.patterns(), complete.column_names());
  std::cerr << "seeds amputation=" << a.seed << '\n';
  Output out(a.output);
  write_csv(out_ds, out.stream(), a.na);
  return 0;
}

// --------------------------------------------------------------------------

struct ExperimentArgs {
  std::string config;
  std::string output = "experiment_out";
  bool force = false;
  bool dry_run = false;
  int threads = default_threads();
};

int run_experiment_cmd(const ExperimentArgs& a) {
  require_file(a.config);
  ExperimentSpec spec = ExperimentSpec::from_file(a.config);
  spec.threads = a.threads;
  spec.validate();
  if (!spec.data_file.empty()) require_file(spec.data_file);
  std::cerr << spec.provenance() << '\n';
  if (a.dry_run) {
    std::cout << "config ok: " << spec.models.size() << " model(s), " << spec.criteria.size()
              << " criterion(s), " << spec.folds << " fold(s)\n";
    return 0;
  }
  const fs::path dir = a.output;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw EnvironmentError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!a.force) throw EnvironmentError(dir.string() + " is not empty; pass --force to replace it");
      fs::remove_all(dir);
    }
  }
  const ExperimentResult res = run_experiment(spec);
  const auto files = write_experiment(spec, res, dir);
  for (const auto& [model, why] : res.failed) std::cerr << "model " << model << " failed: " << why << '\n';
  std::cout << "wrote " << files.size() << " file(s) to " << dir.string() << '\n';
  return res.failed.empty() ? 0 : 1;
}

// --------------------------------------------------------------------------

int run_pi_diagram(const std::string& points_path, const std::string& output) {
  require_file(points_path);
  std::ifstream in(points_path);
  std::string line;
  std::vector<PiPoint> points;
  std::string comment;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (comment.empty()) comment = line.substr(line.find_first_not_of("# "));
      continue;
    }
    if (!header) {
      if (line != "model,x_moo,y_criterion,criterion") throw DataError("unexpected PI points header: " + line);
      header = true;
      continue;
    }
    std::stringstream ss(line);
    PiPoint p;
    std::string x, y;
    if (!std::getline(ss, p.model, ',') || !std::getline(ss, x, ',') || !std::getline(ss, y, ',') ||
        !std::getline(ss, p.criterion))
      throw DataError("malformed PI point line: " + line);
    try {
      p.x_moo = std::stod(x);
      p.y_criterion = std::stod(y);
    } catch (const std::exception&) {
      throw DataError("non-numeric PI coordinate in line: " + line);
    }
    points.push_back(p);
  }
  fs::create_directories(output);
  const auto files = emit_pi_diagram(points, output, comment);
  std::cout << "wrote " << files.size() << " file(s) to " << output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masking-based evaluation, selection and fitting of imputation models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::vector<std::string> criteria = known_criteria();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score one imputation model with a masking criterion");
  evaluate->add_option("data", ev.data, "Input CSV (header row, NA for missing)")->required();
  evaluate->add_option("--model", ev.model, "Model spec, e.g. nn_hot_deck:k=5")->capture_default_str();
  evaluate->add_option("--criterion", ev.criterion, "Masking criterion")
      ->capture_default_str()
      ->check(CLI::IsMember(criteria));
  evaluate->add_option("--K", ev.K, "Largest masked subset size for mko")->capture_default_str();
  evaluate->add_option("--mode", ev.mode, "Scoring mode for moolc / moobl")
      ->capture_default_str()
      ->check(CLI::IsMember({"loss", "rank", "energy"}));
  evaluate->add_option("--loss", ev.loss, "Loss for moo / mko / mao")
      ->capture_default_str()
      ->check(CLI::IsMember({"squared", "absolute"}));
  evaluate->add_option("--folds", ev.folds, "Cross-fitting folds (0 fits and scores on the full data)")
      ->capture_default_str();
  evaluate->add_option("--na", ev.na, "Missing-value token")->capture_default_str();
  evaluate->add_flag("--raw", ev.raw, "Skip column standardization");
  evaluate->add_option("--format", ev.format, "Report format")
      ->capture_default_str()
      ->check(CLI::IsMember({"csv", "json"}));
  evaluate->add_option("-o,--output", ev.output, "Output path, - for stdout")->capture_default_str();
  ev.crit.add(evaluate);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit an imputation model and write its parameters as JSON");
  fit->add_option("data", fa.data, "Input CSV")->required();
  fit->add_option("--model", fa.model, "Model spec")->capture_default_str();
  fit->add_option("--na", fa.na, "Missing-value token")->capture_default_str();
  fit->add_flag("--raw", fa.raw, "Skip column standardization");
  fit->add_flag("--gradient", fa.gradient, "Fit separable_gaussian by gradient ascent on the masked likelihood");
  fit->add_option("--init", fa.init, "Gradient starting point")
      ->capture_default_str()
      ->check(CLI::IsMember({"default", "unit"}));
  fit->add_option("--step-size", fa.step_size, "Initial ascent step")->capture_default_str();
  fit->add_option("--max-iter", fa.max_iter, "Iteration cap")->capture_default_str();
  fit->add_option("--grad-tol", fa.grad_tol, "Stop when the sup-norm of the mean score is below this")
      ->capture_default_str();
  fit->add_flag("--sandwich", fa.sandwich, "Add sandwich covariance and standard errors");
  fit->add_option("-o,--output", fa.output, "Output path, - for stdout")->capture_default_str();

  SelectArgs sa;
  auto* select = app.add_subcommand("select", "Rank candidate models (ties: fewer parameters, then label)");
  select->add_option("data", sa.data, "Input CSV")->required();
  select->add_option("--models", sa.models, "Comma-separated model specs")->required()->delimiter(',');
  select->add_option("--by", sa.by, "Selection score")
      ->capture_default_str()
      ->check(CLI::IsMember({"bic", "moort", "mooen"}));
  select->add_option("--folds", sa.folds, "Cross-fitting folds for moort / mooen (0 = in-sample)")
      ->capture_default_str();
  select->add_option("--na", sa.na, "Missing-value token")->capture_default_str();
  select->add_flag("--raw", sa.raw, "Skip column standardization");
  select->add_option("--format", sa.format, "Table format")
      ->capture_default_str()
      ->check(CLI::IsMember({"csv", "json"}));
  select->add_option("-o,--output", sa.output, "Output path, - for stdout")->capture_default_str();
  sa.crit.add(select);

  EstimateArgs ea;
  auto* estimate = app.add_subcommand("estimate", "Estimate the mean of one column (mr, ipw, ra)");
  estimate->add_option("data", ea.data, "Input CSV (unused with --scenario)");
  estimate->add_option("--target-col", ea.target, "Column whose mean is estimated");
  estimate->add_option("--method", ea.method, "Estimator")
      ->capture_default_str()
      ->check(CLI::IsMember({"mr", "ipw", "ra", "all"}));
  estimate->add_option("--odds-basis", ea.odds_basis, "Odds regression basis")
      ->capture_default_str()
      ->check(CLI::IsMember({"intercept", "linear", "quadratic"}));
  estimate->add_option("--outcome-basis", ea.outcome_basis, "Outcome regression basis")
      ->capture_default_str()
      ->check(CLI::IsMember({"intercept", "linear", "quadratic"}));
  estimate->add_option("--misspecify", ea.misspecify,
                       "Robustness grid cell: quadratic bases except for the named nuisances")
      ->check(CLI::IsMember({"none", "odds", "outcome", "both"}));
  estimate->add_option("--scenario", ea.scenario, "Generate data instead of reading a file")
      ->check(CLI::IsMember({"robustness"}));
  estimate->add_option("--n", ea.n, "Scenario sample size")->capture_default_str();
  estimate->add_option("--min-rows", ea.min_rows, "Rows per side below which the odds fall back to a ratio")
      ->capture_default_str();
  estimate->add_option("--seed", ea.seed, "Scenario seed")->capture_default_str();
  estimate->add_option("--na", ea.na, "Missing-value token")->capture_default_str();
  estimate->add_option("--format", ea.format, "Output format")
      ->capture_default_str()
      ->check(CLI::IsMember({"csv", "json"}));
  estimate->add_option("-o,--output", ea.output, "Output path, - for stdout")->capture_default_str();

  AmputeArgs aa;
  auto* ampute = app.add_subcommand("ampute", "Introduce missing values into complete data");
  ampute->add_option("data", aa.data, "Complete input CSV")->required();
  ampute->add_option("--mechanism", aa.mechanism, "Missingness mechanism")
      ->capture_default_str()
      ->check(CLI::IsMember({"mcar", "mar", "monotone"}));
  ampute->add_option("--fraction", aa.fraction, "MCAR cell probability or MAR incomplete-row fraction")
      ->capture_default_str();
  ampute->add_option("--slope", aa.slope, "Logistic slope (mar, monotone)")->capture_default_str();
  ampute->add_option("--base", aa.base, "Logistic intercept (monotone)")->capture_default_str();
  ampute->add_option("--seed", aa.seed, "Amputation seed")->capture_default_str();
  ampute->add_option("--na", aa.na, "Missing-value token")->capture_default_str();
  ampute->add_option("-o,--output", aa.output, "Output path, - for stdout")->capture_default_str();

  ExperimentArgs xa;
  auto* experiment = app.add_subcommand("experiment", "Run a cross-fitted experiment from a JSON config");
  experiment->add_option("config", xa.config, "Experiment config")->required();
  experiment->add_option("-o,--output", xa.output, "Artifact directory")->capture_default_str();
  experiment->add_flag("--force", xa.force, "Replace a non-empty output directory");
  experiment->add_flag("--dry-run", xa.dry_run, "Validate the config without computing");
  experiment->add_option("--threads", xa.threads, "Worker threads (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::string pi_points, pi_output = ".";
  auto* pi = app.add_subcommand("pi-diagram", "Render SVG diagrams from a pi_points.csv file");
  pi->add_option("points", pi_points, "pi_points.csv")->required();
  pi->add_option("-o,--output", pi_output, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (*evaluate) return run_evaluate(ev);
    if (*fit) return run_fit(fa);
    if (*select) return run_select(sa);
    if (*estimate) return run_estimate(ea);
    if (*ampute) return run_ampute(aa);
    if (*experiment) return run_experiment_cmd(xa);
    if (*pi) return run_pi_diagram(pi_points, pi_output);
  } catch (const EnvironmentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEnvironment;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEnvironment;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kUsage;
  } catch (const UnsupportedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsage;
}
