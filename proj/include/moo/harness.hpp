#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moo/criteria.hpp"
#include "moo/dataset.hpp"
#include "moo/models.hpp"
#include "moo/pi_diagram.hpp"

namespace moo {

/// Malformed experiment specification.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One criterion to evaluate. `name` is one of moo, mko, mao, moort,
/// moort_vsum, mooen, moolc, moobl.
struct CriterionSpec {
  std::string name = "moo";
  LossKind loss = LossKind::squared;
  int K = 2;
  MonotoneMode mode = MonotoneMode::loss;

  /// Tag used in file names and report rows, e.g. "mko2" or "moo_absolute".
  std::string tag() const;
};

CriterionSpec parse_criterion_spec(const nlohmann::json& j);
const std::vector<std::string>& known_criteria();

CriterionReport evaluate_criterion(const CriterionSpec& spec, const ImputationModel& model,
                                   const IncompleteDataset& ds, const CriterionConfig& cfg);

struct ExperimentSpec {
  // data source: a CSV file or a synthetic generator
  std::string data_file;
  std::string na_token = "NA";
  std::string generator;
  nlohmann::json generator_params = nlohmann::json::object();
  int n = 500;
  std::uint64_t data_seed = 1;
  bool standardize = true;

  // amputation: none | mcar | mar | monotone
  std::string mechanism = "mcar";
  double fraction = 0.3;
  double slope = 1.0;
  double base = -1.0;
  std::uint64_t amputation_seed = 2;

  std::vector<std::string> models;
  std::vector<CriterionSpec> criteria;
  int M = 20;
  int repeats = 1;
  std::uint64_t criterion_seed = 3;
  RankMetric metric = RankMetric::kolmogorov;
  EnergyNormalization energy = EnergyNormalization::proper;

  int folds = 5;
  std::uint64_t fold_seed = 4;

  bool oracle = true;
  int oracle_M = 20;
  std::uint64_t oracle_seed = 5;

  /// Worker threads; outputs do not depend on it.
  int threads = 1;

  static ExperimentSpec from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static ExperimentSpec from_file(const std::filesystem::path& path);
  /// Every field that affects results; threads are left out.
  nlohmann::json to_json() const;
  /// Throws ConfigError.
  void validate() const;
  /// FNV-1a 64 of to_json().dump(), as 16 hex digits.
  std::string config_hash() const;
  /// "seeds data=.. amputation=.. folds=.. criteria=.. oracle=.. config_hash=.."
  std::string provenance() const;
};

std::uint64_t fnv1a64(std::string_view bytes);

struct OracleSettings {
  int M = 20;
  std::uint64_t seed = 0;
  EnergyNormalization energy = EnergyNormalization::proper;
  RankMetric metric = RankMetric::kolmogorov;
  bool discrete_rank = false;
  LossFn loss{};
  int threads = 1;
};

/// Risks of one model on the genuinely missing entries.
struct OracleModelRisk {
  std::string model;
  double loss_risk = 0.0;    // mean loss of imputations against the truth
  double rank_risk = 0.0;    // distance of the truth's ranks from Uniform[0,1]
  double energy_risk = 0.0;  // mean energy score of the truth
  long n_entries = 0;
  double loss_sum = 0.0;
  double energy_sum = 0.0;
  std::vector<double> ranks;

  void merge(const OracleModelRisk& other);
  void finalize(RankMetric metric);
};

struct Concordance {
  std::string criterion;
  std::string oracle_metric;
  double spearman = 0.0;
};

struct OracleReport {
  std::vector<OracleModelRisk> models;
  std::vector<Concordance> concordance;
};

/// Sums over missing entries of `gt.incomplete`; call finalize() after
/// merging. `salt` separates substreams of different calls (e.g. folds).
OracleModelRisk oracle_entries(const ImputationModel& model, const GroundTruthDataset& gt,
                               const OracleSettings& settings, std::uint64_t salt = 0);

OracleReport oracle_risk(const std::vector<std::pair<std::string, ModelPtr>>& models,
                         const GroundTruthDataset& gt, const OracleSettings& settings);

/// Ranks 1..n with ties averaged.
std::vector<double> average_ranks(const std::vector<double>& v);
/// NaN when either vector is constant or shorter than 2.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct FoldRisk {
  std::string model;
  std::string criterion;
  int fold = 0;
  int n_rows = 0;
  double risk = 0.0;
};

struct FitRecord {
  std::string model;
  int fold = 0;
  nlohmann::json parameters;
};

struct ExperimentResult {
  std::vector<CriterionReport> reports;
  std::vector<FoldRisk> fold_risks;
  std::vector<PiPoint> pi_points;
  std::optional<OracleReport> oracle;
  std::vector<FitRecord> fits;
  /// Models dropped after a fit or evaluation failure, with the reason.
  std::vector<std::pair<std::string, std::string>> failed;
};

/// Loads or generates the data, then amputes and standardizes as configured.
/// The ground truth is present whenever an amputation was applied.
std::pair<IncompleteDataset, std::optional<RowMatrix>> prepare_experiment_data(const ExperimentSpec& spec);

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Writes risks.csv, fold_risks.csv, pi_points.csv, pi_diagram_<c>.svg,
/// oracle_ranks.csv, oracle_concordance.csv, config.json and fits/*.json.
std::vector<std::filesystem::path> write_experiment(const ExperimentSpec& spec,
                                                    const ExperimentResult& result,
                                                    const std::filesystem::path& dir);

}  // namespace moo
