#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "moo/dataset.hpp"
#include "moo/models.hpp"

namespace moo {

/// A criterion could not produce a value (nothing evaluable, bad settings).
class CriterionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossKind { squared, absolute };

struct LossFn {
  LossKind kind = LossKind::squared;

  double operator()(double a, double b) const {
    const double e = a - b;
    return kind == LossKind::squared ? e * e : (e < 0 ? -e : e);
  }
  std::string name() const { return kind == LossKind::squared ? "squared" : "absolute"; }
};

LossFn loss_from_string(const std::string& s);

enum class RankMetric { kolmogorov, cramer_von_mises };

/// Scaling of the MOOEN pair term. `printed` uses 1/(2M(M-1)) over m < m';
/// `proper` uses 1/(M(M-1)), which estimates half the mean absolute
/// difference between two imputations and makes the per-entry loss an
/// unbiased energy score.
enum class EnergyNormalization { printed, proper };

struct CriterionConfig {
  int M = 20;
  int repeats = 1;
  std::uint64_t seed = 0;
  RankMetric metric = RankMetric::kolmogorov;
  bool discrete_rank = false;
  EnergyNormalization energy = EnergyNormalization::proper;
  int threads = 1;

  void validate(int min_M = 1) const;
};

struct CriterionReport {
  std::string criterion;
  std::string model;
  double total_risk = 0.0;
  /// Per-variable risks; NaN where the criterion does not decompose.
  std::vector<double> per_variable;
  std::vector<long> per_variable_evaluated;
  std::vector<long> per_variable_skipped;
  long n_evaluated = 0;
  long n_skipped = 0;
  /// Row normalizer.
  int n_rows = 0;
  /// MOOEN: the averaged pair (spread) term included in total_risk.
  double internal_term = 0.0;
  /// Rank criteria: every normalized rank, repeats concatenated.
  std::vector<double> ranks;
  /// MKO: per-row count of per-variable loss evaluations (one draw).
  std::vector<long> row_evaluations;
  CriterionConfig settings;
  int variable = -1;
};

/// One CSV row per variable plus a totals row:
/// model,criterion,variable,risk,n_evaluated,n_skipped,M,repeats,seed
void write_report_header(std::ostream& out);
void write_report_rows(std::ostream& out, const CriterionReport& report);

/// Exact Kolmogorov distance between the EDF of `s` and Uniform[0,1].
double ks_uniform(std::vector<double> s);
/// Integral of (F_n(t) - t)^2 over [0,1].
double cvm_uniform(std::vector<double> s);
double uniform_distance(std::vector<double> s, RankMetric metric);

CriterionReport moo_risk(const ImputationModel& model, const IncompleteDataset& ds,
                         const LossFn& loss, const CriterionConfig& cfg);
CriterionReport moo_risk_variable(const ImputationModel& model, const IncompleteDataset& ds, int j,
                                  const LossFn& loss, const CriterionConfig& cfg);
/// K >= number of variables gives MAO.
CriterionReport mko_risk(const ImputationModel& model, const IncompleteDataset& ds, int K,
                         const LossFn& loss, const CriterionConfig& cfg);

CriterionReport moort(const ImputationModel& model, const IncompleteDataset& ds,
                      const CriterionConfig& cfg);
CriterionReport moort_variable(const ImputationModel& model, const IncompleteDataset& ds, int j,
                               const CriterionConfig& cfg);
/// Sum over variables of the variable-wise MOORT distances.
CriterionReport moort_variable_sum(const ImputationModel& model, const IncompleteDataset& ds,
                                   const CriterionConfig& cfg);

CriterionReport mooen(const ImputationModel& model, const IncompleteDataset& ds,
                      const CriterionConfig& cfg);

enum class MonotoneMode { loss, rank, energy };

CriterionReport moolc_risk(const ImputationModel& model, const MonotoneDataset& mds,
                           MonotoneMode mode, const LossFn& loss, const CriterionConfig& cfg);
CriterionReport moobl_risk(const ImputationModel& model, const MonotoneDataset& mds,
                           MonotoneMode mode, const LossFn& loss, const CriterionConfig& cfg);

}  // namespace moo
