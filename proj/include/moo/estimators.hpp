#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moo/dataset.hpp"
#include "moo/regression.hpp"

namespace moo {

struct NuisanceOptions {
  /// Column playing the role of X1.
  int target = 0;
  Basis basis = Basis::linear;
  /// Minimum rows in each of the two patterns compared by the odds classifier.
  int min_rows = 10;
};

/// Fitted nuisance for one pattern r with the target missing.
struct NuisanceEntry {
  Pattern r;
  Basis basis = Basis::intercept;
  Eigen::VectorXd coef;
  int n_missing = 0;   // rows with pattern r
  int n_donor = 0;     // rows with pattern r + e_target
  bool fallback = false;
  bool separated = false;
};

/// O1(x_r, r) = P(R1 = 0 | x_r, r_-1) / P(R1 = 1 | x_r, r_-1).
class OddsModel {
 public:
  OddsModel() = default;
  OddsModel(int target, std::map<Pattern, NuisanceEntry> entries)
      : target_(target), entries_(std::move(entries)) {}

  /// Odds clipped to [1e-6, 1e6]; exactly 0 when no row has pattern r.
  double odds(Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const;
  bool contains(Pattern r) const { return entries_.contains(r); }
  int target() const { return target_; }
  const std::map<Pattern, NuisanceEntry>& entries() const { return entries_; }

  /// Overrides every key with a constant odds value.
  static OddsModel constant(const IncompleteDataset& ds, int target, double value);

 private:
  int target_ = 0;
  std::map<Pattern, NuisanceEntry> entries_;
  std::map<Pattern, double> constant_;
};

/// mu1(x_r, r + e1) = E[X1 | X_r, R = r + e1].
class OutcomeModel {
 public:
  OutcomeModel() = default;
  OutcomeModel(int target, std::map<Pattern, NuisanceEntry> entries)
      : target_(target), entries_(std::move(entries)) {}

  double mean(Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const;
  bool contains(Pattern r) const { return entries_.contains(r); }
  int target() const { return target_; }
  const std::map<Pattern, NuisanceEntry>& entries() const { return entries_; }

  /// mu1 identically zero on every key.
  static OutcomeModel zero(const IncompleteDataset& ds, int target);

 private:
  int target_ = 0;
  std::map<Pattern, NuisanceEntry> entries_;
};

/// Patterns r with the target missing whose pattern or donor pattern occurs.
std::vector<Pattern> nuisance_keys(const IncompleteDataset& ds, int target);

OddsModel fit_odds(const IncompleteDataset& ds, const NuisanceOptions& options = {});
OutcomeModel fit_outcome(const IncompleteDataset& ds, const NuisanceOptions& options = {});

struct PatternContribution {
  Pattern r;
  /// (1/n) sum over rows with R = r + e1 of O1 * (X1 - mu1).
  double weighted_residual = 0.0;
  /// (1/n) sum over rows with R = r of mu1.
  double regression = 0.0;
  /// (1/n) sum over rows with R = r + e1 of O1 * X1.
  double weighted_outcome = 0.0;
  /// (1/n) sum over rows with R = r + e1 of O1 * mu1.
  double cross = 0.0;
  int n_missing = 0;
  int n_donor = 0;
};

struct MeanEstimate {
  std::string estimator;
  double mu_hat = 0.0;
  /// (1/n) sum of observed X1.
  double observed_part = 0.0;
  std::vector<PatternContribution> per_pattern;
  /// Per-row influence values with mu_hat subtracted.
  std::vector<double> eif;
};

MeanEstimate mr_estimate(const IncompleteDataset& ds, const OddsModel& odds,
                         const OutcomeModel& outcome);
MeanEstimate ipw_estimate(const IncompleteDataset& ds, const OddsModel& odds);
MeanEstimate ra_estimate(const IncompleteDataset& ds, const OutcomeModel& outcome);

/// estimator,mu_hat,per_pattern_json,seed
void write_estimate_header(std::ostream& out);
void write_estimate_row(std::ostream& out, const MeanEstimate& e, std::uint64_t seed);

/// Bivariate design with a known mean: X2 ~ N(0, 1),
/// X1 = 1 + X2 + X2^2 / 2 + N(0, 1), so E[X1] = 1.5. X2 is missing completely
/// at random with probability 0.3. Given X2 observed, X1 is missing with
/// probability logistic(-0.5 + X2^2 / 4); given X2 missing, with probability 0.3.
/// The quadratic coefficient stays below 1/2 so the weighted terms have
/// finite variance.
/// Both nuisances are quadratic in X2, so the linear basis misspecifies them.
IncompleteDataset robustness_scenario(int n, std::uint64_t seed);
inline constexpr double kRobustnessMean = 1.5;

struct NuisanceBases {
  Basis odds = Basis::quadratic;
  Basis outcome = Basis::quadratic;
};

/// `misspecify` is none | odds | outcome | both; the named nuisances get the
/// linear basis and the rest the quadratic one.
NuisanceBases robustness_bases(const std::string& misspecify);

}  // namespace moo
