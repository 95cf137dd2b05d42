#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "moo/dataset.hpp"
#include "moo/patterns.hpp"
#include "moo/regression.hpp"
#include "moo/rng.hpp"

namespace moo {

/// Requested capability (density, joint sampling) is not provided by a model.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A fitted out-of-sample imputation model q(x_rbar | x_r, r).
///
/// `x` is always a full-length row; implementations read only the entries
/// flagged in `r`. An all-zero `r` asks for an unconditional draw.
class ImputationModel {
 public:
  virtual ~ImputationModel() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  /// Free parameter count, used by BIC.
  virtual int parameter_count() const = 0;

  /// False when the conditional for (j, r) could not be fitted.
  virtual bool available(int /*j*/, Pattern /*r*/) const { return true; }

  virtual double sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                 Rng& rng) const = 0;
  /// `out.size()` independent draws; must consume the engine exactly as the
  /// same number of sample_marginal calls would.
  virtual void sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r, Rng& rng,
                                 std::span<double> out) const;

  virtual bool has_density() const { return false; }
  virtual double log_density_marginal(double xj, int j, Eigen::Ref<const Eigen::VectorXd> x,
                                      Pattern r) const;

  virtual bool has_joint() const { return false; }
  /// One draw of x_s given x_r; result has |s| entries in increasing index order.
  virtual Eigen::VectorXd sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                       Rng& rng) const;

  /// Deterministic imputer (a point mass); its likelihood is degenerate.
  virtual bool point_mass() const { return false; }

  /// Versioned parameter document.
  virtual nlohmann::json to_json() const;
};

using ModelPtr = std::shared_ptr<const ImputationModel>;

// --------------------------------------------------------------------------
// Mean imputation

class MeanModel final : public ImputationModel {
 public:
  explicit MeanModel(Eigen::VectorXd means) : means_(std::move(means)) {}
  std::string name() const override { return "mean"; }
  int dim() const override { return static_cast<int>(means_.size()); }
  int parameter_count() const override { return dim(); }
  double sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd>, Pattern, Rng&) const override {
    return means_(j);
  }
  bool has_joint() const override { return true; }
  Eigen::VectorXd sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                               Rng& rng) const override;
  bool point_mass() const override { return true; }
  nlohmann::json to_json() const override;
  const Eigen::VectorXd& means() const { return means_; }

 private:
  Eigen::VectorXd means_;
};

MeanModel fit_mean(const IncompleteDataset& train);

// --------------------------------------------------------------------------
// Joint Gaussian (EM) and its conditional-mean variant

struct GaussianConditional {
  Eigen::VectorXd mean;        // over the requested targets
  Eigen::MatrixXd covariance;  // Schur complement
};

class GaussianJointModel final : public ImputationModel {
 public:
  /// `deterministic` turns the model into a conditional-mean point mass.
  GaussianJointModel(Eigen::VectorXd mean, Eigen::MatrixXd covariance, double ridge = 0.0,
                     bool deterministic = false);

  std::string name() const override { return deterministic_ ? "gaussian_mean" : "gaussian_em"; }
  int dim() const override { return static_cast<int>(mean_.size()); }
  int parameter_count() const override { return dim() + dim() * (dim() + 1) / 2; }

  double sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                         Rng& rng) const override;
  void sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r, Rng& rng,
                         std::span<double> out) const override;
  bool has_density() const override { return !deterministic_; }
  bool point_mass() const override { return deterministic_; }
  double log_density_marginal(double xj, int j, Eigen::Ref<const Eigen::VectorXd> x,
                              Pattern r) const override;
  bool has_joint() const override { return true; }
  Eigen::VectorXd sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                               Rng& rng) const override;
  nlohmann::json to_json() const override;

  /// Distribution of x_s given x_r.
  GaussianConditional conditional(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  double ridge() const { return ridge_; }
  bool deterministic() const { return deterministic_; }
  GaussianJointModel as_deterministic() const { return {mean_, cov_, ridge_, true}; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  double ridge_;
  bool deterministic_;
};

struct EmResult {
  GaussianJointModel model;
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
};

/// Observed-data Gaussian log-likelihood.
double gaussian_observed_loglik(const IncompleteDataset& ds, const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cov);

EmResult fit_gaussian_em(const IncompleteDataset& train, double ridge = 0.0, int max_iter = 500,
                         double tol = 1e-8);

// --------------------------------------------------------------------------
// Hot deck

enum class HotDeckVariant { nearest_neighbor, random };

class HotDeckModel final : public ImputationModel {
 public:
  HotDeckModel(IncompleteDataset donors, HotDeckVariant variant, int k_neighbors);

  std::string name() const override {
    return variant_ == HotDeckVariant::random ? "random_hot_deck" : "nn_hot_deck";
  }
  int dim() const override { return donors_.cols(); }
  int parameter_count() const override { return 0; }
  bool available(int j, Pattern r) const override;
  double sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                         Rng& rng) const override;
  void sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r, Rng& rng,
                         std::span<double> out) const override;
  bool has_joint() const override { return true; }
  Eigen::VectorXd sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                               Rng& rng) const override;
  nlohmann::json to_json() const override;

  /// Donor rows a draw for (targets, x_r) is taken from uniformly.
  std::vector<int> donor_pool(Pattern targets, Eigen::Ref<const Eigen::VectorXd> x,
                              Pattern r) const;
  HotDeckVariant variant() const { return variant_; }
  int k_neighbors() const { return k_; }

 private:
  IncompleteDataset donors_;
  HotDeckVariant variant_;
  int k_;
};

HotDeckModel fit_hot_deck(const IncompleteDataset& train, HotDeckVariant variant,
                          int k_neighbors = 10);

// --------------------------------------------------------------------------
// Pattern-specific Gaussian regressions (MOOPM, separable MOO-MLE)

/// Conditional key: impute variable j under pattern r (j not in r).
struct CondKey {
  Pattern r;
  int j = 0;
  friend auto operator<=>(const CondKey&, const CondKey&) = default;
  std::string str() const { return r.str() + ":" + std::to_string(j); }
};

/// x_j | x_r ~ N(coef . features(x_r), variance).
struct RegressionConditional {
  Basis basis = Basis::linear;
  Eigen::VectorXd coef;
  double variance = 1.0;
  int n_donors = 0;
  bool ridged = false;

  double mean(Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const;
  double log_density(double xj, Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const;
};

enum class VarianceDenominator {
  unbiased,  // RSS / (n - p)
  mle,       // RSS / n
};

/// Product-form imputation model: each missing variable imputed independently
/// from its own (r, j) Gaussian regression.
class PatternRegressionModel final : public ImputationModel {
 public:
  PatternRegressionModel(std::string name, int d, std::map<CondKey, RegressionConditional> conds,
                         int shared_variance_reduction = 0);

  std::string name() const override { return name_; }
  int dim() const override { return d_; }
  int parameter_count() const override;
  bool available(int j, Pattern r) const override;
  double sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                         Rng& rng) const override;
  void sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r, Rng& rng,
                         std::span<double> out) const override;
  bool has_density() const override { return true; }
  double log_density_marginal(double xj, int j, Eigen::Ref<const Eigen::VectorXd> x,
                              Pattern r) const override;
  bool has_joint() const override { return true; }
  Eigen::VectorXd sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                               Rng& rng) const override;
  nlohmann::json to_json() const override;

  const std::map<CondKey, RegressionConditional>& conditionals() const { return conds_; }
  const RegressionConditional& conditional(int j, Pattern r) const;

 private:
  std::string name_;
  int d_;
  std::map<CondKey, RegressionConditional> conds_;
  int shared_reduction_;
};

struct MoopmOptions {
  int min_rows = 20;
  Basis basis = Basis::linear;
  VarianceDenominator denominator = VarianceDenominator::unbiased;
};

/// Every (r, j) whose donor pattern r+e_j occurs in the data.
std::vector<CondKey> moo_keys(const IncompleteDataset& ds);

/// Regression of x_j on x_r over rows with pattern exactly r+e_j.
std::optional<RegressionConditional> fit_key(const IncompleteDataset& ds, CondKey key, Basis basis,
                                              VarianceDenominator denominator, int min_rows);

PatternRegressionModel fit_moopm_empirical(const IncompleteDataset& train,
                                           const MoopmOptions& options = {});

// --------------------------------------------------------------------------
// Complete-case missing value (CCMV)

class CcmvModel final : public ImputationModel {
 public:
  CcmvModel(Eigen::VectorXd mean, Eigen::MatrixXd scatter, int n_complete);

  std::string name() const override { return "ccmv"; }
  int dim() const override { return static_cast<int>(mean_.size()); }
  int parameter_count() const override;
  double sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                         Rng& rng) const override;
  void sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r, Rng& rng,
                         std::span<double> out) const override;
  bool has_density() const override { return true; }
  double log_density_marginal(double xj, int j, Eigen::Ref<const Eigen::VectorXd> x,
                              Pattern r) const override;
  bool has_joint() const override { return true; }
  Eigen::VectorXd sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                               Rng& rng) const override;
  nlohmann::json to_json() const override;

  /// Complete-case OLS of x_j on x_r, residual variance with n - |r| - 1.
  RegressionConditional conditional(int j, Pattern r) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd scatter_;  // centered cross-product sum
  int n_;
};

CcmvModel fit_ccmv(const IncompleteDataset& train);

// --------------------------------------------------------------------------
// Monotone sequential imputation (NCMV / ACMV)

enum class MonotoneRule { ncmv, acmv };

class MonotoneSequentialModel final : public ImputationModel {
 public:
  /// stage[tau] imputes variable tau from variables 0..tau-1 (linear basis).
  MonotoneSequentialModel(std::string name, std::vector<RegressionConditional> stages);

  std::string name() const override { return name_; }
  int dim() const override { return static_cast<int>(stages_.size()); }
  int parameter_count() const override;
  bool available(int j, Pattern r) const override;
  double sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                         Rng& rng) const override;
  bool has_density() const override { return true; }
  double log_density_marginal(double xj, int j, Eigen::Ref<const Eigen::VectorXd> x,
                              Pattern r) const override;
  bool has_joint() const override { return true; }
  Eigen::VectorXd sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                               Rng& rng) const override;
  nlohmann::json to_json() const override;

  const std::vector<RegressionConditional>& stages() const { return stages_; }

 private:
  std::string name_;
  std::vector<RegressionConditional> stages_;
};

struct MonotoneFit {
  MonotoneSequentialModel model;
  std::vector<int> donor_counts;
};

MonotoneFit fit_monotone(const MonotoneDataset& train, MonotoneRule rule);

/// Stage regressions implied by a joint Gaussian: x_tau | x_<tau.
MonotoneSequentialModel monotone_from_gaussian(const GaussianJointModel& g, std::string name);

// --------------------------------------------------------------------------
// Factory

struct ModelSpec {
  std::string kind;  // mean | gaussian_em | gaussian_mean | nn_hot_deck | random_hot_deck |
                     // moopm | separable_gaussian | ccmv | ncmv | acmv
  std::string label;
  int k_neighbors = 10;
  double ridge = 1e-6;
  int min_rows = 20;
  Basis basis = Basis::linear;

  std::string display() const { return label.empty() ? kind : label; }
};

ModelSpec parse_model_spec(const std::string& text);
const std::vector<std::string>& known_model_kinds();
ModelPtr fit_model(const ModelSpec& spec, const IncompleteDataset& train);

/// Rebuilds Gaussian-family models from their parameter document.
ModelPtr model_from_json(const nlohmann::json& doc);

}  // namespace moo
