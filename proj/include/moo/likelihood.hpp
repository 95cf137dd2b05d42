#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "moo/dataset.hpp"
#include "moo/models.hpp"

namespace moo {

struct MooLogLik {
  double value = 0.0;
  long n_terms = 0;
  long n_skipped = 0;
  /// Rows contributing at least one term; the BIC sample size.
  int n_rows = 0;
  /// Some term had zero density; value is -infinity.
  bool degenerate = false;
  std::string offending;
};

/// Sum over rows and observed j of log q(X_ij | X_{i, R_i - e_j}, R_i - e_j).
MooLogLik moo_loglik(const ImputationModel& model, const IncompleteDataset& ds, int threads = 1);

struct KdeOptions {
  int M = 200;
  /// Fixed bandwidth; Silverman's rule on the draws when unset.
  std::optional<double> bandwidth;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// 1.06 * sd * M^(-1/5), floored at 1e-6.
double silverman_bandwidth(std::span<const double> draws);
double kde_log_density(double x, std::span<const double> draws, double h);

/// Monte Carlo version of moo_loglik: each term is a Gaussian-kernel density
/// estimate over M imputations, evaluated at the masked value.
MooLogLik moo_loglik_mc(const ImputationModel& model, const IncompleteDataset& ds,
                        const KdeOptions& options);

/// Log-likelihood of the blocked monotone masking: every observed x_j scored
/// by q(x_j | x_<j, T = j-1).
MooLogLik moobl_loglik(const ImputationModel& model, const MonotoneDataset& mds);

/// l - d(q)/2 * log n with n the contributing-row count.
double bic(const MooLogLik& ll, int parameter_count);
double bic(const ImputationModel& model, const IncompleteDataset& ds);

// --------------------------------------------------------------------------
// Masked maximum likelihood

/// A parametric imputation family scored by a masked log-likelihood.
class ParametricFamily {
 public:
  virtual ~ParametricFamily() = default;
  virtual int size() const = 0;
  /// Normalizer n of the ascent objective (1/n) l_n.
  virtual int n_rows() const = 0;
  virtual double loglik(const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::VectorXd score(const Eigen::VectorXd& theta) const = 0;
  /// False outside the parameter space (e.g. a nonpositive variance).
  virtual bool admissible(const Eigen::VectorXd&) const { return true; }
  /// Maps an admissible iterate back onto a constrained set.
  virtual Eigen::VectorXd project(const Eigen::VectorXd& theta) const { return theta; }
  /// Per-row score vectors and the summed Hessian; needed by the sandwich.
  virtual bool has_row_terms() const { return false; }
  virtual void row_terms(const Eigen::VectorXd& theta, std::vector<Eigen::VectorXd>& scores,
                         Eigen::MatrixXd& hessian_sum) const;
  virtual std::vector<std::string> parameter_names() const;
};

struct GradientAscentConfig {
  double step_size = 1.0;
  int max_iter = 50000;
  double grad_tol = 1e-10;
  std::optional<Eigen::VectorXd> init;
};

struct FitDiagnostics {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  std::vector<double> trace;
  std::optional<Eigen::MatrixXd> sandwich;
  Eigen::VectorXd standard_errors;
};

struct GradientFit {
  Eigen::VectorXd theta;
  FitDiagnostics diagnostics;
};

/// theta <- theta + xi * score / n, halving xi from its initial value until
/// the objective does not decrease.
GradientFit fit_moo_mle_gradient(const ParametricFamily& family, const Eigen::VectorXd& default_init,
                                 const GradientAscentConfig& cfg = {});

/// H^-1 (1/n sum Gamma Gamma^T) H^-1 with H the mean per-row Hessian.
Eigen::MatrixXd sandwich_covariance(const ParametricFamily& family, const Eigen::VectorXd& theta);

/// sqrt(diag(sandwich) / n).
Eigen::VectorXd sandwich_standard_errors(const ParametricFamily& family,
                                         const Eigen::VectorXd& theta);

/// Central finite-difference gradient of family.loglik.
Eigen::VectorXd numeric_score(const ParametricFamily& family, const Eigen::VectorXd& theta,
                              double h = 1e-5);

nlohmann::json to_json(const FitDiagnostics& diag);

}  // namespace moo
