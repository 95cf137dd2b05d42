#pragma once

#include <optional>

#include <Eigen/Dense>

#include "moo/dataset.hpp"
#include "moo/likelihood.hpp"
#include "moo/models.hpp"

namespace moo {

/// Bivariate separable model scored by masking all observed subsets:
/// q(x1 | x2, 01), q(x2 | x1, 10) regressions and a full Gaussian q(x1, x2 | 00).
struct MaoBivariateParams {
  std::optional<RegressionConditional> q01;  // imputes x1 from x2
  std::optional<RegressionConditional> q10;  // imputes x2 from x1
  Eigen::Vector2d mu00 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sigma00 = Eigen::Matrix2d::Identity();
};

struct MaoBivariateValue {
  double value = 0.0;
  Eigen::Vector2d grad_mu = Eigen::Vector2d::Zero();
  /// Derivative with respect to each entry of sigma00 taken as a general matrix.
  Eigen::Matrix2d grad_sigma = Eigen::Matrix2d::Zero();
  int n10 = 0, n01 = 0, n11 = 0;
};

/// Full MAO log-likelihood (regression terms included when present) and the
/// analytic gradients in (mu00, sigma00). sigma00 may be non-symmetric for
/// finite-difference checks; its symmetric part must be positive definite.
MaoBivariateValue mao_loglik_bivariate(const IncompleteDataset& ds, const MaoBivariateParams& p);

/// theta = (mu1, mu2, s11, s12, s22) for the pattern-00 Gaussian.
class MaoBivariateFamily final : public ParametricFamily {
 public:
  explicit MaoBivariateFamily(const IncompleteDataset& ds);
  int size() const override { return 5; }
  int n_rows() const override { return n_rows_; }
  double loglik(const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd score(const Eigen::VectorXd& theta) const override;
  bool admissible(const Eigen::VectorXd& theta) const override;
  /// Symmetric eigenvalue floor of 1e-8.
  Eigen::VectorXd project(const Eigen::VectorXd& theta) const override;
  std::vector<std::string> parameter_names() const override;

  Eigen::VectorXd default_init() const;
  static MaoBivariateParams unpack(const Eigen::VectorXd& theta);

 private:
  IncompleteDataset ds_;
  int n_rows_ = 0;
};

struct MaoBivariateFit {
  MaoBivariateParams params;
  FitDiagnostics diagnostics;
};

/// Closed-form regressions plus gradient ascent for (mu00, sigma00).
MaoBivariateFit fit_mao_bivariate(const IncompleteDataset& ds, const GradientAscentConfig& cfg = {});

}  // namespace moo
