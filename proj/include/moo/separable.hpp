#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moo/dataset.hpp"
#include "moo/likelihood.hpp"
#include "moo/models.hpp"

namespace moo {

/// Variance-sharing map: keys with equal labels share one variance. Keys not
/// listed keep their own variance.
using SharingMap = std::map<CondKey, int>;

/// Product-form Gaussian family with one regression per (r, j) key:
/// x_j | x_r, r ~ N(coef . features(x_r), sigma2). Parameter layout is every
/// key's coefficient block in key order, then one variance per sharing class.
class SeparableGaussianFamily final : public ParametricFamily {
 public:
  SeparableGaussianFamily(const IncompleteDataset& ds, std::vector<CondKey> keys, Basis basis,
                          const SharingMap& sharing = {});

  int size() const override { return size_; }
  int n_rows() const override { return n_rows_; }
  double loglik(const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd score(const Eigen::VectorXd& theta) const override;
  bool admissible(const Eigen::VectorXd& theta) const override;
  bool has_row_terms() const override { return true; }
  void row_terms(const Eigen::VectorXd& theta, std::vector<Eigen::VectorXd>& scores,
                 Eigen::MatrixXd& hessian_sum) const override;
  std::vector<std::string> parameter_names() const override;

  /// Score and Hessian of one log-density term.
  void term_derivatives(const Eigen::VectorXd& theta, int term, Eigen::VectorXd& grad,
                        Eigen::MatrixXd* hess) const;

  const std::vector<CondKey>& keys() const { return keys_; }
  Basis basis() const { return basis_; }
  int classes() const { return classes_; }
  int coef_offset(int k) const { return coef_offset_[k]; }
  int coef_size(int k) const { return coef_size_[k]; }
  int variance_index(int k) const { return coef_total_ + class_of_[k]; }
  int donor_count(int k) const { return donors_[k]; }

  /// Per-key OLS with pooled MLE variance (RSS / n summed over each class).
  Eigen::VectorXd closed_form() const;
  /// Intercept = donor mean of x_j, slopes 0, variance = donor variance.
  Eigen::VectorXd default_init() const;
  /// Intercept 0, slopes 0, variance 1.
  Eigen::VectorXd unit_init() const;

  PatternRegressionModel to_model(const Eigen::VectorXd& theta,
                                  const std::string& name = "separable_gaussian") const;

 private:
  struct Term {
    int row;
    int key;
    double y;
    Eigen::VectorXd f;
  };

  Basis basis_;
  int d_;
  std::vector<CondKey> keys_;
  std::vector<int> coef_offset_, coef_size_, class_of_, donors_;
  int coef_total_ = 0;
  int classes_ = 0;
  int size_ = 0;
  int n_rows_ = 0;
  std::vector<Term> terms_;
  std::vector<int> row_of_term_slot_;  // contributing-row slot per term
};

struct SeparableOptions {
  Basis basis = Basis::linear;
  /// Keys need at least max(min_rows, coefficient count + 1) donor rows.
  int min_rows = 0;
  SharingMap sharing;
};

struct SeparableFit {
  SeparableGaussianFamily family;
  Eigen::VectorXd theta;
  PatternRegressionModel model;
  FitDiagnostics diagnostics;
  /// Keys whose fitted variance collapsed to zero.
  std::vector<std::string> degenerate;
};

/// Keys of `ds` with enough donor rows for the given basis.
std::vector<CondKey> adequate_keys(const IncompleteDataset& ds, Basis basis, int min_rows);

SeparableFit fit_separable_gaussian_closed_form(const IncompleteDataset& ds,
                                                const SeparableOptions& options = {});

/// Closed-form fit with variances pooled over the classes of `sharing`.
SeparableFit fit_shared_variance(const IncompleteDataset& ds, const SharingMap& sharing,
                                 SeparableOptions options = {});

}  // namespace moo
