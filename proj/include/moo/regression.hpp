#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "moo/patterns.hpp"

namespace moo {

/// A fit or decomposition broke down (lost definiteness, non-finite result).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regressor expansion of the conditioning variables x_r.
enum class Basis { intercept, linear, quadratic };

std::string to_string(Basis b);
Basis basis_from_string(std::string_view s);

/// Number of regressors, intercept included, for `n_inputs` conditioning variables.
int basis_size(Basis b, int n_inputs);

/// Feature vector [1, x_r, x_r^2] (truncated by basis) over r's observed variables.
Eigen::VectorXd features(Basis b, Eigen::Ref<const Eigen::VectorXd> x, Pattern r);

struct LinearFit {
  Eigen::VectorXd coef;
  double rss = 0.0;
  int n = 0;
  bool ridged = false;
};

/// Least squares; falls back to a small ridge when the design is rank deficient.
LinearFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

struct LogisticFit {
  Eigen::VectorXd coef;
  int iterations = 0;
  bool converged = false;
  bool separated = false;
};

/// Newton-Raphson logistic regression of y in {0,1} on `design`.
LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                         int max_iter = 100, double tol = 1e-10);

/// Diagnostic sink; messages go to stderr unless silenced.
void warn(std::string_view message);
void set_warnings_enabled(bool enabled);

}  // namespace moo
