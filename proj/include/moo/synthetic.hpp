#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "moo/dataset.hpp"

namespace moo {

/// Row i is drawn from its own substream, so the matrix depends only on
/// (params, n, seed).
RowMatrix gaussian_joint(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, int n,
                         std::uint64_t seed);

/// Two equally likely subpopulations N(+shift/2 * 1, I) and N(-shift/2 * 1, I)
/// with within-population correlation rho. Column means are 0, variances
/// 1 + shift^2/4 and covariances rho + shift^2/4.
RowMatrix two_subpop_pattern_mixture(int d, double shift, double rho, int n, std::uint64_t seed);

/// Stationary AR(1): x_0 ~ N(0,1), x_t = phi x_{t-1} + sqrt(1 - phi^2) e_t.
/// Corr(x_s, x_t) = phi^|s-t|.
RowMatrix monotone_gaussian_ar(int d, double phi, int n, std::uint64_t seed);

/// Covariance of monotone_gaussian_ar.
Eigen::MatrixXd ar_covariance(int d, double phi);

const std::vector<std::string>& synthetic_generators();

/// Dispatch by id. Params (all optional unless noted):
///   gaussian_joint: mu (array), sigma (matrix) or d + rho (equicorrelation)
///   two_subpop_pattern_mixture: d, shift, rho
///   monotone_gaussian_ar: d, phi
RowMatrix generate_synthetic(const std::string& id, const nlohmann::json& params, int n,
                             std::uint64_t seed);

}  // namespace moo
