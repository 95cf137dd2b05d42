#include "moo/synthetic.hpp"

#include <cmath>
#include <stdexcept>

#include "moo/rng.hpp"

namespace moo {

namespace {

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
    throw std::invalid_argument("covariance must be a non-empty square matrix");
  if (!sigma.isApprox(sigma.transpose(), 1e-12))
    throw std::invalid_argument("covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance is not positive definite");
  return llt.matrixL();
}

void check_n(int n) {
  if (n <= 0) throw std::invalid_argument("sample size must be positive");
}

}  // namespace

RowMatrix gaussian_joint(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, int n,
                         std::uint64_t seed) {
  check_n(n);
  if (mu.size() != sigma.rows()) throw std::invalid_argument("mean and covariance sizes differ");
  const Eigen::MatrixXd L = cholesky_factor(sigma);
  const int d = static_cast<int>(mu.size());
  RowMatrix out(n, d);
  Eigen::VectorXd z(d);
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(seed, Stream::synthetic, static_cast<std::uint64_t>(i));
    for (int j = 0; j < d; ++j) z(j) = standard_normal(rng);
    out.row(i) = (mu + L * z).transpose();
  }
  return out;
}

RowMatrix two_subpop_pattern_mixture(int d, double shift, double rho, int n, std::uint64_t seed) {
  check_n(n);
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(d, d, rho);
  sigma.diagonal().setOnes();
  const Eigen::MatrixXd L = cholesky_factor(sigma);
  RowMatrix out(n, d);
  Eigen::VectorXd z(d);
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(seed, Stream::synthetic, static_cast<std::uint64_t>(i));
    const double centre = uniform01(rng) < 0.5 ? 0.5 * shift : -0.5 * shift;
    for (int j = 0; j < d; ++j) z(j) = standard_normal(rng);
    out.row(i) = (Eigen::VectorXd::Constant(d, centre) + L * z).transpose();
  }
  return out;
}

Eigen::MatrixXd ar_covariance(int d, double phi) {
  Eigen::MatrixXd s(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) s(a, b) = std::pow(phi, std::abs(a - b));
  return s;
}

RowMatrix monotone_gaussian_ar(int d, double phi, int n, std::uint64_t seed) {
  check_n(n);
  if (d < 1) throw std::invalid_argument("dimension must be positive");
  if (!(std::abs(phi) < 1.0)) throw std::invalid_argument("AR coefficient must lie in (-1, 1)");
  const double innov = std::sqrt(1.0 - phi * phi);
  RowMatrix out(n, d);
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(seed, Stream::synthetic, static_cast<std::uint64_t>(i));
    double prev = standard_normal(rng);
    out(i, 0) = prev;
    for (int j = 1; j < d; ++j) {
      prev = phi * prev + innov * standard_normal(rng);
      out(i, j) = prev;
    }
  }
  return out;
}

const std::vector<std::string>& synthetic_generators() {
  static const std::vector<std::string> ids{"gaussian_joint", "two_subpop_pattern_mixture",
                                            "monotone_gaussian_ar"};
  return ids;
}

RowMatrix generate_synthetic(const std::string& id, const nlohmann::json& params, int n,
                             std::uint64_t seed) {
  const auto get = [&](const char* key, auto fallback) {
    return params.is_object() && params.contains(key) ? params.at(key).get<decltype(fallback)>()
                                                      : fallback;
  };
  if (id == "gaussian_joint") {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    if (params.is_object() && params.contains("sigma")) {
      const auto rows = params.at("sigma").get<std::vector<std::vector<double>>>();
      const int d = static_cast<int>(rows.size());
      sigma.resize(d, d);
      for (int a = 0; a < d; ++a) {
        if (static_cast<int>(rows[a].size()) != d) throw std::invalid_argument("sigma must be square");
        for (int b = 0; b < d; ++b) sigma(a, b) = rows[a][b];
      }
    } else {
      const int d = get("d", 3);
      if (d < 1) throw std::invalid_argument("dimension must be positive");
      sigma = Eigen::MatrixXd::Constant(d, d, get("rho", 0.5));
      sigma.diagonal().setOnes();
    }
    if (params.is_object() && params.contains("mu")) {
      const auto m = params.at("mu").get<std::vector<double>>();
      mu = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    } else {
      mu = Eigen::VectorXd::Zero(sigma.rows());
    }
    return gaussian_joint(mu, sigma, n, seed);
  }
  if (id == "two_subpop_pattern_mixture")
    return two_subpop_pattern_mixture(get("d", 3), get("shift", 2.0), get("rho", 0.3), n, seed);
  if (id == "monotone_gaussian_ar") return monotone_gaussian_ar(get("d", 4), get("phi", 0.6), n, seed);
  throw std::invalid_argument("unknown synthetic generator '" + id + "'");
}

}  // namespace moo
