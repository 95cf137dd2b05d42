#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "moo/models.hpp"

namespace moo {

namespace {

Eigen::MatrixXd select(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                       const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) out(a, b) = m(rows[a], cols[b]);
  return out;
}

Eigen::VectorXd select(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) out(a) = v(idx[a]);
  return out;
}

// Regression of targets S on conditioning set R under N(mu, cov):
// x_S | x_R ~ N(mu_S + B (x_R - mu_R), cov_SS - B cov_RS).
struct Regression {
  Eigen::MatrixXd B;
  Eigen::MatrixXd schur;
};

Regression regress(const Eigen::MatrixXd& cov, const std::vector<int>& S,
                   const std::vector<int>& R, double ridge) {
  Regression out;
  const Eigen::MatrixXd css = select(cov, S, S);
  if (R.empty()) {
    out.B = Eigen::MatrixXd::Zero(S.size(), 0);
    out.schur = css;
    return out;
  }
  Eigen::MatrixXd crr = select(cov, R, R);
  const Eigen::MatrixXd csr = select(cov, S, R);
  Eigen::LLT<Eigen::MatrixXd> llt(crr);
  if (llt.info() != Eigen::Success) {
    crr.diagonal().array() += std::max(ridge, 1e-10);
    llt.compute(crr);
    if (llt.info() != Eigen::Success)
      throw NumericalError("conditioning covariance is not positive definite");
  }
  out.B = llt.solve(csr.transpose()).transpose();
  out.schur = css - out.B * csr.transpose();
  out.schur = 0.5 * (out.schur + out.schur.transpose());
  return out;
}

}  // namespace

// --------------------------------------------------------------------------

MeanModel fit_mean(const IncompleteDataset& train) {
  const int d = train.cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(d);
  for (int i = 0; i < train.rows(); ++i)
    for (int j = 0; j < d; ++j)
      if (train.observed(i, j)) {
        sum(j) += train.value(i, j);
        ++count(j);
      }
  for (int j = 0; j < d; ++j) {
    if (count(j) == 0) throw DataError("column " + std::to_string(j + 1) + " has no observed entry");
    sum(j) /= count(j);
  }
  return MeanModel(sum);
}

Eigen::VectorXd MeanModel::sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd>, Pattern,
                                        Rng&) const {
  return select(means_, s.indices());
}

// --------------------------------------------------------------------------

GaussianJointModel::GaussianJointModel(Eigen::VectorXd mean, Eigen::MatrixXd covariance,
                                       double ridge, bool deterministic)
    : mean_(std::move(mean)), cov_(std::move(covariance)), ridge_(ridge),
      deterministic_(deterministic) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
    throw std::invalid_argument("mean and covariance dimensions differ");
  if (ridge_ < 0) throw std::invalid_argument("ridge must be nonnegative");
  cov_ = 0.5 * (cov_ + cov_.transpose());
}

GaussianConditional GaussianJointModel::conditional(Pattern s, Eigen::Ref<const Eigen::VectorXd> x,
                                                    Pattern r) const {
  if ((s.bits() & r.bits()) != 0) throw std::invalid_argument("target overlaps conditioning set");
  const auto S = s.indices();
  const auto R = r.indices();
  const Regression reg = regress(cov_, S, R, ridge_);
  GaussianConditional out;
  out.mean = select(mean_, S);
  if (!R.empty()) out.mean += reg.B * (select(Eigen::VectorXd(x), R) - select(mean_, R));
  out.covariance = reg.schur;
  return out;
}

double GaussianJointModel::sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                           Rng& rng) const {
  double v;
  sample_marginal_n(j, x, r, rng, std::span<double>(&v, 1));
  return v;
}

void GaussianJointModel::sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                           Rng& rng, std::span<double> out) const {
  const auto c = conditional(Pattern(std::uint64_t{1} << j, dim()), x, r);
  const double m = c.mean(0);
  if (deterministic_) {
    std::fill(out.begin(), out.end(), m);
    return;
  }
  const double sd = std::sqrt(std::max(c.covariance(0, 0), 0.0));
  for (double& v : out) v = m + sd * standard_normal(rng);
}

double GaussianJointModel::log_density_marginal(double xj, int j,
                                                Eigen::Ref<const Eigen::VectorXd> x,
                                                Pattern r) const {
  if (deterministic_) throw UnsupportedError("point-mass model has no density");
  const auto c = conditional(Pattern(std::uint64_t{1} << j, dim()), x, r);
  const double v = c.covariance(0, 0);
  const double e = xj - c.mean(0);
  return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * e * e / v;
}

Eigen::VectorXd GaussianJointModel::sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x,
                                                 Pattern r, Rng& rng) const {
  const auto c = conditional(s, x, r);
  if (deterministic_) return c.mean;
  Eigen::MatrixXd cov = c.covariance;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += std::max(ridge_, 1e-12);
    llt.compute(cov);
  }
  Eigen::VectorXd z(cov.rows());
  for (Eigen::Index a = 0; a < z.size(); ++a) z(a) = standard_normal(rng);
  return c.mean + llt.matrixL() * z;
}

// --------------------------------------------------------------------------

namespace {

std::map<std::uint64_t, std::vector<int>> group_by_pattern(const IncompleteDataset& ds) {
  std::map<std::uint64_t, std::vector<int>> groups;
  for (int i = 0; i < ds.rows(); ++i)
    if (!ds.pattern(i).empty()) groups[ds.pattern(i).bits()].push_back(i);
  return groups;
}

}  // namespace

double gaussian_observed_loglik(const IncompleteDataset& ds, const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cov) {
  const int d = ds.cols();
  double ll = 0.0;
  for (const auto& [bits, rows] : group_by_pattern(ds)) {
    const auto idx = Pattern(bits, d).indices();
    const Eigen::MatrixXd c = select(cov, idx, idx);
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const Eigen::VectorXd mu = select(mean, idx);
    for (int i : rows) {
      const Eigen::VectorXd e = select(Eigen::VectorXd(ds.row(i)), idx) - mu;
      const double q = e.dot(llt.solve(e));
      ll += -0.5 * (idx.size() * std::log(2.0 * std::numbers::pi) + logdet + q);
    }
  }
  return ll;
}

EmResult fit_gaussian_em(const IncompleteDataset& train, double ridge, int max_iter, double tol) {
  const int d = train.cols();
  const int n = train.contributing_rows();
  if (n <= d) throw DataError("EM needs more contributing rows than variables");
  if (ridge < 0) throw std::invalid_argument("ridge must be nonnegative");

  Eigen::VectorXd mu = fit_mean(train).means();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    double ss = 0.0;
    int c = 0;
    for (int i = 0; i < train.rows(); ++i)
      if (train.observed(i, j)) {
        ss += std::pow(train.value(i, j) - mu(j), 2);
        ++c;
      }
    sigma(j, j) = c > 0 && ss > 0 ? ss / c : 1.0;
  }

  const auto groups = group_by_pattern(train);
  std::vector<double> trace;
  trace.push_back(gaussian_observed_loglik(train, mu, sigma));
  int it = 0;
  bool converged = false;
  for (; it < max_iter; ++it) {
    Eigen::VectorXd sx = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(d, d);
    for (const auto& [bits, rows] : groups) {
      const Pattern r(bits, d);
      const auto O = r.indices();
      const auto M = r.complement().indices();
      const Regression reg = regress(sigma, M, O, ridge);
      Eigen::MatrixXd extra = Eigen::MatrixXd::Zero(d, d);
      for (std::size_t a = 0; a < M.size(); ++a)
        for (std::size_t b = 0; b < M.size(); ++b) extra(M[a], M[b]) = reg.schur(a, b);
      for (int i : rows) {
        Eigen::VectorXd xhat = train.row(i);
        if (!M.empty()) {
          const Eigen::VectorXd fill =
              select(mu, M) + reg.B * (select(xhat, O) - select(mu, O));
          for (std::size_t a = 0; a < M.size(); ++a) xhat(M[a]) = fill(a);
        }
        sx += xhat;
        sxx += xhat * xhat.transpose();
      }
      sxx += static_cast<double>(rows.size()) * extra;
    }
    mu = sx / n;
    sigma = sxx / n - mu * mu.transpose();
    sigma = 0.5 * (sigma + sigma.transpose());
    sigma.diagonal().array() += ridge;
    if (Eigen::LLT<Eigen::MatrixXd>(sigma).info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "EM covariance lost positive definiteness at iteration " << it + 1
          << "; minimum diagonal " << sigma.diagonal().minCoeff() << ", ridge " << ridge;
      throw NumericalError(msg.str());
    }
    const double ll = gaussian_observed_loglik(train, mu, sigma);
    const double gain = ll - trace.back();
    trace.push_back(ll);
    if (gain < tol * std::max(1.0, std::abs(ll))) {
      converged = true;
      ++it;
      break;
    }
  }
  return EmResult{GaussianJointModel(mu, sigma, ridge), std::move(trace), it, converged};
}

}  // namespace moo
