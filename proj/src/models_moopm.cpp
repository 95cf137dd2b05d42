#include <cmath>
#include <numbers>
#include <algorithm>
#include <set>

#include "moo/models.hpp"

namespace moo {

namespace {

double normal_logpdf(double x, double mean, double var) {
  const double e = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * e * e / var;
}

}  // namespace

double RegressionConditional::mean(Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const {
  return coef.dot(features(basis, x, r));
}

double RegressionConditional::log_density(double xj, Eigen::Ref<const Eigen::VectorXd> x,
                                          Pattern r) const {
  return normal_logpdf(xj, mean(x, r), variance);
}

// --------------------------------------------------------------------------

PatternRegressionModel::PatternRegressionModel(std::string name, int d,
                                               std::map<CondKey, RegressionConditional> conds,
                                               int shared_variance_reduction)
    : name_(std::move(name)), d_(d), conds_(std::move(conds)),
      shared_reduction_(shared_variance_reduction) {
  for (const auto& [key, c] : conds_) {
    if (key.r.dim() != d_ || key.r.test(key.j))
      throw std::invalid_argument("malformed conditional key " + key.str());
    if (!(c.variance > 0.0)) throw std::invalid_argument("nonpositive variance at " + key.str());
    if (c.coef.size() != basis_size(c.basis, key.r.count()))
      throw std::invalid_argument("coefficient length mismatch at " + key.str());
  }
}

int PatternRegressionModel::parameter_count() const {
  int total = 0;
  for (const auto& [key, c] : conds_) total += static_cast<int>(c.coef.size()) + 1;
  return total - shared_reduction_;
}

bool PatternRegressionModel::available(int j, Pattern r) const {
  return conds_.contains(CondKey{r, j});
}

const RegressionConditional& PatternRegressionModel::conditional(int j, Pattern r) const {
  const auto it = conds_.find(CondKey{r, j});
  if (it == conds_.end())
    throw std::out_of_range("conditional " + CondKey{r, j}.str() + " is unavailable");
  return it->second;
}

double PatternRegressionModel::sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x,
                                               Pattern r, Rng& rng) const {
  const auto& c = conditional(j, r);
  return c.mean(x, r) + std::sqrt(c.variance) * standard_normal(rng);
}

void PatternRegressionModel::sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x,
                                               Pattern r, Rng& rng, std::span<double> out) const {
  const auto& c = conditional(j, r);
  const double m = c.mean(x, r);
  const double sd = std::sqrt(c.variance);
  for (double& v : out) v = m + sd * standard_normal(rng);
}

double PatternRegressionModel::log_density_marginal(double xj, int j,
                                                    Eigen::Ref<const Eigen::VectorXd> x,
                                                    Pattern r) const {
  return conditional(j, r).log_density(xj, x, r);
}

Eigen::VectorXd PatternRegressionModel::sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x,
                                                     Pattern r, Rng& rng) const {
  const auto idx = s.indices();
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) out(a) = sample_marginal(idx[a], x, r, rng);
  return out;
}

// --------------------------------------------------------------------------

std::vector<CondKey> moo_keys(const IncompleteDataset& ds) {
  std::set<std::uint64_t> seen;
  for (const Pattern& p : ds.patterns())
    if (!p.empty()) seen.insert(p.bits());
  std::vector<CondKey> keys;
  for (std::uint64_t bits : seen) {
    const Pattern s(bits, ds.cols());
    for (int j : s.indices()) keys.push_back(CondKey{mask(s, j), j});
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::optional<RegressionConditional> fit_key(const IncompleteDataset& ds, CondKey key, Basis basis,
                                              VarianceDenominator denominator, int min_rows) {
  const Pattern donor = unmask(key.r, key.j);
  std::vector<int> rows;
  for (int i = 0; i < ds.rows(); ++i)
    if (ds.pattern(i) == donor) rows.push_back(i);
  const int p = basis_size(basis, key.r.count());
  const int n = static_cast<int>(rows.size());
  if (n < min_rows || n <= p) return std::nullopt;

  Eigen::MatrixXd design(n, p);
  Eigen::VectorXd y(n);
  for (int a = 0; a < n; ++a) {
    design.row(a) = features(basis, ds.row(rows[a]), key.r).transpose();
    y(a) = ds.value(rows[a], key.j);
  }
  const LinearFit fit = fit_ols(design, y);
  if (fit.ridged) warn("rank-deficient design for conditional " + key.str() + "; ridge applied");

  RegressionConditional c;
  c.basis = basis;
  c.coef = fit.coef;
  c.n_donors = n;
  c.ridged = fit.ridged;
  const double denom = denominator == VarianceDenominator::unbiased ? n - p : n;
  c.variance = std::max(fit.rss / denom, 1e-12);
  return c;
}

PatternRegressionModel fit_moopm_empirical(const IncompleteDataset& train,
                                           const MoopmOptions& options) {
  std::map<CondKey, RegressionConditional> conds;
  for (const CondKey& key : moo_keys(train)) {
    auto c = fit_key(train, key, options.basis, options.denominator, options.min_rows);
    if (c) conds.emplace(key, std::move(*c));
  }
  return PatternRegressionModel("moopm", train.cols(), std::move(conds));
}

// --------------------------------------------------------------------------

CcmvModel::CcmvModel(Eigen::VectorXd mean, Eigen::MatrixXd scatter, int n_complete)
    : mean_(std::move(mean)), scatter_(std::move(scatter)), n_(n_complete) {
  if (n_ < mean_.size() + 2)
    throw DataError("ccmv needs at least d+2 complete rows, found " + std::to_string(n_));
}

CcmvModel fit_ccmv(const IncompleteDataset& train) {
  const int d = train.cols();
  std::vector<int> rows;
  for (int i = 0; i < train.rows(); ++i)
    if (train.pattern(i).full()) rows.push_back(i);
  if (rows.size() < static_cast<std::size_t>(d + 2))
    throw DataError("ccmv needs at least d+2 complete rows, found " + std::to_string(rows.size()));
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (int i : rows) mean += train.row(i);
  mean /= static_cast<double>(rows.size());
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
  for (int i : rows) {
    const Eigen::VectorXd e = train.row(i) - mean;
    scatter += e * e.transpose();
  }
  return CcmvModel(mean, scatter, static_cast<int>(rows.size()));
}

int CcmvModel::parameter_count() const {
  const int d = dim();
  long total = 0;
  for (int k = 0; k < d; ++k) total += static_cast<long>(binomial(d, k)) * (d - k) * (k + 2);
  return static_cast<int>(total);
}

RegressionConditional CcmvModel::conditional(int j, Pattern r) const {
  if (r.test(j)) throw std::invalid_argument("target is in the conditioning set");
  const auto R = r.indices();
  const int k = static_cast<int>(R.size());
  Eigen::MatrixXd srr(k, k);
  Eigen::VectorXd srj(k);
  Eigen::VectorXd mr(k);
  for (int a = 0; a < k; ++a) {
    srj(a) = scatter_(R[a], j);
    mr(a) = mean_(R[a]);
    for (int b = 0; b < k; ++b) srr(a, b) = scatter_(R[a], R[b]);
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  if (k > 0) beta = srr.ldlt().solve(srj);
  RegressionConditional c;
  c.basis = Basis::linear;
  c.coef.resize(k + 1);
  c.coef(0) = mean_(j) - beta.dot(mr);
  c.coef.tail(k) = beta;
  c.n_donors = n_;
  c.variance = std::max((scatter_(j, j) - srj.dot(beta)) / (n_ - k - 1), 1e-12);
  return c;
}

double CcmvModel::sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                  Rng& rng) const {
  const auto c = conditional(j, r);
  return c.mean(x, r) + std::sqrt(c.variance) * standard_normal(rng);
}

void CcmvModel::sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r, Rng& rng,
                                  std::span<double> out) const {
  const auto c = conditional(j, r);
  const double m = c.mean(x, r);
  const double sd = std::sqrt(c.variance);
  for (double& v : out) v = m + sd * standard_normal(rng);
}

double CcmvModel::log_density_marginal(double xj, int j, Eigen::Ref<const Eigen::VectorXd> x,
                                       Pattern r) const {
  return conditional(j, r).log_density(xj, x, r);
}

Eigen::VectorXd CcmvModel::sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                        Rng& rng) const {
  const auto idx = s.indices();
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) out(a) = sample_marginal(idx[a], x, r, rng);
  return out;
}

}  // namespace moo
