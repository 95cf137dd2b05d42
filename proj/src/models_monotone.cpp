#include <cmath>
#include <numbers>

#include "moo/models.hpp"

namespace moo {

namespace {

Pattern prefix(int t, int d) {
  return Pattern(t == 0 ? 0 : (t >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << t) - 1), d);
}

// Number of leading observed variables when r is a prefix pattern, else -1.
int prefix_length(Pattern r) {
  const int t = r.count();
  return r == prefix(t, r.dim()) ? t : -1;
}

}  // namespace

MonotoneSequentialModel::MonotoneSequentialModel(std::string name,
                                                 std::vector<RegressionConditional> stages)
    : name_(std::move(name)), stages_(std::move(stages)) {
  for (std::size_t tau = 0; tau < stages_.size(); ++tau) {
    const auto& s = stages_[tau];
    if (s.n_donors == 0) continue;
    if (s.basis != Basis::linear || s.coef.size() != static_cast<Eigen::Index>(tau + 1))
      throw std::invalid_argument("stage " + std::to_string(tau) + " must be linear in x_<tau");
    if (!(s.variance > 0.0)) throw std::invalid_argument("stage variance must be positive");
  }
}

int MonotoneSequentialModel::parameter_count() const {
  int total = 0;
  for (std::size_t tau = 0; tau < stages_.size(); ++tau)
    if (stages_[tau].n_donors > 0) total += static_cast<int>(tau) + 2;
  return total;
}

bool MonotoneSequentialModel::available(int j, Pattern r) const {
  const int t = prefix_length(r);
  if (t < 0 || j < t || j >= dim()) return false;
  for (int tau = t; tau <= j; ++tau)
    if (stages_[tau].n_donors == 0) return false;
  return true;
}

double MonotoneSequentialModel::sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x,
                                                Pattern r, Rng& rng) const {
  const Eigen::VectorXd v = sample_joint(Pattern(std::uint64_t{1} << j, dim()), x, r, rng);
  return v(0);
}

Eigen::VectorXd MonotoneSequentialModel::sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x,
                                                      Pattern r, Rng& rng) const {
  const auto targets = s.indices();
  if (targets.empty()) return Eigen::VectorXd(0);
  const int last = targets.back();
  if (!available(last, r))
    throw std::out_of_range("monotone model cannot impute " + s.str() + " under " + r.str());
  const int t = r.count();
  Eigen::VectorXd full = x;
  for (int tau = t; tau <= last; ++tau) {
    const auto& st = stages_[tau];
    const double m = st.coef(0) + st.coef.tail(tau).dot(full.head(tau));
    full(tau) = m + std::sqrt(st.variance) * standard_normal(rng);
  }
  Eigen::VectorXd out(targets.size());
  for (std::size_t a = 0; a < targets.size(); ++a) out(a) = full(targets[a]);
  return out;
}

double MonotoneSequentialModel::log_density_marginal(double xj, int j,
                                                     Eigen::Ref<const Eigen::VectorXd> x,
                                                     Pattern r) const {
  if (!available(j, r))
    throw std::out_of_range("monotone model has no density for variable " + std::to_string(j) +
                            " under " + r.str());
  const int t = r.count();
  // Propagate the linear-Gaussian chain over variables t..j.
  const int m = j - t + 1;
  Eigen::VectorXd mean(m);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  for (int a = 0; a < m; ++a) {
    const int tau = t + a;
    const auto& st = stages_[tau];
    const Eigen::VectorXd b = st.coef.tail(tau);
    mean(a) = st.coef(0) + b.head(t).dot(x.head(t));
    const Eigen::VectorXd bl = b.segment(t, a);  // weights on imputed predecessors
    if (a > 0) {
      mean(a) += bl.dot(mean.head(a));
      const Eigen::VectorXd cross = cov.topLeftCorner(a, a) * bl;
      cov.block(a, 0, 1, a) = cross.transpose();
      cov.block(0, a, a, 1) = cross;
      cov(a, a) = bl.dot(cross);
    }
    cov(a, a) += st.variance;
  }
  const double v = cov(m - 1, m - 1);
  const double e = xj - mean(m - 1);
  return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * e * e / v;
}

MonotoneFit fit_monotone(const MonotoneDataset& train, MonotoneRule rule) {
  const int d = train.cols();
  int min_t = d;
  for (int i = 0; i < train.rows(); ++i) min_t = std::min(min_t, train.dropout(i));
  std::vector<RegressionConditional> stages(d);
  std::vector<int> counts(d, 0);
  for (int tau = 0; tau < d; ++tau) {
    std::vector<int> rows;
    for (int i = 0; i < train.rows(); ++i) {
      const int t = train.dropout(i);
      if (rule == MonotoneRule::ncmv ? t == tau + 1 : t >= tau + 1) rows.push_back(i);
    }
    counts[tau] = static_cast<int>(rows.size());
    const int p = tau + 1;
    const int n = counts[tau];
    if (n <= p) {
      if (tau >= min_t)
        throw DataError("monotone stage " + std::to_string(tau + 1) + " has " + std::to_string(n) +
                        " donor rows; needs more than " + std::to_string(p));
      continue;
    }
    const Pattern r = prefix(tau, d);
    Eigen::MatrixXd design(n, p);
    Eigen::VectorXd y(n);
    for (int a = 0; a < n; ++a) {
      design.row(a) = features(Basis::linear, train.data.row(rows[a]), r).transpose();
      y(a) = train.data.value(rows[a], tau);
    }
    const LinearFit fit = fit_ols(design, y);
    if (fit.ridged) warn("rank-deficient design at monotone stage " + std::to_string(tau + 1));
    auto& st = stages[tau];
    st.basis = Basis::linear;
    st.coef = fit.coef;
    st.n_donors = n;
    st.ridged = fit.ridged;
    st.variance = std::max(fit.rss / (n - p), 1e-12);
  }
  return MonotoneFit{
      MonotoneSequentialModel(rule == MonotoneRule::ncmv ? "ncmv" : "acmv", std::move(stages)),
      std::move(counts)};
}

MonotoneSequentialModel monotone_from_gaussian(const GaussianJointModel& g, std::string name) {
  const int d = g.dim();
  std::vector<RegressionConditional> stages(d);
  const Eigen::VectorXd& mu = g.mean();
  const Eigen::MatrixXd& S = g.covariance();
  for (int tau = 0; tau < d; ++tau) {
    auto& st = stages[tau];
    st.basis = Basis::linear;
    st.n_donors = 1;
    st.coef.resize(tau + 1);
    if (tau == 0) {
      st.coef(0) = mu(0);
      st.variance = S(0, 0);
      continue;
    }
    const Eigen::VectorXd beta = S.topLeftCorner(tau, tau).ldlt().solve(S.col(tau).head(tau));
    st.coef(0) = mu(tau) - beta.dot(mu.head(tau));
    st.coef.tail(tau) = beta;
    st.variance = S(tau, tau) - beta.dot(S.col(tau).head(tau));
  }
  return MonotoneSequentialModel(std::move(name), std::move(stages));
}

}  // namespace moo
