#include "moo/separable.hpp"

#include <cmath>
#include <numbers>

namespace moo {

namespace {
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}

SeparableGaussianFamily::SeparableGaussianFamily(const IncompleteDataset& ds,
                                                 std::vector<CondKey> keys, Basis basis,
                                                 const SharingMap& sharing)
    : basis_(basis), d_(ds.cols()), keys_(std::move(keys)) {
  std::sort(keys_.begin(), keys_.end());
  std::map<CondKey, int> index;
  std::map<int, int> label_to_class;
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    index[keys_[k]] = static_cast<int>(k);
    coef_offset_.push_back(coef_total_);
    coef_size_.push_back(basis_size(basis_, keys_[k].r.count()));
    coef_total_ += coef_size_.back();
    const auto it = sharing.find(keys_[k]);
    if (it == sharing.end()) {
      class_of_.push_back(classes_++);
    } else {
      auto [pos, fresh] = label_to_class.emplace(it->second, classes_);
      if (fresh) ++classes_;
      class_of_.push_back(pos->second);
    }
  }
  for (const auto& [key, label] : sharing)
    if (!label_to_class.contains(label))
      throw std::invalid_argument("sharing class " + std::to_string(label) +
                                  " has no fitted member (first listed key " + key.str() + ")");
  size_ = coef_total_ + classes_;
  donors_.assign(keys_.size(), 0);

  for (int i = 0; i < ds.rows(); ++i) {
    const Pattern R = ds.pattern(i);
    bool contributes = false;
    for (int j : R.indices()) {
      const CondKey key{mask(R, j), j};
      const auto it = index.find(key);
      if (it == index.end()) continue;
      terms_.push_back(Term{i, it->second, ds.value(i, j), features(basis_, ds.row(i), key.r)});
      row_of_term_slot_.push_back(n_rows_);
      ++donors_[it->second];
      contributes = true;
    }
    if (contributes) ++n_rows_;
  }
}

bool SeparableGaussianFamily::admissible(const Eigen::VectorXd& theta) const {
  return theta.size() == size_ && (theta.tail(classes_).array() > 0.0).all() && theta.allFinite();
}

double SeparableGaussianFamily::loglik(const Eigen::VectorXd& theta) const {
  double ll = 0.0;
  for (const Term& t : terms_) {
    const double s2 = theta(variance_index(t.key));
    const double e = t.y - theta.segment(coef_offset_[t.key], coef_size_[t.key]).dot(t.f);
    ll += -0.5 * (kLog2Pi + std::log(s2)) - 0.5 * e * e / s2;
  }
  return ll;
}

void SeparableGaussianFamily::term_derivatives(const Eigen::VectorXd& theta, int term,
                                               Eigen::VectorXd& grad, Eigen::MatrixXd* hess) const {
  const Term& t = terms_[term];
  const int off = coef_offset_[t.key];
  const int p = coef_size_[t.key];
  const int v = variance_index(t.key);
  const double s2 = theta(v);
  const double e = t.y - theta.segment(off, p).dot(t.f);
  grad.segment(off, p) += e / s2 * t.f;
  grad(v) += -0.5 / s2 + 0.5 * e * e / (s2 * s2);
  if (!hess) return;
  hess->block(off, off, p, p) -= t.f * t.f.transpose() / s2;
  const Eigen::VectorXd cross = -e / (s2 * s2) * t.f;
  hess->block(off, v, p, 1) += cross;
  hess->block(v, off, 1, p) += cross.transpose();
  (*hess)(v, v) += 0.5 / (s2 * s2) - e * e / (s2 * s2 * s2);
}

Eigen::VectorXd SeparableGaussianFamily::score(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(size_);
  for (std::size_t k = 0; k < terms_.size(); ++k) term_derivatives(theta, static_cast<int>(k), g, nullptr);
  return g;
}

void SeparableGaussianFamily::row_terms(const Eigen::VectorXd& theta,
                                        std::vector<Eigen::VectorXd>& scores,
                                        Eigen::MatrixXd& hessian_sum) const {
  scores.assign(n_rows_, Eigen::VectorXd::Zero(size_));
  hessian_sum = Eigen::MatrixXd::Zero(size_, size_);
  for (std::size_t k = 0; k < terms_.size(); ++k)
    term_derivatives(theta, static_cast<int>(k), scores[row_of_term_slot_[k]], &hessian_sum);
}

std::vector<std::string> SeparableGaussianFamily::parameter_names() const {
  std::vector<std::string> names(size_);
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    const std::string base = keys_[k].r.str() + ":" + std::to_string(keys_[k].j + 1);
    const auto idx = keys_[k].r.indices();
    for (int a = 0; a < coef_size_[k]; ++a) {
      std::string label;
      if (a == 0) label = "intercept";
      else if (a <= static_cast<int>(idx.size())) label = "beta_" + std::to_string(idx[a - 1] + 1);
      else label = "beta2_" + std::to_string(idx[a - 1 - idx.size()] + 1);
      names[coef_offset_[k] + a] = base + ":" + label;
    }
  }
  for (int c = 0; c < classes_; ++c) names[coef_total_ + c] = "sigma2[" + std::to_string(c) + "]";
  for (std::size_t k = 0; k < keys_.size(); ++k)
    if (std::count(class_of_.begin(), class_of_.end(), class_of_[k]) == 1)
      names[variance_index(static_cast<int>(k))] =
          keys_[k].r.str() + ":" + std::to_string(keys_[k].j + 1) + ":sigma2";
  return names;
}

Eigen::VectorXd SeparableGaussianFamily::closed_form() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(size_);
  std::vector<double> rss(classes_, 0.0), count(classes_, 0.0);
  std::vector<std::vector<int>> by_key(keys_.size());
  for (std::size_t t = 0; t < terms_.size(); ++t) by_key[terms_[t].key].push_back(static_cast<int>(t));
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    const auto& ts = by_key[k];
    const int p = coef_size_[k];
    Eigen::MatrixXd X(ts.size(), p);
    Eigen::VectorXd y(ts.size());
    for (std::size_t a = 0; a < ts.size(); ++a) {
      X.row(a) = terms_[ts[a]].f.transpose();
      y(a) = terms_[ts[a]].y;
    }
    const LinearFit fit = fit_ols(X, y);
    if (fit.ridged) warn("rank-deficient design for key " + keys_[k].str() + "; ridge applied");
    theta.segment(coef_offset_[k], p) = fit.coef;
    rss[class_of_[k]] += fit.rss;
    count[class_of_[k]] += static_cast<double>(ts.size());
  }
  for (int c = 0; c < classes_; ++c) theta(coef_total_ + c) = rss[c] / count[c];
  return theta;
}

Eigen::VectorXd SeparableGaussianFamily::default_init() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(size_);
  std::vector<double> sum(keys_.size(), 0.0), sq(keys_.size(), 0.0);
  for (const Term& t : terms_) {
    sum[t.key] += t.y;
    sq[t.key] += t.y * t.y;
  }
  std::vector<double> var_sum(classes_, 0.0), var_n(classes_, 0.0);
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    const double n = donors_[k];
    const double mean = sum[k] / n;
    theta(coef_offset_[k]) = mean;
    var_sum[class_of_[k]] += sq[k] - n * mean * mean;
    var_n[class_of_[k]] += n;
  }
  for (int c = 0; c < classes_; ++c)
    theta(coef_total_ + c) = std::max(var_sum[c] / var_n[c], 1e-8);
  return theta;
}

Eigen::VectorXd SeparableGaussianFamily::unit_init() const {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(size_);
  theta.tail(classes_).setOnes();
  return theta;
}

PatternRegressionModel SeparableGaussianFamily::to_model(const Eigen::VectorXd& theta,
                                                         const std::string& name) const {
  std::map<CondKey, RegressionConditional> conds;
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    RegressionConditional c;
    c.basis = basis_;
    c.coef = theta.segment(coef_offset_[k], coef_size_[k]);
    c.variance = std::max(theta(variance_index(static_cast<int>(k))), 1e-12);
    c.n_donors = donors_[k];
    conds.emplace(keys_[k], std::move(c));
  }
  return PatternRegressionModel(name, d_, std::move(conds),
                                static_cast<int>(keys_.size()) - classes_);
}

std::vector<CondKey> adequate_keys(const IncompleteDataset& ds, Basis basis, int min_rows) {
  std::map<std::uint64_t, int> counts;
  for (const Pattern& p : ds.patterns()) ++counts[p.bits()];
  std::vector<CondKey> keys;
  for (const CondKey& key : moo_keys(ds)) {
    const int need = std::max(min_rows, basis_size(basis, key.r.count()) + 1);
    if (counts[unmask(key.r, key.j).bits()] >= need) keys.push_back(key);
  }
  return keys;
}

SeparableFit fit_separable_gaussian_closed_form(const IncompleteDataset& ds,
                                                const SeparableOptions& options) {
  SeparableGaussianFamily family(ds, adequate_keys(ds, options.basis, options.min_rows),
                                 options.basis, options.sharing);
  if (family.keys().empty()) throw DataError("no pattern has enough donor rows for a separable fit");
  Eigen::VectorXd theta = family.closed_form();
  std::vector<std::string> degenerate;
  for (std::size_t k = 0; k < family.keys().size(); ++k)
    if (!(theta(family.variance_index(static_cast<int>(k))) > 1e-14))
      degenerate.push_back(family.keys()[k].str());
  if (!degenerate.empty())
    warn("separable fit: " + std::to_string(degenerate.size()) + " key(s) with zero residual variance");
  FitDiagnostics diag;
  diag.converged = true;
  if (degenerate.empty()) {
    diag.trace.push_back(family.loglik(theta) / std::max(family.n_rows(), 1));
    diag.grad_norm = (family.score(theta) / std::max(family.n_rows(), 1)).lpNorm<Eigen::Infinity>();
  }
  PatternRegressionModel model = family.to_model(theta);
  return SeparableFit{std::move(family), std::move(theta), std::move(model), std::move(diag),
                      std::move(degenerate)};
}

SeparableFit fit_shared_variance(const IncompleteDataset& ds, const SharingMap& sharing,
                                 SeparableOptions options) {
  options.sharing = sharing;
  return fit_separable_gaussian_closed_form(ds, options);
}

}  // namespace moo
