#include "moo/mao.hpp"

#include <cmath>
#include <numbers>

#include "moo/separable.hpp"

namespace moo {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double normal_logpdf(double x, double mean, double var) {
  const double e = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * e * e / var;
}

bool spd(const Eigen::Matrix2d& s) {
  const Eigen::Matrix2d sym = 0.5 * (s + s.transpose());
  return sym.allFinite() && Eigen::LLT<Eigen::Matrix2d>(sym).info() == Eigen::Success;
}

}  // namespace

MaoBivariateValue mao_loglik_bivariate(const IncompleteDataset& ds, const MaoBivariateParams& p) {
  if (ds.cols() != 2) throw std::invalid_argument("MAO bivariate likelihood needs d = 2");
  if (!spd(p.sigma00)) throw NumericalError("sigma00 is not positive definite");
  const Eigen::Matrix2d& S = p.sigma00;
  const Eigen::Matrix2d Sinv = S.inverse();
  const double logdet = std::log(std::abs(S.determinant()));
  const Pattern p01 = Pattern::parse("01");
  const Pattern p10 = Pattern::parse("10");

  MaoBivariateValue out;
  double ss10 = 0.0, ss01 = 0.0;
  Eigen::Matrix2d scatter11 = Eigen::Matrix2d::Zero();
  Eigen::Vector2d resid11 = Eigen::Vector2d::Zero();
  for (int i = 0; i < ds.rows(); ++i) {
    const Pattern R = ds.pattern(i);
    if (R.full()) {
      ++out.n11;
      const Eigen::Vector2d x(ds.value(i, 0), ds.value(i, 1));
      if (p.q01) out.value += p.q01->log_density(x(0), x, p01);
      if (p.q10) out.value += p.q10->log_density(x(1), x, p10);
      const Eigen::Vector2d e = x - p.mu00;
      out.value += -kLog2Pi - 0.5 * logdet - 0.5 * e.dot(Sinv * e);
      resid11 += e;
      scatter11 += e * e.transpose();
    } else if (R == p10) {
      ++out.n10;
      const double e = ds.value(i, 0) - p.mu00(0);
      out.value += normal_logpdf(ds.value(i, 0), p.mu00(0), S(0, 0));
      out.grad_mu(0) += e / S(0, 0);
      ss10 += e * e;
    } else if (R == p01) {
      ++out.n01;
      const double e = ds.value(i, 1) - p.mu00(1);
      out.value += normal_logpdf(ds.value(i, 1), p.mu00(1), S(1, 1));
      out.grad_mu(1) += e / S(1, 1);
      ss01 += e * e;
    }
  }
  out.grad_mu += Sinv * resid11;
  out.grad_sigma(0, 0) = -0.5 * out.n10 / S(0, 0) + 0.5 * ss10 / (S(0, 0) * S(0, 0));
  out.grad_sigma(1, 1) = -0.5 * out.n01 / S(1, 1) + 0.5 * ss01 / (S(1, 1) * S(1, 1));
  out.grad_sigma += -0.5 * out.n11 * Sinv + 0.5 * Sinv * scatter11 * Sinv;
  return out;
}

// --------------------------------------------------------------------------

MaoBivariateFamily::MaoBivariateFamily(const IncompleteDataset& ds) : ds_(ds) {
  if (ds.cols() != 2) throw std::invalid_argument("MAO bivariate family needs d = 2");
  for (int i = 0; i < ds.rows(); ++i)
    if (!ds.pattern(i).empty()) ++n_rows_;
}

MaoBivariateParams MaoBivariateFamily::unpack(const Eigen::VectorXd& theta) {
  MaoBivariateParams p;
  p.mu00 = theta.head<2>();
  p.sigma00 << theta(2), theta(3), theta(3), theta(4);
  return p;
}

bool MaoBivariateFamily::admissible(const Eigen::VectorXd& theta) const {
  return theta.size() == 5 && theta.allFinite() && spd(unpack(theta).sigma00);
}

Eigen::VectorXd MaoBivariateFamily::project(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd out = theta;
  const Eigen::Matrix2d s = unpack(theta).sigma00;
  if (!s.allFinite()) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(s);
  Eigen::Vector2d lambda = eig.eigenvalues().cwiseMax(1e-8);
  const Eigen::Matrix2d fixed = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  out(2) = fixed(0, 0);
  out(3) = 0.5 * (fixed(0, 1) + fixed(1, 0));
  out(4) = fixed(1, 1);
  return out;
}

double MaoBivariateFamily::loglik(const Eigen::VectorXd& theta) const {
  return mao_loglik_bivariate(ds_, unpack(theta)).value;
}

Eigen::VectorXd MaoBivariateFamily::score(const Eigen::VectorXd& theta) const {
  const auto v = mao_loglik_bivariate(ds_, unpack(theta));
  Eigen::VectorXd g(5);
  g << v.grad_mu(0), v.grad_mu(1), v.grad_sigma(0, 0), v.grad_sigma(0, 1) + v.grad_sigma(1, 0),
      v.grad_sigma(1, 1);
  return g;
}

std::vector<std::string> MaoBivariateFamily::parameter_names() const {
  return {"mu00_1", "mu00_2", "sigma00_11", "sigma00_12", "sigma00_22"};
}

Eigen::VectorXd MaoBivariateFamily::default_init() const {
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sq = Eigen::Vector2d::Zero();
  Eigen::Vector2d n = Eigen::Vector2d::Zero();
  for (int i = 0; i < ds_.rows(); ++i)
    for (int j = 0; j < 2; ++j)
      if (ds_.observed(i, j)) {
        sum(j) += ds_.value(i, j);
        sq(j) += ds_.value(i, j) * ds_.value(i, j);
        n(j) += 1.0;
      }
  Eigen::VectorXd theta(5);
  for (int j = 0; j < 2; ++j) {
    const double m = n(j) > 0 ? sum(j) / n(j) : 0.0;
    theta(j) = m;
    const double var = n(j) > 1 ? sq(j) / n(j) - m * m : 1.0;
    theta(j == 0 ? 2 : 4) = std::max(var, 1e-4);
  }
  theta(3) = 0.0;
  return theta;
}

MaoBivariateFit fit_mao_bivariate(const IncompleteDataset& ds, const GradientAscentConfig& cfg) {
  MaoBivariateFamily family(ds);
  auto grad = fit_moo_mle_gradient(family, family.default_init(), cfg);
  MaoBivariateFit out;
  out.params = MaoBivariateFamily::unpack(grad.theta);
  out.diagnostics = std::move(grad.diagnostics);
  const auto sep = fit_separable_gaussian_closed_form(ds);
  const Pattern p01 = Pattern::parse("01");
  const Pattern p10 = Pattern::parse("10");
  for (const auto& [key, c] : sep.model.conditionals()) {
    if (key.r == p01 && key.j == 0) out.params.q01 = c;
    if (key.r == p10 && key.j == 1) out.params.q10 = c;
  }
  return out;
}

}  // namespace moo
