#include "moo/regression.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <stdexcept>

namespace moo {

namespace {
std::atomic<bool> g_warnings{true};
std::mutex g_warn_mutex;
}  // namespace

void warn(std::string_view message) {
  if (!g_warnings.load()) return;
  std::lock_guard lock(g_warn_mutex);
  std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

std::string to_string(Basis b) {
  switch (b) {
    case Basis::intercept: return "intercept";
    case Basis::linear: return "linear";
    case Basis::quadratic: return "quadratic";
  }
  return "?";
}

Basis basis_from_string(std::string_view s) {
  if (s == "intercept") return Basis::intercept;
  if (s == "linear") return Basis::linear;
  if (s == "quadratic") return Basis::quadratic;
  throw std::invalid_argument("unknown basis '" + std::string(s) + "'");
}

int basis_size(Basis b, int n_inputs) {
  switch (b) {
    case Basis::intercept: return 1;
    case Basis::linear: return 1 + n_inputs;
    case Basis::quadratic: return 1 + 2 * n_inputs;
  }
  return 1;
}

Eigen::VectorXd features(Basis b, Eigen::Ref<const Eigen::VectorXd> x, Pattern r) {
  const auto idx = r.indices();
  const int k = static_cast<int>(idx.size());
  Eigen::VectorXd f(basis_size(b, k));
  f(0) = 1.0;
  if (b == Basis::intercept) return f;
  for (int a = 0; a < k; ++a) f(1 + a) = x(idx[a]);
  if (b == Basis::quadratic) {
    for (int a = 0; a < k; ++a) f(1 + k + a) = x(idx[a]) * x(idx[a]);
  }
  return f;
}

LinearFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  LinearFit out;
  out.n = static_cast<int>(design.rows());
  const Eigen::Index p = design.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() == p) {
    out.coef = qr.solve(y);
  } else {
    const Eigen::MatrixXd gram = design.transpose() * design;
    const double lambda = 1e-8 * std::max(1.0, gram.diagonal().maxCoeff());
    out.coef = (gram + lambda * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(design.transpose() * y);
    out.ridged = true;
  }
  out.rss = (y - design * out.coef).squaredNorm();
  return out;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, int max_iter,
                         double tol) {
  const Eigen::Index p = design.cols();
  LogisticFit out;
  out.coef = Eigen::VectorXd::Zero(p);
  auto loglik = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = design * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      // log(1 + e^eta) computed stably
      const double soft = eta(i) > 0 ? eta(i) + std::log1p(std::exp(-eta(i)))
                                     : std::log1p(std::exp(eta(i)));
      ll += y(i) * eta(i) - soft;
    }
    return ll;
  };
  double current = loglik(out.coef);
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    const Eigen::VectorXd eta = design * out.coef;
    const Eigen::VectorXd prob = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Eigen::VectorXd w = (prob.array() * (1.0 - prob.array())).max(1e-12).matrix();
    const Eigen::VectorXd grad = design.transpose() * (y - prob);
    const Eigen::MatrixXd info =
        design.transpose() * w.asDiagonal() * design + 1e-10 * Eigen::MatrixXd::Identity(p, p);
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = out.coef + step;
    double value = loglik(next);
    while (value < current - 1e-12 && scale > 1e-8) {
      scale *= 0.5;
      next = out.coef + scale * step;
      value = loglik(next);
    }
    out.coef = next;
    const double gain = value - current;
    current = value;
    if (grad.lpNorm<Eigen::Infinity>() < tol || std::abs(gain) < tol) {
      out.converged = true;
      break;
    }
  }
  if ((design * out.coef).cwiseAbs().maxCoeff() > 30.0) out.separated = true;
  return out;
}

}  // namespace moo
