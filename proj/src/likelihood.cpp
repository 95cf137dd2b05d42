#include "moo/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "moo/parallel.hpp"

namespace moo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd visible(const IncompleteDataset& ds, int i, Pattern r) {
  Eigen::VectorXd x = ds.row(i);
  for (int k = 0; k < ds.cols(); ++k)
    if (!r.test(k)) x(k) = std::numeric_limits<double>::quiet_NaN();
  return x;
}

struct RowResult {
  double value = 0.0;
  long terms = 0;
  long skipped = 0;
  int bad_j = -1;
};

// term(i, j, r) returns the log contribution of masking x_ij down to r.
template <class Term>
MooLogLik accumulate(const IncompleteDataset& ds, int threads,
                     const std::vector<std::vector<std::pair<int, Pattern>>>& plan,
                     const ImputationModel& model, Term&& term) {
  std::vector<RowResult> rows(plan.size());
  parallel_for(plan.size(), threads, [&](std::size_t i) {
    RowResult& out = rows[i];
    for (const auto& [j, r] : plan[i]) {
      if (!model.available(j, r)) {
        ++out.skipped;
        continue;
      }
      const double v = term(static_cast<int>(i), j, r);
      ++out.terms;
      out.value += v;
      if (v == kNegInf && out.bad_j < 0) out.bad_j = j;
    }
  });
  MooLogLik ll;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ll.value += rows[i].value;
    ll.n_terms += rows[i].terms;
    ll.n_skipped += rows[i].skipped;
    if (rows[i].terms > 0) ++ll.n_rows;
    if (rows[i].bad_j >= 0 && !ll.degenerate) {
      ll.degenerate = true;
      ll.offending = "row " + std::to_string(i + 1) + ", variable " + std::to_string(rows[i].bad_j + 1);
    }
  }
  if (ll.degenerate) {
    warn("zero imputation density at " + ll.offending);
    ll.value = kNegInf;
  }
  (void)ds;
  return ll;
}

std::vector<std::vector<std::pair<int, Pattern>>> moo_plan(const IncompleteDataset& ds) {
  std::vector<std::vector<std::pair<int, Pattern>>> plan(ds.rows());
  for (int i = 0; i < ds.rows(); ++i)
    for (int j : ds.pattern(i).indices()) plan[i].emplace_back(j, mask(ds.pattern(i), j));
  return plan;
}

}  // namespace

MooLogLik moo_loglik(const ImputationModel& model, const IncompleteDataset& ds, int threads) {
  if (model.point_mass()) {
    MooLogLik ll;
    ll.value = kNegInf;
    ll.degenerate = true;
    ll.offending = model.name() + " is a point mass";
    ll.n_rows = ds.contributing_rows();
    for (int i = 0; i < ds.rows(); ++i) ll.n_terms += ds.pattern(i).count();
    warn("moo log-likelihood of point-mass model " + model.name() + " is -inf");
    return ll;
  }
  if (!model.has_density())
    throw UnsupportedError(model.name() +
                           " has no marginal density; use the Monte Carlo likelihood instead");
  return accumulate(ds, threads, moo_plan(ds), model, [&](int i, int j, Pattern r) {
    return model.log_density_marginal(ds.value(i, j), j, visible(ds, i, r), r);
  });
}

double silverman_bandwidth(std::span<const double> draws) {
  const double n = static_cast<double>(draws.size());
  if (draws.size() < 2) return 1e-6;
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : draws) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return std::max(1.06 * sd * std::pow(n, -0.2), 1e-6);
}

double kde_log_density(double x, std::span<const double> draws, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("kde bandwidth must be positive");
  double top = kNegInf;
  std::vector<double> z(draws.size());
  for (std::size_t m = 0; m < draws.size(); ++m) {
    const double u = (x - draws[m]) / h;
    z[m] = -0.5 * u * u;
    top = std::max(top, z[m]);
  }
  double s = 0.0;
  for (double v : z) s += std::exp(v - top);
  return top + std::log(s) - std::log(static_cast<double>(draws.size()) * h) -
         0.5 * std::log(2.0 * std::numbers::pi);
}

MooLogLik moo_loglik_mc(const ImputationModel& model, const IncompleteDataset& ds,
                        const KdeOptions& options) {
  if (options.M < 10) throw std::invalid_argument("the Monte Carlo likelihood needs M >= 10");
  if (options.bandwidth && !(*options.bandwidth > 0.0))
    throw std::invalid_argument("fixed kde bandwidth must be positive");
  return accumulate(ds, options.threads, moo_plan(ds), model, [&](int i, int j, Pattern r) {
    std::vector<double> draws(options.M);
    Rng rng = substream(options.seed, Stream::kde, i, j);
    model.sample_marginal_n(j, visible(ds, i, r), r, rng, draws);
    const double h = options.bandwidth ? *options.bandwidth : silverman_bandwidth(draws);
    return kde_log_density(ds.value(i, j), draws, h);
  });
}

MooLogLik moobl_loglik(const ImputationModel& model, const MonotoneDataset& mds) {
  if (!model.has_density()) throw UnsupportedError(model.name() + " has no marginal density");
  const int d = mds.cols();
  std::vector<std::vector<std::pair<int, Pattern>>> plan(mds.rows());
  for (int i = 0; i < mds.rows(); ++i)
    for (int j = 0; j < mds.dropout(i); ++j)
      plan[i].emplace_back(j, Pattern(j == 0 ? 0 : (std::uint64_t{1} << j) - 1, d));
  const auto& ds = mds.data;
  return accumulate(ds, 1, plan, model, [&](int i, int j, Pattern r) {
    return model.log_density_marginal(ds.value(i, j), j, visible(ds, i, r), r);
  });
}

double bic(const MooLogLik& ll, int parameter_count) {
  if (ll.degenerate) return kNegInf;
  const double n = std::max(ll.n_rows, 1);
  return ll.value - 0.5 * parameter_count * std::log(n);
}

double bic(const ImputationModel& model, const IncompleteDataset& ds) {
  return bic(moo_loglik(model, ds), model.parameter_count());
}

// --------------------------------------------------------------------------

void ParametricFamily::row_terms(const Eigen::VectorXd&, std::vector<Eigen::VectorXd>&,
                                 Eigen::MatrixXd&) const {
  throw UnsupportedError("family provides no per-row score and Hessian");
}

std::vector<std::string> ParametricFamily::parameter_names() const {
  std::vector<std::string> names;
  for (int k = 0; k < size(); ++k) names.push_back("theta[" + std::to_string(k) + "]");
  return names;
}

GradientFit fit_moo_mle_gradient(const ParametricFamily& family, const Eigen::VectorXd& default_init,
                                 const GradientAscentConfig& cfg) {
  if (!(cfg.step_size > 0.0) || !(cfg.grad_tol > 0.0))
    throw std::invalid_argument("step size and gradient tolerance must be positive");
  const double n = std::max(family.n_rows(), 1);
  GradientFit fit;
  fit.theta = cfg.init ? *cfg.init : default_init;
  if (fit.theta.size() != family.size()) throw std::invalid_argument("initial value has wrong size");
  if (!family.admissible(fit.theta)) throw NumericalError("initial value is outside the parameter space");
  double obj = family.loglik(fit.theta) / n;
  if (!std::isfinite(obj)) throw NumericalError("log-likelihood is not finite at the initial value");

  auto& diag = fit.diagnostics;
  diag.trace.push_back(obj);
  constexpr double kSlack = 1e-12;
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Eigen::VectorXd g = family.score(fit.theta) / n;
    diag.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (diag.grad_norm < cfg.grad_tol) {
      diag.converged = true;
      break;
    }
    double xi = cfg.step_size;
    bool accepted = false;
    Eigen::VectorXd cand;
    double next = obj;
    for (int halving = 0; halving < 80; ++halving, xi *= 0.5) {
      cand = family.project(fit.theta + xi * g);
      if (!family.admissible(cand)) continue;
      next = family.loglik(cand) / n;
      if (std::isfinite(next) && next >= obj - kSlack) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    fit.theta = cand;
    obj = next;
    diag.trace.push_back(obj);
    diag.iterations = it + 1;
  }
  if (!diag.converged) {
    diag.grad_norm = (family.score(fit.theta) / n).lpNorm<Eigen::Infinity>();
    diag.converged = diag.grad_norm < cfg.grad_tol;
    if (!diag.converged)
      warn("gradient ascent stopped after " + std::to_string(diag.iterations) +
           " iterations with gradient norm " + std::to_string(diag.grad_norm));
  }
  return fit;
}

Eigen::MatrixXd sandwich_covariance(const ParametricFamily& family, const Eigen::VectorXd& theta) {
  std::vector<Eigen::VectorXd> scores;
  Eigen::MatrixXd hsum;
  family.row_terms(theta, scores, hsum);
  const double n = std::max(family.n_rows(), 1);
  const Eigen::MatrixXd H = hsum / n;
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(theta.size(), theta.size());
  for (const auto& g : scores) B += g * g.transpose();
  B /= n;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(H);
  const auto& sv = svd.singularValues();
  const double cond = sv(0) / std::max(sv(sv.size() - 1), std::numeric_limits<double>::min());
  if (!std::isfinite(cond) || cond > 1e14)
    throw NumericalError("mean Hessian is singular (condition number " + std::to_string(cond) + ")");
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(H);
  const Eigen::MatrixXd Hinv = lu.inverse();
  Eigen::MatrixXd S = Hinv * B * Hinv.transpose();
  return 0.5 * (S + S.transpose());
}

Eigen::VectorXd sandwich_standard_errors(const ParametricFamily& family,
                                         const Eigen::VectorXd& theta) {
  const double n = std::max(family.n_rows(), 1);
  return (sandwich_covariance(family, theta).diagonal() / n).cwiseMax(0.0).cwiseSqrt();
}

Eigen::VectorXd numeric_score(const ParametricFamily& family, const Eigen::VectorXd& theta,
                              double h) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd up = theta, down = theta;
    up(k) += h;
    down(k) -= h;
    g(k) = (family.loglik(up) - family.loglik(down)) / (2.0 * h);
  }
  return g;
}

nlohmann::json to_json(const FitDiagnostics& diag) {
  nlohmann::json doc = {{"iterations", diag.iterations},
                        {"grad_norm", diag.grad_norm},
                        {"converged", diag.converged},
                        {"trace", diag.trace}};
  if (diag.sandwich) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < diag.sandwich->rows(); ++i) {
      std::vector<double> row(diag.sandwich->cols());
      for (Eigen::Index j = 0; j < diag.sandwich->cols(); ++j) row[j] = (*diag.sandwich)(i, j);
      rows.push_back(row);
    }
    doc["sandwich"] = rows;
  }
  if (diag.standard_errors.size() > 0)
    doc["standard_errors"] = std::vector<double>(
        diag.standard_errors.data(), diag.standard_errors.data() + diag.standard_errors.size());
  return doc;
}

}  // namespace moo
