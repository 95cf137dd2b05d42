// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--cli PATH] [--config PATH] [--workdir DIR] [ID...]
//
// With no IDs every criterion runs. Exit status is nonzero if any selected
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "moo/criteria.hpp"
#include "moo/dataset.hpp"
#include "moo/estimators.hpp"
#include "moo/harness.hpp"
#include "moo/likelihood.hpp"
#include "moo/mao.hpp"
#include "moo/models.hpp"
#include "moo/patterns.hpp"
#include "moo/rng.hpp"
#include "moo/separable.hpp"
#include "moo/synthetic.hpp"

namespace fs = std::filesystem;
using namespace moo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<Outcome()> run;
};

struct Options {
  std::string cli;
  std::string config;
  std::string workdir = "acceptance_work";
};

Options g_opts;

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::set<std::string> strings(const PatternSet& ps) {
  std::set<std::string> out;
  for (const Pattern& p : ps) out.insert(p.str());
  return out;
}

Eigen::MatrixXd equicorrelation(int d, double rho) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(d, d, rho);
  s.diagonal().setOnes();
  return s;
}

// Random SPD matrix with unit-scale spectrum.
Eigen::MatrixXd random_covariance(int d, std::uint64_t seed) {
  Rng rng = substream(seed, Stream::synthetic, 1u << 20);
  Eigen::MatrixXd A(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) A(a, b) = standard_normal(rng);
  Eigen::MatrixXd S = A * A.transpose() / d + 0.5 * Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd sd = S.diagonal().cwiseSqrt();
  return sd.cwiseInverse().asDiagonal() * S * sd.cwiseInverse().asDiagonal();
}

IncompleteDataset mcar_gaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, int n, double p,
                                std::uint64_t seed) {
  const RowMatrix x = gaussian_joint(mu, sigma, n, seed);
  return ampute_mcar(x, p, seed + 1000).incomplete;
}

// --------------------------------------------------------------------------

Outcome c01_patterns() {
  bool ok = true;
  std::ostringstream why;
  const auto j2 = strings(maskable_subsets(Pattern::parse("00111"), 2));
  const std::set<std::string> j2_expected{"00110", "00101", "00011", "00100", "00010", "00001"};
  if (j2 != j2_expected) ok = false, why << "J_2(00111) mismatch; ";
  auto j3_expected = j2_expected;
  j3_expected.insert("00111");
  if (strings(maskable_subsets(Pattern::parse("00111"), 3)) != j3_expected) ok = false, why << "J_3(00111) mismatch; ";
  const std::set<std::string> mao_expected{"100", "010", "001", "110", "101", "011", "111"};
  if (strings(maskable_subsets(Pattern::parse("111"), 3)) != mao_expected) ok = false, why << "J_3(111) mismatch; ";
  const std::set<std::string> u_expected{"110", "111"};
  if (strings(donor_patterns(Pattern::parse("010"), 0, 2)) != u_expected) ok = false, why << "U_2(010,1) mismatch; ";

  long checked = 0;
  for (int d = 1; d <= 6; ++d) {
    const std::uint64_t top = 1ULL << d;
    for (std::uint64_t R = 0; R < top; ++R) {
      const Pattern pr(R, d);
      for (int K = 1; K <= d; ++K) {
        std::set<std::uint64_t> brute;
        for (std::uint64_t s = 1; s < top; ++s)
          if ((s & ~R) == 0 && std::popcount(s) <= K) brute.insert(s);
        std::set<std::uint64_t> got;
        for (const Pattern& s : maskable_subsets(pr, K)) got.insert(s.bits());
        std::uint64_t card = 0;
        for (int k = 1; k <= std::min(K, pr.count()); ++k) card += binomial(pr.count(), k);
        if (got != brute || got.size() != card) ok = false;
        ++checked;
        for (int j = 0; j < d; ++j) {
          if (pr.test(j)) continue;
          const std::uint64_t base = R | (1ULL << j);
          std::set<std::uint64_t> ubrute;
          for (std::uint64_t s = 0; s < top; ++s)
            if ((base & ~s) == 0 && std::popcount(s) - pr.count() <= K) ubrute.insert(s);
          std::set<std::uint64_t> ugot;
          for (const Pattern& s : donor_patterns(pr, j, K)) ugot.insert(s.bits());
          std::uint64_t ucard = 0;
          const int free = d - pr.count() - 1;
          for (int k = 0; k <= std::min(K - 1, free); ++k) ucard += binomial(free, k);
          if (ugot != ubrute || ugot.size() != ucard) ok = false;
          ++checked;
        }
      }
    }
  }
  why << checked << " exhaustive set comparisons for d<=6";
  return {ok, why.str()};
}

Outcome c02_mko_count() {
  bool ok = true;
  long rows = 0;
  for (int d = 1; d <= 8; ++d) {
    const int n = 40;
    RowMatrix v(n, d);
    std::vector<Pattern> pats(n);
    Rng rng = substream(2, Stream::synthetic, static_cast<std::uint64_t>(d));
    for (int i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      while (bits == 0) bits = uniform_index(rng, (1ULL << d));
      pats[i] = Pattern(bits, d);
      for (int j = 0; j < d; ++j)
        v(i, j) = pats[i].test(j) ? standard_normal(rng) : std::numeric_limits<double>::quiet_NaN();
    }
    const IncompleteDataset ds(v, pats);
    const MeanModel mean(Eigen::VectorXd::Zero(d));
    CriterionConfig cfg;
    cfg.M = 1;
    for (int K = 1; K <= d; ++K) {
      const auto rep = mko_risk(mean, ds, K, LossFn{}, cfg);
      for (int i = 0; i < n; ++i) {
        const int L = pats[i].count();
        std::uint64_t expected = 0;
        for (int k = 1; k <= std::min(K, L); ++k) expected += binomial(L, k) * k;
        if (static_cast<std::uint64_t>(rep.row_evaluations[i]) != expected ||
            mko_loss_count(L, K) != expected)
          ok = false;
        ++rows;
      }
    }
  }
  if (mko_loss_count(3, 2) != 9) ok = false;
  return {ok, std::to_string(rows) + " row/K combinations, count(L=3,K=2)=" + std::to_string(mko_loss_count(3, 2))};
}

Outcome c03_decomposition() {
  const int d = 5;
  const IncompleteDataset ds =
      standardize(mcar_gaussian(Eigen::VectorXd::Zero(d), equicorrelation(d, 0.5), 1000, 0.3, 31));
  const ModelPtr model = fit_model(parse_model_spec("gaussian_em"), ds);
  CriterionConfig cfg;
  cfg.M = 20;
  cfg.seed = 5;
  const auto total = moo_risk(*model, ds, LossFn{}, cfg);
  double sum_sep = 0.0, sum_internal = 0.0;
  for (int j = 0; j < d; ++j) {
    sum_sep += moo_risk_variable(*model, ds, j, LossFn{}, cfg).total_risk;
    sum_internal += total.per_variable[j];
  }
  const double gap = std::max(std::abs(sum_sep - total.total_risk), std::abs(sum_internal - total.total_risk));
  return {gap <= 1e-12, "total=" + fmt(total.total_risk, "%.12g") + " sum_j=" + fmt(sum_sep, "%.12g") +
                            " gap=" + fmt(gap) + " (<=1e-12)"};
}

Outcome c04_closed_vs_gradient() {
  double worst = 0.0;
  int converged = 0;
  for (int inst = 0; inst < 10; ++inst) {
    const std::uint64_t seed = 400 + inst;
    const int d = 3;
    const IncompleteDataset ds =
        mcar_gaussian(Eigen::VectorXd::Zero(d), random_covariance(d, seed), 1500, 0.3, seed);
    SeparableGaussianFamily fam(ds, adequate_keys(ds, Basis::linear, 20), Basis::linear, {});
    const Eigen::VectorXd cf = fam.closed_form();
    const GradientFit g = fit_moo_mle_gradient(fam, fam.default_init());
    if (g.diagnostics.converged) ++converged;
    worst = std::max(worst, (g.theta - cf).lpNorm<Eigen::Infinity>());
  }
  return {worst <= 1e-6 && converged == 10,
          "max sup-norm gap=" + fmt(worst) + " (<=1e-6), converged " + std::to_string(converged) + "/10"};
}

Outcome c05_scores() {
  double worst_sep = 0.0, worst_mao = 0.0;
  const int d = 3;
  const IncompleteDataset ds = mcar_gaussian(Eigen::VectorXd::Zero(d), random_covariance(d, 51), 600, 0.3, 51);
  SeparableGaussianFamily fam(ds, adequate_keys(ds, Basis::quadratic, 20), Basis::quadratic, {});
  const Eigen::VectorXd base = fam.closed_form();
  Rng rng = substream(52, Stream::synthetic, 0);
  const auto rel = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
  };
  for (int p = 0; p < 10; ++p) {
    Eigen::VectorXd theta = base;
    for (int k = 0; k < theta.size(); ++k) theta(k) += 0.2 * standard_normal(rng);
    for (int c = 0; c < fam.classes(); ++c) {
      const int idx = fam.size() - fam.classes() + c;
      theta(idx) = std::max(0.3, std::abs(base(idx)) * (1.0 + 0.3 * uniform01(rng)));
    }
    worst_sep = std::max(worst_sep, rel(fam.score(theta), numeric_score(fam, theta)));
  }

  const IncompleteDataset bi = mcar_gaussian(Eigen::Vector2d(0.3, -0.2), equicorrelation(2, 0.4), 600, 0.3, 53);
  const auto fit = fit_mao_bivariate(bi);
  for (int p = 0; p < 10; ++p) {
    MaoBivariateParams q = fit.params;
    q.mu00 = Eigen::Vector2d(0.5 * standard_normal(rng), 0.5 * standard_normal(rng));
    const double s1 = 0.6 + uniform01(rng), s2 = 0.6 + uniform01(rng), c = 0.8 * (uniform01(rng) - 0.5);
    q.sigma00 << s1, c * std::sqrt(s1 * s2), c * std::sqrt(s1 * s2), s2;
    const auto v = mao_loglik_bivariate(bi, q);
    const double h = 1e-5;
    Eigen::VectorXd analytic(6), numeric(6);
    analytic << v.grad_mu(0), v.grad_mu(1), v.grad_sigma(0, 0), v.grad_sigma(0, 1), v.grad_sigma(1, 0),
        v.grad_sigma(1, 1);
    for (int k = 0; k < 6; ++k) {
      MaoBivariateParams up = q, dn = q;
      if (k < 2) {
        up.mu00(k) += h;
        dn.mu00(k) -= h;
      } else {
        const int a = (k - 2) / 2, b = (k - 2) % 2;
        up.sigma00(a, b) += h;
        dn.sigma00(a, b) -= h;
      }
      numeric(k) = (mao_loglik_bivariate(bi, up).value - mao_loglik_bivariate(bi, dn).value) / (2 * h);
    }
    worst_mao = std::max(worst_mao, rel(analytic, numeric));
  }
  return {worst_sep <= 1e-5 && worst_mao <= 1e-5,
          "separable rel err=" + fmt(worst_sep) + ", MAO bivariate rel err=" + fmt(worst_mao) + " (<=1e-5)"};
}

Outcome c06_moort() {
  double worst_true = 0.0, best_mean = 1.0;
  for (int s = 0; s < 5; ++s) {
    const std::uint64_t seed = 600 + s;
    const IncompleteDataset ds =
        mcar_gaussian(Eigen::VectorXd::Zero(3), equicorrelation(3, 0.6), 2000, 0.3, seed);
    const PatternRegressionModel moopm = fit_moopm_empirical(ds);
    const MeanModel mean = fit_mean(ds);
    CriterionConfig cfg;
    cfg.M = 500;
    cfg.seed = seed;
    worst_true = std::max(worst_true, moort(moopm, ds, cfg).total_risk);
    best_mean = std::min(best_mean, moort(mean, ds, cfg).total_risk);
  }
  return {worst_true <= 0.05 && best_mean >= 0.3,
          "MOOPM max KS=" + fmt(worst_true) + " (<=0.05), mean min KS=" + fmt(best_mean) + " (>=0.3), 5 seeds"};
}

Outcome c07_mooen() {
  const Eigen::MatrixXd sigma = equicorrelation(3, 0.6);
  const IncompleteDataset ds = mcar_gaussian(Eigen::VectorXd::Zero(3), sigma, 2000, 0.3, 700);
  const GaussianJointModel truth(Eigen::VectorXd::Zero(3), sigma);
  const GaussianJointModel det = truth.as_deterministic();
  CriterionConfig cfg;
  cfg.M = 200;
  cfg.seed = 7;
  const auto rt = mooen(truth, ds, cfg);
  const auto rd = mooen(det, ds, cfg);
  const bool part1 = std::abs(rt.total_risk) <= 0.02;
  const bool part2 = rd.internal_term == 0.0 && rd.total_risk > rt.total_risk;
  return {part1 && part2, "true |R_EN|=" + fmt(std::abs(rt.total_risk)) + " (<=0.02: " + (part1 ? "ok" : "FAIL") +
                              "), deterministic internal=" + fmt(rd.internal_term) + " R_EN=" + fmt(rd.total_risk) +
                              " > true (" + (part2 ? "ok" : "FAIL") + ")"};
}

Outcome c08_determinism() {
  const double rho = 0.6, v = 1.0 - rho * rho;
  const Eigen::MatrixXd sigma = equicorrelation(2, rho);
  const RowMatrix x = gaussian_joint(Eigen::VectorXd::Zero(2), sigma, 5000, 800);
  const IncompleteDataset ds = IncompleteDataset::from_nan(x);
  const GaussianJointModel truth(Eigen::VectorXd::Zero(2), sigma);
  const GaussianJointModel det = truth.as_deterministic();
  CriterionConfig cfg;
  cfg.M = 50;
  cfg.seed = 8;
  bool ok = true;
  std::ostringstream why;
  for (int j = 0; j < 2; ++j) {
    const double gap = moo_risk_variable(truth, ds, j, LossFn{}, cfg).total_risk -
                       moo_risk_variable(det, ds, j, LossFn{}, cfg).total_risk;
    ok = ok && std::abs(gap - v) <= 0.1 * v;
    why << "x" << j + 1 << " gap=" << fmt(gap) << " ";
  }
  why << "(v=" << fmt(v) << " +-10%)";
  return {ok, why.str()};
}

// Regression parameters implied by a joint Gaussian for each fitted key.
Eigen::VectorXd true_separable_theta(const SeparableGaussianFamily& fam, const Eigen::VectorXd& mu,
                                     const Eigen::MatrixXd& sigma) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(fam.size());
  for (std::size_t k = 0; k < fam.keys().size(); ++k) {
    const CondKey key = fam.keys()[k];
    const auto idx = key.r.indices();
    const int m = static_cast<int>(idx.size());
    Eigen::MatrixXd srr(m, m);
    Eigen::VectorXd sjr(m), mur(m);
    for (int a = 0; a < m; ++a) {
      mur(a) = mu(idx[a]);
      sjr(a) = sigma(key.j, idx[a]);
      for (int b = 0; b < m; ++b) srr(a, b) = sigma(idx[a], idx[b]);
    }
    Eigen::VectorXd beta = m ? Eigen::VectorXd(srr.ldlt().solve(sjr)) : Eigen::VectorXd();
    const int off = fam.coef_offset(static_cast<int>(k));
    theta(off) = mu(key.j) - (m ? beta.dot(mur) : 0.0);
    for (int a = 0; a < m; ++a) theta(off + 1 + a) = beta(a);
    theta(fam.variance_index(static_cast<int>(k))) = sigma(key.j, key.j) - (m ? sjr.dot(beta) : 0.0);
  }
  return theta;
}

Outcome c09_mcar_recovery() {
  const Eigen::Vector3d mu(0.5, -0.3, 0.1);
  const Eigen::MatrixXd sigma = random_covariance(3, 90);
  long inside = 0, total = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const IncompleteDataset ds = mcar_gaussian(mu, sigma, 2000, 0.3, 900 + rep);
    SeparableGaussianFamily fam(ds, adequate_keys(ds, Basis::linear, 20), Basis::linear, {});
    const Eigen::VectorXd theta = fam.closed_form();
    const Eigen::VectorXd se = sandwich_standard_errors(fam, theta);
    const Eigen::VectorXd truth = true_separable_theta(fam, mu, sigma);
    for (int k = 0; k < theta.size(); ++k) {
      ++total;
      if (std::abs(theta(k) - truth(k)) <= 3.0 * se(k)) ++inside;
    }
  }
  const double frac = static_cast<double>(inside) / total;
  return {frac >= 0.95, "coverage within 3 SE=" + fmt(frac) + " over " + std::to_string(total) +
                            " coordinates (>=0.95)"};
}

Outcome c10_bic() {
  int correct = 0;
  const Basis bases[3] = {Basis::intercept, Basis::linear, Basis::quadratic};
  for (int rep = 0; rep < 20; ++rep) {
    const IncompleteDataset ds =
        mcar_gaussian(Eigen::VectorXd::Zero(3), equicorrelation(3, 0.5), 5000, 0.3, 1000 + rep);
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int b = 0; b < 3; ++b) {
      SeparableOptions opt;
      opt.basis = bases[b];
      opt.min_rows = 30;
      const auto fit = fit_separable_gaussian_closed_form(ds, opt);
      const double score = bic(fit.model, ds);
      if (score > best) best = score, arg = b;
    }
    if (arg == 1) ++correct;
  }
  return {correct >= 18, "linear (true) selected " + std::to_string(correct) + "/20 (>=90%)"};
}

Outcome c11_robustness() {
  const char* cells[4] = {"none", "outcome", "odds", "both"};
  const char* names[4] = {"both correct", "odds only", "outcome only", "neither"};
  bool ok = true;
  std::ostringstream why;
  for (int c = 0; c < 4; ++c) {
    const NuisanceBases b = robustness_bases(cells[c]);
    std::vector<double> est;
    for (int rep = 0; rep < 200; ++rep) {
      const IncompleteDataset ds = robustness_scenario(2000, 1100 + rep);
      NuisanceOptions oo, yo;
      oo.basis = b.odds;
      yo.basis = b.outcome;
      est.push_back(mr_estimate(ds, fit_odds(ds, oo), fit_outcome(ds, yo)).mu_hat);
    }
    const double mean = std::accumulate(est.begin(), est.end(), 0.0) / est.size();
    double ss = 0.0;
    for (double e : est) ss += (e - mean) * (e - mean);
    const double se = std::sqrt(ss / (est.size() - 1)) / std::sqrt(static_cast<double>(est.size()));
    const double bias = mean - kRobustnessMean;
    const bool cell_ok = c < 3 ? std::abs(bias) <= 3 * se : std::abs(bias) > 3 * se;
    ok = ok && cell_ok;
    why << names[c] << ": bias=" << fmt(bias) << " SE=" << fmt(se) << (cell_ok ? "" : " FAIL") << "; ";
  }
  return {ok, why.str()};
}

Outcome c12_monotone() {
  const int d = 4;
  const double phi = 0.6;
  const RowMatrix x = monotone_gaussian_ar(d, phi, 3000, 1200);
  const GroundTruthDataset gt = ampute_monotone(x, -1.5, 1.0, 1201);
  const MonotoneDataset mds = as_monotone(gt.incomplete);
  CriterionConfig cfg;
  cfg.M = 300;
  cfg.seed = 12;
  const auto ncmv = fit_monotone(mds, MonotoneRule::ncmv).model;
  const auto acmv = fit_monotone(mds, MonotoneRule::acmv).model;
  const double ks_lc = moolc_risk(ncmv, mds, MonotoneMode::rank, LossFn{}, cfg).total_risk;
  const double ks_bl = moobl_risk(acmv, mds, MonotoneMode::rank, LossFn{}, cfg).total_risk;

  const GaussianJointModel joint(Eigen::VectorXd::Zero(d), ar_covariance(d, phi));
  const MonotoneSequentialModel truth = monotone_from_gaussian(joint, "truth");
  const double ll_true = moobl_loglik(truth, mds).value;
  double best_other = -std::numeric_limits<double>::infinity();
  int perturbed = 0;
  for (int tau = 0; tau < d; ++tau) {
    for (int k = 0; k < truth.stages()[tau].coef.size(); ++k) {
      for (double delta : {-0.2, 0.2}) {
        auto stages = truth.stages();
        stages[tau].coef(k) += delta;
        const MonotoneSequentialModel m("perturbed", stages);
        best_other = std::max(best_other, moobl_loglik(m, mds).value);
        ++perturbed;
      }
    }
  }
  const bool ok = ks_lc <= 0.05 && ks_bl <= 0.05 && ll_true >= best_other;
  return {ok, "NCMV MOOLC KS=" + fmt(ks_lc) + ", ACMV MOOBL KS=" + fmt(ks_bl) + " (<=0.05); MOOBL loglik true=" +
                  fmt(ll_true, "%.6g") + " vs best of " + std::to_string(perturbed) +
                  " perturbations=" + fmt(best_other, "%.6g")};
}

Outcome c13_kde() {
  const Eigen::MatrixXd sigma = equicorrelation(3, 0.5);
  const IncompleteDataset ds = mcar_gaussian(Eigen::VectorXd::Zero(3), sigma, 400, 0.3, 1300);
  const GaussianJointModel model(Eigen::VectorXd::Zero(3), sigma);
  const MooLogLik exact = moo_loglik(model, ds);
  KdeOptions opt;
  opt.M = 2000;
  opt.seed = 13;
  const MooLogLik mc = moo_loglik_mc(model, ds, opt);
  const double gap = std::abs(mc.value - exact.value) / exact.n_terms;
  return {gap <= 0.05, "per-term gap=" + fmt(gap) + " over " + std::to_string(exact.n_terms) + " terms (<=0.05)"};
}

Outcome c14_oracle() {
  struct Suite {
    std::string generator;
    nlohmann::json params;
  };
  const std::vector<Suite> suite{{"gaussian_joint", {{"d", 4}, {"rho", 0.8}}},
                                 {"monotone_gaussian_ar", {{"d", 4}, {"phi", 0.8}}}};
  bool ok = true;
  std::ostringstream why;
  for (std::size_t s = 0; s < suite.size(); ++s) {
    ExperimentSpec spec;
    spec.generator = suite[s].generator;
    spec.generator_params = suite[s].params;
    spec.n = 1500;
    spec.data_seed = 1400 + s;
    spec.amputation_seed = 1410 + s;
    spec.mechanism = "mcar";
    spec.fraction = 0.3;
    spec.models = {"mean", "gaussian_em", "nn_hot_deck:k=3", "random_hot_deck"};
    spec.criteria = {parse_criterion_spec("moo"), parse_criterion_spec("moort"), parse_criterion_spec("mooen")};
    spec.folds = 2;
    spec.M = 20;
    spec.oracle = true;
    spec.oracle_M = 20;
    const ExperimentResult res = run_experiment(spec);
    if (!res.failed.empty() || !res.oracle) {
      ok = false;
      why << spec.generator << ": model failure; ";
      continue;
    }
    why << spec.generator << ":";
    for (const auto& c : res.oracle->concordance) {
      ok = ok && c.spearman >= 0.8;
      why << " " << c.criterion << " rho=" << fmt(c.spearman);
    }
    for (const char* crit : {"moort", "mooen"}) {
      std::string worst;
      double worst_risk = -1.0;
      for (const auto& r : res.reports)
        if (r.criterion == crit && r.total_risk > worst_risk) worst_risk = r.total_risk, worst = r.model;
      ok = ok && worst == "mean";
      why << " last(" << crit << ")=" << worst;
    }
    why << "; ";
  }
  return {ok, why.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  return out;
}

Outcome c15_end_to_end() {
  if (g_opts.cli.empty() || g_opts.config.empty()) return {false, "needs --cli and --config"};
  const fs::path work = g_opts.workdir;
  fs::remove_all(work);
  fs::create_directories(work);
  std::map<std::string, std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    const fs::path out = work / ("run" + std::to_string(r));
    const std::string cmd = "\"" + g_opts.cli + "\" experiment \"" + g_opts.config + "\" --output \"" +
                            out.string() + "\" --threads " + std::to_string(r == 0 ? 1 : 2) + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, "experiment run " + std::to_string(r) + " exited with status " + std::to_string(rc)};
    runs[r] = snapshot(out);
  }
  const bool same = runs[0] == runs[1] && !runs[0].empty();
  return {same, std::to_string(runs[0].size()) + " files, " + (same ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--cli" && a + 1 < argc) g_opts.cli = argv[++a];
    else if (arg == "--config" && a + 1 < argc) g_opts.config = argv[++a];
    else if (arg == "--workdir" && a + 1 < argc) g_opts.workdir = argv[++a];
    else selected.insert(std::stoi(arg));
  }
  set_warnings_enabled(false);

  const std::vector<Criterion> all{
      {1, "pattern algebra exactness", 1, c01_patterns},
      {2, "MKO loss-count identity", 1, c02_mko_count},
      {3, "variable-wise decomposition", 5, c03_decomposition},
      {4, "closed-form vs gradient MOO-MLE", 30, c04_closed_vs_gradient},
      {5, "score correctness", 10, c05_scores},
      {6, "MOORT consistency", 120, c06_moort},
      {7, "MOOEN consistency and determinism reward", 120, c07_mooen},
      {8, "MOO favors determinism", 60, c08_determinism},
      {9, "MCAR recovery", 300, c09_mcar_recovery},
      {10, "BIC selection consistency", 300, c10_bic},
      {11, "multiply-robustness", 300, c11_robustness},
      {12, "monotone equivalences", 180, c12_monotone},
      {13, "KDE likelihood self-consistency", 60, c13_kde},
      {14, "oracle concordance", 300, c14_oracle},
      {15, "end-to-end determinism", 300, c15_end_to_end},
  };

  bool all_pass = true;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::printf("%s %2d %s: %s [%.2fs / %.0fs budget%s]\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
