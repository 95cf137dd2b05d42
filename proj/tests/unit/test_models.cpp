#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "moo/dataset.hpp"
#include "moo/models.hpp"
#include "moo/regression.hpp"
#include "moo/rng.hpp"
#include "moo/synthetic.hpp"

using namespace moo;

namespace {

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd corr2(double rho) {
  Eigen::MatrixXd s(2, 2);
  s << 1, rho, rho, 1;
  return s;
}

IncompleteDataset mcar(const Eigen::MatrixXd& sigma, int n, double p, std::uint64_t seed) {
  const RowMatrix x = gaussian_joint(Eigen::VectorXd::Zero(sigma.rows()), sigma, n, seed);
  return ampute_mcar(x, p, seed + 1).incomplete;
}

double sample_corr(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("regression") {
  TEST_CASE("features follow the basis") {
    Eigen::Vector3d x(2.0, NA, 3.0);
    const Pattern r = Pattern::parse("101");
    CHECK(features(Basis::intercept, x, r).size() == 1);
    const auto f = features(Basis::quadratic, x, r);
    REQUIRE(f.size() == 5);
    CHECK(f(1) == 2.0);
    CHECK(f(2) == 3.0);
    CHECK(f(3) == 4.0);
    CHECK(f(4) == 9.0);
    CHECK(basis_size(Basis::linear, 2) == 3);
    CHECK(basis_from_string(to_string(Basis::quadratic)) == Basis::quadratic);
    CHECK_THROWS(basis_from_string("cubic"));
  }

  TEST_CASE("OLS recovers a noiseless line and ridges a singular design") {
    Eigen::MatrixXd X(4, 2);
    X << 1, 0, 1, 1, 1, 2, 1, 3;
    const Eigen::Vector4d y(1, 3, 5, 7);
    const auto fit = fit_ols(X, y);
    CHECK(fit.coef(0) == doctest::Approx(1.0));
    CHECK(fit.coef(1) == doctest::Approx(2.0));
    CHECK(fit.rss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(fit.ridged);
    Eigen::MatrixXd S(3, 2);
    S << 1, 1, 1, 1, 1, 1;
    CHECK(fit_ols(S, Eigen::Vector3d(1, 2, 3)).ridged);
  }

  TEST_CASE("logistic regression recovers known coefficients") {
    const int n = 20000;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    Rng rng = substream(1, Stream::synthetic, 0);
    for (int i = 0; i < n; ++i) {
      const double x = standard_normal(rng);
      X(i, 0) = 1.0;
      X(i, 1) = x;
      y(i) = uniform01(rng) < 1.0 / (1.0 + std::exp(-(-0.5 + 1.2 * x))) ? 1.0 : 0.0;
    }
    const auto fit = fit_logistic(X, y);
    CHECK(fit.converged);
    CHECK(fit.coef(0) == doctest::Approx(-0.5).epsilon(0.1));
    CHECK(fit.coef(1) == doctest::Approx(1.2).epsilon(0.1));
  }

  TEST_CASE("logistic regression flags separation") {
    Eigen::MatrixXd X(6, 2);
    X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
    Eigen::VectorXd y(6);
    y << 0, 0, 0, 1, 1, 1;
    CHECK(fit_logistic(X, y).separated);
  }
}

TEST_SUITE("models") {
  TEST_CASE("mean model") {
    RowMatrix v(4, 1);
    v << 2, 4, NA, 6;
    const auto ds = IncompleteDataset::from_nan(v);
    const MeanModel m = fit_mean(ds);
    Rng rng(1);
    CHECK(m.sample_marginal(0, ds.row(2), Pattern::none(1), rng) == 4.0);
    CHECK(m.parameter_count() == 1);
    CHECK(m.point_mass());
    CHECK_FALSE(m.has_density());
    RowMatrix empty(2, 2);
    empty << 1, NA, 2, NA;
    CHECK_THROWS(fit_mean(IncompleteDataset::from_nan(empty)));
  }

  TEST_CASE("Gaussian conditional is the Schur complement") {
    const GaussianJointModel g(Eigen::Vector2d(1.0, -1.0), corr2(0.6));
    const Eigen::Vector2d x(2.0, 0.0);
    const auto c = g.conditional(Pattern::parse("01"), x, Pattern::parse("10"));
    CHECK(c.mean(0) == doctest::Approx(-1.0 + 0.6 * (2.0 - 1.0)));
    CHECK(c.covariance(0, 0) == doctest::Approx(0.64));
    CHECK(c.covariance(0, 0) <= g.covariance()(1, 1));
    CHECK(g.parameter_count() == 5);
    const auto det = g.as_deterministic();
    Rng rng(3);
    CHECK(det.sample_marginal(1, x, Pattern::parse("10"), rng) == doctest::Approx(c.mean(0)));
  }

  TEST_CASE("Gaussian marginal density integrates to one") {
    Eigen::Matrix3d s;
    s << 1.0, 0.5, 0.2, 0.5, 2.0, -0.4, 0.2, -0.4, 1.5;
    const GaussianJointModel g(Eigen::Vector3d(0.2, 0.0, -0.3), s);
    const Eigen::Vector3d x(0.5, NA, 1.0);
    const Pattern r = Pattern::parse("101");
    double integral = 0.0;
    const double h = 0.001;
    for (double t = -10.0; t <= 10.0; t += h) integral += std::exp(g.log_density_marginal(t, 1, x, r)) * h;
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("EM on complete data is the MLE in one step") {
    const RowMatrix x = gaussian_joint(Eigen::Vector2d(1, 2), corr2(0.3), 300, 4);
    const auto em = fit_gaussian_em(IncompleteDataset::from_nan(x));
    const Eigen::VectorXd mean = x.colwise().mean();
    const RowMatrix centered = x.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / 300.0;
    CHECK((em.model.mean() - mean).norm() <= 1e-10);
    CHECK((em.model.covariance() - cov).norm() <= 1e-10);
  }

  TEST_CASE("EM recovers correlation under MCAR with a monotone likelihood trace") {
    const auto ds = mcar(corr2(0.6), 5000, 0.3, 5);
    const auto em = fit_gaussian_em(ds);
    const auto& s = em.model.covariance();
    CHECK(s(0, 1) / std::sqrt(s(0, 0) * s(1, 1)) == doctest::Approx(0.6).epsilon(0.05 / 0.6));
    for (std::size_t k = 1; k < em.loglik_trace.size(); ++k)
      CHECK(em.loglik_trace[k] >= em.loglik_trace[k - 1] - 1e-8);
    CHECK(em.converged);
  }

  TEST_CASE("nearest-neighbor hot deck with k=1 returns the matching donor") {
    RowMatrix v(4, 2);
    v << 0.0, 10.0, 1.0, 11.0, 2.0, 12.0, 3.0, NA;
    const auto ds = IncompleteDataset::from_nan(v);
    const auto hd = fit_hot_deck(ds, HotDeckVariant::nearest_neighbor, 1);
    Rng rng(2);
    const Eigen::Vector2d q(1.0, NA);
    CHECK(hd.sample_marginal(1, q, Pattern::parse("10"), rng) == 11.0);
    CHECK(hd.donor_pool(Pattern::parse("01"), q, Pattern::parse("10")) == std::vector<int>{1});
  }

  TEST_CASE("random hot deck draws from the observed column") {
    RowMatrix v(5, 2);
    v << 0, 1, 0, 2, 0, 2, 0, 3, 0, NA;
    const auto ds = IncompleteDataset::from_nan(v);
    const auto hd = fit_hot_deck(ds, HotDeckVariant::random, 1);
    Rng rng(8);
    std::map<double, int> counts;
    const int draws = 8000;
    for (int k = 0; k < draws; ++k) ++counts[hd.sample_marginal(1, ds.row(4), Pattern::parse("10"), rng)];
    REQUIRE(counts.size() == 3);
    const std::map<double, double> expected{{1.0, 0.25}, {2.0, 0.5}, {3.0, 0.25}};
    double chi2 = 0.0;
    for (const auto& [val, p] : expected) {
      const double e = p * draws;
      chi2 += (counts[val] - e) * (counts[val] - e) / e;
    }
    CHECK(chi2 < 13.8);  // 0.999 quantile, 2 df
  }

  TEST_CASE("MOOPM uses the donor pattern, not the pooled regression") {
    // Rows with both variables follow x1 = 2 x2; rows with x1 only follow x1 = -x2.
    const int n = 3000;
    RowMatrix v(n, 2);
    Rng rng = substream(9, Stream::synthetic, 0);
    for (int i = 0; i < n; ++i) {
      const double x2 = standard_normal(rng);
      const double e = 0.1 * standard_normal(rng);
      if (i % 3 == 0) v.row(i) << 2.0 * x2 + e, x2;
      else if (i % 3 == 1) v.row(i) << -x2 + e, NA;
      else v.row(i) << NA, x2;
    }
    const auto ds = IncompleteDataset::from_nan(v);
    const auto m = fit_moopm_empirical(ds);
    const auto& c = m.conditional(0, Pattern::parse("01"));
    CHECK(c.coef(1) == doctest::Approx(2.0).epsilon(0.05));
    CHECK(c.variance == doctest::Approx(0.01).epsilon(0.2));
  }

  TEST_CASE("MOOPM skips keys without donors and samples the product form") {
    const auto ds = mcar(Eigen::MatrixXd::Identity(3, 3) * 0.5 + Eigen::MatrixXd::Constant(3, 3, 0.5), 4000,
                         0.3, 11);
    const auto m = fit_moopm_empirical(ds);
    CHECK(m.available(0, Pattern::parse("011")));
    RowMatrix v(30, 2);
    for (int i = 0; i < 30; ++i) v.row(i) << i, NA;
    const auto sparse = fit_moopm_empirical(IncompleteDataset::from_nan(v));
    CHECK_FALSE(sparse.available(1, Pattern::parse("10")));

    const Eigen::Vector3d x(0.7, NA, NA);
    const Pattern r = Pattern::parse("100");
    Rng rng(12);
    std::vector<double> a, b;
    for (int k = 0; k < 4000; ++k) {
      const auto s = m.sample_joint(Pattern::parse("011"), x, r, rng);
      a.push_back(s(0));
      b.push_back(s(1));
    }
    CHECK(std::abs(sample_corr(a, b)) < 0.06);
  }

  TEST_CASE("CCMV matches MOOPM under MCAR") {
    const Eigen::MatrixXd s = Eigen::MatrixXd::Identity(3, 3) * 0.4 + Eigen::MatrixXd::Constant(3, 3, 0.6);
    const auto ds = mcar(s, 100000, 0.2, 13);
    const auto cc = fit_ccmv(ds);
    const auto mp = fit_moopm_empirical(ds);
    for (const auto& [key, c] : mp.conditionals()) {
      const auto cc_c = cc.conditional(key.j, key.r);
      CHECK((cc_c.coef - c.coef).lpNorm<Eigen::Infinity>() < 0.05);
    }
    // sum over (r, j) of |r| + 2
    CHECK(cc.parameter_count() == 3 * 2 + 6 * 3 + 3 * 4);
    RowMatrix v(3, 2);
    v << 1, NA, NA, 2, 3, NA;
    CHECK_THROWS(fit_ccmv(IncompleteDataset::from_nan(v)));
  }

  TEST_CASE("NCMV and ACMV donor counts") {
    const RowMatrix x = monotone_gaussian_ar(4, 0.6, 3000, 14);
    const auto mds = as_monotone(ampute_monotone(x, -1.0, 0.5, 15).incomplete);
    const auto nc = fit_monotone(mds, MonotoneRule::ncmv);
    const auto ac = fit_monotone(mds, MonotoneRule::acmv);
    for (int tau = 0; tau < 4; ++tau) CHECK(ac.donor_counts[tau] >= nc.donor_counts[tau]);
    // ACMV stages under MAR dropout match the full-data conditionals
    const auto truth = monotone_from_gaussian(GaussianJointModel(Eigen::VectorXd::Zero(4), ar_covariance(4, 0.6)),
                                              "truth");
    for (int tau = 1; tau < 4; ++tau) {
      const auto& fit = ac.model.stages()[tau];
      const auto& ref = truth.stages()[tau];
      CHECK((fit.coef - ref.coef).lpNorm<Eigen::Infinity>() < 0.1);
      CHECK(fit.variance == doctest::Approx(ref.variance).epsilon(0.1));
    }
  }

  TEST_CASE("two-variable monotone fits coincide") {
    const RowMatrix x = monotone_gaussian_ar(2, 0.5, 500, 16);
    const auto mds = as_monotone(ampute_monotone(x, -1.0, 0.5, 17).incomplete);
    const auto nc = fit_monotone(mds, MonotoneRule::ncmv).model;
    const auto ac = fit_monotone(mds, MonotoneRule::acmv).model;
    CHECK((nc.stages()[1].coef - ac.stages()[1].coef).norm() == 0.0);
  }

  TEST_CASE("sampling is reproducible for a fixed engine state") {
    const GaussianJointModel g(Eigen::Vector2d::Zero(), corr2(0.5));
    const Eigen::Vector2d x(0.3, NA);
    Rng a = substream(1, Stream::moo, 2, 3), b = substream(1, Stream::moo, 2, 3);
    CHECK(g.sample_marginal(1, x, Pattern::parse("10"), a) == g.sample_marginal(1, x, Pattern::parse("10"), b));
    std::vector<double> batch(5), single(5);
    Rng c = substream(4, Stream::moo, 0), e = substream(4, Stream::moo, 0);
    g.sample_marginal_n(1, x, Pattern::parse("10"), c, batch);
    for (double& s : single) s = g.sample_marginal(1, x, Pattern::parse("10"), e);
    CHECK(batch == single);
  }

  TEST_CASE("model specs and parameter documents") {
    const auto s = parse_model_spec("nn_hot_deck:k=3,label=nn3");
    CHECK(s.kind == "nn_hot_deck");
    CHECK(s.k_neighbors == 3);
    CHECK(s.display() == "nn3");
    CHECK_THROWS(parse_model_spec("mice"));
    CHECK_THROWS(parse_model_spec("mean:bogus=1"));

    const auto ds = standardize(mcar(corr2(0.4), 400, 0.2, 18));
    const ModelPtr g = fit_model(parse_model_spec("gaussian_em"), ds);
    const ModelPtr back = model_from_json(g->to_json());
    const Eigen::Vector2d x(0.4, NA);
    Rng a(5), b(5);
    CHECK(g->sample_marginal(1, x, Pattern::parse("10"), a) ==
          doctest::Approx(back->sample_marginal(1, x, Pattern::parse("10"), b)));
    for (const auto& kind : known_model_kinds()) {
      if (kind == "ncmv" || kind == "acmv") continue;
      CHECK_NOTHROW(fit_model(parse_model_spec(kind), ds));
    }
  }
}
