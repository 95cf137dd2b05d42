#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "moo/dataset.hpp"
#include "moo/estimators.hpp"
#include "moo/rng.hpp"
#include "moo/synthetic.hpp"

using namespace moo;

namespace {

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

// X2 ~ N(0,1), X1 = 1 + 2 X2 + N(0,1); X2 always observed, X1 missing with
// probability logistic(a + b X2).
IncompleteDataset logistic_missing(int n, double a, double b, std::uint64_t seed) {
  RowMatrix v(n, 2);
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(seed, Stream::synthetic, static_cast<std::uint64_t>(i));
    const double x2 = standard_normal(rng);
    const double x1 = 1.0 + 2.0 * x2 + standard_normal(rng);
    const bool miss = uniform01(rng) < 1.0 / (1.0 + std::exp(-(a + b * x2)));
    v.row(i) << (miss ? NA : x1), x2;
  }
  return IncompleteDataset::from_nan(v);
}

}  // namespace

TEST_SUITE("estimators") {
  TEST_CASE("odds recover a known logistic model") {
    const auto ds = logistic_missing(40000, -0.5, 0.8, 1);
    NuisanceOptions opt;
    opt.basis = Basis::linear;
    const auto odds = fit_odds(ds, opt);
    const auto& e = odds.entries().at(Pattern::parse("01"));
    CHECK(e.coef(0) == doctest::Approx(-0.5).epsilon(0.1));
    CHECK(e.coef(1) == doctest::Approx(0.8).epsilon(0.1));
    const Eigen::Vector2d x(NA, 1.0);
    CHECK(odds.odds(x, Pattern::parse("01")) == doctest::Approx(std::exp(0.3)).epsilon(0.1));
  }

  TEST_CASE("equal response probabilities give unit odds") {
    const auto ds = logistic_missing(40000, 0.0, 0.0, 2);
    const auto odds = fit_odds(ds);
    const Eigen::Vector2d x(NA, 0.7);
    CHECK(odds.odds(x, Pattern::parse("01")) == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("outcome regression") {
    const auto ds = logistic_missing(20000, -0.5, 0.8, 3);
    const auto out = fit_outcome(ds);
    const auto& e = out.entries().at(Pattern::parse("01"));
    CHECK(e.coef(0) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(e.coef(1) == doctest::Approx(2.0).epsilon(0.05));

    RowMatrix c(40, 2);
    for (int i = 0; i < 40; ++i) c.row(i) << (i % 4 == 0 ? NA : 3.0), 0.1 * i;
    const auto flat = fit_outcome(IncompleteDataset::from_nan(c));
    CHECK(std::abs(flat.entries().at(Pattern::parse("01")).coef(1)) < 1e-10);
  }

  TEST_CASE("empty conditioning set falls back to the donor mean") {
    RowMatrix v(6, 2);
    v << 1.0, NA, 3.0, NA, NA, NA, NA, NA, 4.0, 5.0, NA, 6.0;
    const auto ds = IncompleteDataset::from_nan(v);
    const auto out = fit_outcome(ds);
    const Eigen::Vector2d x(NA, NA);
    CHECK(out.mean(x, Pattern::parse("00")) == doctest::Approx(2.0));
    CHECK(out.entries().at(Pattern::parse("00")).coef.size() == 1);
  }

  TEST_CASE("complete data: every estimator is the sample mean") {
    RowMatrix v(5, 2);
    v << 1, 0, 2, 1, 3, 0, 4, 1, 10, 2;
    const auto ds = IncompleteDataset::from_nan(v);
    const auto odds = fit_odds(ds);
    const auto out = fit_outcome(ds);
    CHECK(mr_estimate(ds, odds, out).mu_hat == doctest::Approx(4.0));
    CHECK(ipw_estimate(ds, odds).mu_hat == doctest::Approx(4.0));
    CHECK(ra_estimate(ds, out).mu_hat == doctest::Approx(4.0));
  }

  TEST_CASE("algebraic identities between estimators") {
    const auto ds = robustness_scenario(3000, 4);
    const auto odds = fit_odds(ds);
    const auto out = fit_outcome(ds);
    CHECK(ipw_estimate(ds, odds).mu_hat == doctest::Approx(mr_estimate(ds, odds, OutcomeModel::zero(ds, 0)).mu_hat));
    const auto none = OddsModel::constant(ds, 0, 0.0);
    CHECK(ra_estimate(ds, out).mu_hat == doctest::Approx(mr_estimate(ds, none, out).mu_hat));
    const auto ipw0 = ipw_estimate(ds, none);
    CHECK(ipw0.mu_hat == doctest::Approx(ipw0.observed_part));
  }

  TEST_CASE("influence values are centered") {
    const auto ds = robustness_scenario(2000, 5);
    const auto est = mr_estimate(ds, fit_odds(ds), fit_outcome(ds));
    REQUIRE(est.eif.size() == 2000);
    CHECK(std::abs(std::accumulate(est.eif.begin(), est.eif.end(), 0.0)) < 1e-8);
    double parts = est.observed_part;
    for (const auto& c : est.per_pattern) parts += c.regression + c.weighted_residual;
    CHECK(parts == doctest::Approx(est.mu_hat));
  }

  TEST_CASE("correct nuisances give a consistent mean") {
    const auto ds = robustness_scenario(20000, 6);
    NuisanceOptions q;
    q.basis = Basis::quadratic;
    const auto est = mr_estimate(ds, fit_odds(ds, q), fit_outcome(ds, q));
    double ss = 0.0;
    for (double e : est.eif) ss += e * e;
    const double se = std::sqrt(ss) / ds.rows();
    CHECK(std::abs(est.mu_hat - kRobustnessMean) <= 3 * se);
  }

  TEST_CASE("robustness cells") {
    CHECK(robustness_bases("none").odds == Basis::quadratic);
    CHECK(robustness_bases("odds").odds == Basis::linear);
    CHECK(robustness_bases("odds").outcome == Basis::quadratic);
    CHECK(robustness_bases("both").outcome == Basis::linear);
    CHECK_THROWS(robustness_bases("neither"));
  }

  TEST_CASE("pattern with no donors is an error") {
    RowMatrix v(4, 2);
    v << NA, 1.0, NA, 2.0, 1.0, NA, 2.0, NA;
    CHECK_THROWS_AS(fit_outcome(IncompleteDataset::from_nan(v)), DataError);
  }

  TEST_CASE("estimate CSV row") {
    const auto ds = robustness_scenario(300, 7);
    const auto est = ra_estimate(ds, fit_outcome(ds));
    std::ostringstream out;
    write_estimate_header(out);
    write_estimate_row(out, est, 42);
    const std::string s = out.str();
    CHECK(s.rfind("estimator,mu_hat,per_pattern_json,seed\n", 0) == 0);
    CHECK(s.find("ra,") != std::string::npos);
    CHECK(s.find(",42\n") != std::string::npos);
  }
}

TEST_SUITE("synthetic") {
  TEST_CASE("Gaussian moments within 3 SE") {
    Eigen::Matrix2d s;
    s << 1.0, 0.4, 0.4, 2.0;
    const int n = 20000;
    const RowMatrix x = gaussian_joint(Eigen::Vector2d(1.0, -1.0), s, n, 1);
    const Eigen::VectorXd m = x.colwise().mean();
    CHECK(std::abs(m(0) - 1.0) <= 3 * std::sqrt(1.0 / n));
    CHECK(std::abs(m(1) + 1.0) <= 3 * std::sqrt(2.0 / n));
    const RowMatrix c = x.rowwise() - m.transpose();
    const Eigen::MatrixXd cov = c.transpose() * c / (n - 1);
    CHECK(std::abs(cov(0, 1) - 0.4) <= 3 * std::sqrt((1.0 * 2.0 + 0.16) / n));
    CHECK(std::abs(cov(1, 1) - 2.0) <= 3 * std::sqrt(2 * 4.0 / n));
  }

  TEST_CASE("identity covariance gives uncorrelated columns") {
    const RowMatrix x = gaussian_joint(Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity(), 10000, 2);
    const RowMatrix c = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / 9999.0;
    CHECK(std::abs(cov(0, 2)) < 0.04);
  }

  TEST_CASE("generation is deterministic and validates covariance") {
    CHECK(gaussian_joint(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 10, 3) ==
          gaussian_joint(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 10, 3));
    Eigen::Matrix2d bad;
    bad << 1, 2, 2, 1;
    CHECK_THROWS(gaussian_joint(Eigen::Vector2d::Zero(), bad, 10, 3));
  }

  TEST_CASE("mixture and AR moments") {
    const RowMatrix m = two_subpop_pattern_mixture(3, 2.0, 0.3, 20000, 4);
    const RowMatrix c = m.rowwise() - m.colwise().mean();
    const Eigen::MatrixXd cov = c.transpose() * c / 19999.0;
    CHECK(cov(0, 0) == doctest::Approx(2.0).epsilon(0.05));
    CHECK(cov(0, 1) == doctest::Approx(1.3).epsilon(0.07));

    const RowMatrix a = monotone_gaussian_ar(4, 0.6, 20000, 5);
    const RowMatrix ac = a.rowwise() - a.colwise().mean();
    const Eigen::MatrixXd acov = ac.transpose() * ac / 19999.0;
    CHECK((acov - ar_covariance(4, 0.6)).lpNorm<Eigen::Infinity>() < 0.05);
    CHECK(ar_covariance(3, 0.5)(0, 2) == doctest::Approx(0.25));
  }

  TEST_CASE("dispatch by id") {
    const nlohmann::json p{{"d", 5}, {"rho", 0.2}};
    CHECK(generate_synthetic("gaussian_joint", p, 20, 1).cols() == 5);
    CHECK(generate_synthetic("monotone_gaussian_ar", nlohmann::json::object(), 20, 1).cols() == 4);
    CHECK(generate_synthetic("two_subpop_pattern_mixture", nlohmann::json::object(), 20, 1).cols() == 3);
    CHECK_THROWS(generate_synthetic("copula", nlohmann::json::object(), 20, 1));
    CHECK(synthetic_generators().size() == 3);
    const auto mds = as_monotone(
        ampute_monotone(generate_synthetic("monotone_gaussian_ar", nlohmann::json::object(), 200, 1), -1.0, 1.0, 2)
            .incomplete);
    CHECK(mds.rows() == 200);
  }
}
