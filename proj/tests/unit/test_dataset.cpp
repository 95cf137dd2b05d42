#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "moo/dataset.hpp"
#include "moo/synthetic.hpp"

using namespace moo;

namespace {

constexpr double NA = std::numeric_limits<double>::quiet_NaN();

RowMatrix normal_matrix(int n, int d, std::uint64_t seed) {
  return gaussian_joint(Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d), n, seed);
}

double missing_fraction(const IncompleteDataset& ds) {
  long miss = 0;
  for (int i = 0; i < ds.rows(); ++i) miss += ds.cols() - ds.pattern(i).count();
  return static_cast<double>(miss) / (static_cast<double>(ds.rows()) * ds.cols());
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("load_csv reads the fixture with its patterns") {
    const auto ds = load_csv(MOO_SOURCE_DIR "/tests/data/small.csv");
    REQUIRE(ds.rows() == 8);
    REQUIRE(ds.cols() == 3);
    CHECK(ds.column_names() == std::vector<std::string>{"X1", "X2", "X3"});
    CHECK(ds.pattern(0).str() == "111");
    CHECK(ds.pattern(1).str() == "101");
    CHECK(ds.pattern(2).str() == "001");
    CHECK(ds.pattern(5).str() == "010");
    CHECK(ds.value(1, 2) == doctest::Approx(2.7));
    CHECK(ds.observed_count(0) == 5);
    CHECK(ds.count_pattern(Pattern::parse("111")) == 3);
  }

  TEST_CASE("parse_csv strictness") {
    std::istringstream bad("a,b\n1,nan\n");
    CHECK_THROWS_AS(parse_csv(bad, "NA"), DataError);
    std::istringstream ragged("a,b\n1,2\n3\n");
    CHECK_THROWS_AS(parse_csv(ragged), DataError);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_csv(empty), DataError);
    std::istringstream custom("a,b\n1,.\n2,3\n");
    const auto ds = parse_csv(custom, ".");
    CHECK(ds.pattern(0).str() == "10");
    std::istringstream full("a,b\n1,2\n3,4\n");
    CHECK(parse_csv(full).pattern(1).full());
  }

  TEST_CASE("CSV round trip") {
    const auto ds = load_csv(MOO_SOURCE_DIR "/tests/data/small.csv");
    std::ostringstream out;
    write_csv(ds, out);
    std::istringstream in(out.str());
    const auto back = parse_csv(in);
    CHECK(back.patterns() == ds.patterns());
    for (int i = 0; i < ds.rows(); ++i)
      for (int j = 0; j < ds.cols(); ++j)
        if (ds.observed(i, j)) CHECK(back.value(i, j) == ds.value(i, j));
  }

  TEST_CASE("standardize by hand") {
    RowMatrix v(4, 1);
    v << 2, 4, NA, 6;
    const auto s = standardize(IncompleteDataset::from_nan(v));
    CHECK(s.value(0, 0) == doctest::Approx(-1.0));
    CHECK(s.value(1, 0) == doctest::Approx(0.0));
    CHECK(s.value(3, 0) == doctest::Approx(1.0));
    REQUIRE(s.standardization());
    CHECK(s.standardization()->mean(0) == doctest::Approx(4.0));
    CHECK(s.standardization()->sd(0) == doctest::Approx(2.0));
    const auto twice = standardize(s);
    for (int i : {0, 1, 3}) CHECK(std::abs(twice.value(i, 0) - s.value(i, 0)) <= 1e-12);
    const auto raw = destandardize(s);
    CHECK(raw.value(3, 0) == doctest::Approx(6.0));
  }

  TEST_CASE("standardize rejects degenerate columns") {
    RowMatrix v(3, 2);
    v << 1, NA, 2, NA, 3, NA;
    CHECK_THROWS_AS(standardize(IncompleteDataset::from_nan(v)), DataError);
    RowMatrix c(3, 1);
    c << 1, 1, 1;
    CHECK_THROWS_AS(standardize(IncompleteDataset::from_nan(c)), DataError);
  }

  TEST_CASE("contributing rows skip all-missing rows") {
    RowMatrix v(3, 2);
    v << 1, 2, NA, NA, NA, 3;
    const auto ds = IncompleteDataset::from_nan(v);
    CHECK(ds.contributing_rows() == 2);
    CHECK(ds.empty_rows() == 1);
  }

  TEST_CASE("MCAR amputation") {
    const RowMatrix x = normal_matrix(2500, 4, 3);
    CHECK(missing_fraction(ampute_mcar(x, 0.0, 1).incomplete) == 0.0);
    const auto a = ampute_mcar(x, 0.3, 9);
    const double f = missing_fraction(a.incomplete);
    CHECK(f >= 0.28);
    CHECK(f <= 0.32);
    CHECK(a.complete == x);
    CHECK(ampute_mcar(x, 0.3, 9).incomplete.patterns() == a.incomplete.patterns());
    CHECK(ampute_mcar(x, 0.3, 10).incomplete.patterns() != a.incomplete.patterns());
    CHECK_THROWS(ampute_mcar(x, 1.5, 1));
  }

  TEST_CASE("MAR amputation hits the incomplete-row target") {
    const RowMatrix x = normal_matrix(1000, 4, 4);
    const auto a = ampute_mar(x, MarOptions{0.3, 1.0}, 5);
    int incomplete = 0;
    for (int i = 0; i < a.incomplete.rows(); ++i) incomplete += !a.incomplete.pattern(i).full();
    CHECK(incomplete / 1000.0 >= 0.27);
    CHECK(incomplete / 1000.0 <= 0.33);
    CHECK(ampute_mar(x, MarOptions{0.3, 1.0}, 5).incomplete.patterns() == a.incomplete.patterns());
  }

  TEST_CASE("monotone amputation produces prefixes") {
    const RowMatrix x = monotone_gaussian_ar(5, 0.5, 800, 6);
    const auto a = ampute_monotone(x, -1.0, 1.0, 7);
    const auto mds = as_monotone(a.incomplete);
    std::set<int> ts(mds.t_of_row.begin(), mds.t_of_row.end());
    CHECK(ts.size() >= 3);
    CHECK(*ts.begin() >= 1);
  }

  TEST_CASE("as_monotone") {
    RowMatrix v(3, 5);
    v << 1, 1, 1, NA, NA, 1, 1, 1, 1, NA, 1, 1, 1, 1, 1;
    const auto mds = as_monotone(IncompleteDataset::from_nan(v));
    CHECK(mds.dropout(0) == 3);
    CHECK(mds.dropout(1) == 4);
    CHECK(mds.dropout(2) == 5);
    RowMatrix bad(1, 5);
    bad << 1, NA, 1, NA, NA;
    CHECK_THROWS_AS(as_monotone(IncompleteDataset::from_nan(bad)), DataError);
  }

  TEST_CASE("folds partition the rows") {
    const auto f = make_folds(10, 5, 1);
    std::set<int> all;
    for (int k = 0; k < 5; ++k) {
      const auto in = f.rows_in(k);
      CHECK(in.size() == 2);
      CHECK(f.rows_not_in(k).size() == 8);
      for (int i : in) CHECK(all.insert(i).second);
    }
    CHECK(all.size() == 10);
    CHECK(make_folds(10, 5, 1).fold_of_row == f.fold_of_row);
    CHECK_THROWS(make_folds(10, 1, 1));
    CHECK_THROWS(make_folds(3, 5, 1));
  }

  TEST_CASE("subset keeps patterns and standardization") {
    const auto ds = standardize(load_csv(MOO_SOURCE_DIR "/tests/data/small.csv"));
    const std::vector<int> ids{1, 3};
    const auto s = ds.subset(ids);
    CHECK(s.rows() == 2);
    CHECK(s.pattern(0) == ds.pattern(1));
    CHECK(s.standardization().has_value());
  }
}
