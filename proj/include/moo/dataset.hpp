#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moo/patterns.hpp"

namespace moo {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised for malformed input data: parse failures, ragged rows, degenerate
/// columns.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

/// n x d numeric data with a response pattern per row. Missing entries hold
/// NaN and must never be read.
class IncompleteDataset {
 public:
  IncompleteDataset() = default;
  IncompleteDataset(RowMatrix values, std::vector<Pattern> patterns,
                    std::vector<std::string> column_names = {});

  /// Builds patterns from NaN positions.
  static IncompleteDataset from_nan(RowMatrix values, std::vector<std::string> column_names = {});

  int rows() const { return static_cast<int>(values_.rows()); }
  int cols() const { return static_cast<int>(values_.cols()); }

  const RowMatrix& values() const { return values_; }
  double value(int i, int j) const { return values_(i, j); }
  Eigen::Ref<const Eigen::VectorXd> row(int i) const { return values_.row(i).transpose(); }

  Pattern pattern(int i) const { return patterns_[i]; }
  const std::vector<Pattern>& patterns() const { return patterns_; }
  bool observed(int i, int j) const { return patterns_[i].test(j); }

  const std::vector<std::string>& column_names() const { return names_; }
  const std::optional<Standardization>& standardization() const { return standardization_; }
  void set_standardization(std::optional<Standardization> s) { standardization_ = std::move(s); }

  /// Rows with at least one observed entry; all-missing rows contribute to no
  /// criterion.
  int contributing_rows() const;
  int empty_rows() const { return rows() - contributing_rows(); }
  int count_pattern(Pattern r) const;
  int observed_count(int j) const;

  IncompleteDataset subset(std::span<const int> row_ids) const;

 private:
  RowMatrix values_;
  std::vector<Pattern> patterns_;
  std::vector<std::string> names_;
  std::optional<Standardization> standardization_;
};

/// Complete matrix together with its amputed version.
struct GroundTruthDataset {
  RowMatrix complete;
  IncompleteDataset incomplete;
};

struct FoldAssignment {
  std::vector<int> fold_of_row;
  int folds = 0;

  std::vector<int> rows_in(int k) const;
  std::vector<int> rows_not_in(int k) const;
};

/// Dataset whose every row pattern is a prefix 1..10..0.
struct MonotoneDataset {
  IncompleteDataset data;
  std::vector<int> t_of_row;

  int rows() const { return data.rows(); }
  int cols() const { return data.cols(); }
  int dropout(int i) const { return t_of_row[i]; }
};

IncompleteDataset load_csv(const std::filesystem::path& path, const std::string& na_token = "NA");
IncompleteDataset parse_csv(std::istream& in, const std::string& na_token = "NA");
void write_csv(const IncompleteDataset& ds, const std::filesystem::path& path,
               const std::string& na_token = "NA");
void write_csv(const IncompleteDataset& ds, std::ostream& out, const std::string& na_token = "NA");

/// Column-wise (x - mean) / sd using observed entries and the n-1 denominator.
/// Composes with any standardization already recorded.
IncompleteDataset standardize(const IncompleteDataset& ds);
IncompleteDataset destandardize(const IncompleteDataset& ds);

GroundTruthDataset ampute_mcar(const RowMatrix& complete, double p, std::uint64_t seed);

struct MarOptions {
  double target_fraction = 0.3;
  double slope = 1.0;
};

/// Logistic MAR amputation with one candidate column per row. `target_fraction`
/// is the expected fraction of rows made incomplete.
GroundTruthDataset ampute_mar(const RowMatrix& complete, const MarOptions& options,
                              std::uint64_t seed);

/// Monotone dropout: after each observed variable j < d-1 the row drops out
/// with probability logistic(base + slope * x_j). x_0 is always observed.
GroundTruthDataset ampute_monotone(const RowMatrix& complete, double base, double slope,
                                   std::uint64_t seed);

FoldAssignment make_folds(int n, int folds, std::uint64_t seed);

MonotoneDataset as_monotone(const IncompleteDataset& ds);

}  // namespace moo
