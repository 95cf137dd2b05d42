#include "moo/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "moo/rng.hpp"

namespace moo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

IncompleteDataset::IncompleteDataset(RowMatrix values, std::vector<Pattern> patterns,
                                     std::vector<std::string> column_names)
    : values_(std::move(values)), patterns_(std::move(patterns)), names_(std::move(column_names)) {
  if (static_cast<Eigen::Index>(patterns_.size()) != values_.rows()) {
    throw DataError("pattern count does not match row count");
  }
  if (values_.cols() < 1 || values_.cols() > kMaxVariables) {
    throw DataError("column count must be in [1, 64]");
  }
  if (names_.empty()) {
    for (int j = 0; j < cols(); ++j) names_.push_back("X" + std::to_string(j + 1));
  }
  if (static_cast<int>(names_.size()) != cols()) {
    throw DataError("column name count does not match column count");
  }
  for (int i = 0; i < rows(); ++i) {
    if (patterns_[i].dim() != cols()) throw DataError("pattern dimension mismatch");
    for (int j = 0; j < cols(); ++j) {
      if (!patterns_[i].test(j)) {
        values_(i, j) = kNaN;
      } else if (!std::isfinite(values_(i, j))) {
        throw DataError("non-finite observed value at row " + std::to_string(i + 1) +
                        ", column " + std::to_string(j + 1));
      }
    }
  }
}

IncompleteDataset IncompleteDataset::from_nan(RowMatrix values,
                                              std::vector<std::string> column_names) {
  std::vector<Pattern> patterns;
  patterns.reserve(values.rows());
  const int d = static_cast<int>(values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    std::uint64_t bits = 0;
    for (int j = 0; j < d; ++j) {
      if (!std::isnan(values(i, j))) bits |= std::uint64_t{1} << j;
    }
    patterns.emplace_back(bits, d);
  }
  return IncompleteDataset(std::move(values), std::move(patterns), std::move(column_names));
}

int IncompleteDataset::contributing_rows() const {
  return static_cast<int>(
      std::count_if(patterns_.begin(), patterns_.end(), [](Pattern r) { return !r.empty(); }));
}

int IncompleteDataset::count_pattern(Pattern r) const {
  return static_cast<int>(std::count(patterns_.begin(), patterns_.end(), r));
}

int IncompleteDataset::observed_count(int j) const {
  return static_cast<int>(std::count_if(patterns_.begin(), patterns_.end(),
                                        [j](Pattern r) { return r.test(j); }));
}

IncompleteDataset IncompleteDataset::subset(std::span<const int> row_ids) const {
  RowMatrix v(row_ids.size(), cols());
  std::vector<Pattern> p;
  p.reserve(row_ids.size());
  for (std::size_t k = 0; k < row_ids.size(); ++k) {
    v.row(k) = values_.row(row_ids[k]);
    p.push_back(patterns_[row_ids[k]]);
  }
  IncompleteDataset out(std::move(v), std::move(p), names_);
  out.standardization_ = standardization_;
  return out;
}

std::vector<int> FoldAssignment::rows_in(int k) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of_row.size()); ++i) {
    if (fold_of_row[i] == k) out.push_back(i);
  }
  return out;
}

std::vector<int> FoldAssignment::rows_not_in(int k) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of_row.size()); ++i) {
    if (fold_of_row[i] != k) out.push_back(i);
  }
  return out;
}

IncompleteDataset parse_csv(std::istream& in, const std::string& na_token) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV: header row required");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> names;
  for (auto& c : split_line(line)) names.push_back(trim(c));
  const int d = static_cast<int>(names.size());
  if (d > kMaxVariables) throw DataError("more than 64 columns are not supported");

  std::vector<double> cells;
  std::vector<Pattern> patterns;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto parts = split_line(line);
    if (static_cast<int>(parts.size()) != d) {
      throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " +
                      std::to_string(d) + " cells, got " + std::to_string(parts.size()));
    }
    std::uint64_t bits = 0;
    for (int j = 0; j < d; ++j) {
      const std::string cell = trim(parts[j]);
      if (cell.empty() || cell == na_token) {
        cells.push_back(kNaN);
        continue;
      }
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw DataError("cannot parse '" + cell + "' at line " + std::to_string(line_no) +
                        ", column " + std::to_string(j + 1));
      }
      if (!std::isfinite(v)) {
        throw DataError("non-finite value '" + cell + "' at line " + std::to_string(line_no) +
                        ", column " + std::to_string(j + 1));
      }
      cells.push_back(v);
      bits |= std::uint64_t{1} << j;
    }
    patterns.emplace_back(bits, d);
  }
  const auto n = static_cast<Eigen::Index>(patterns.size());
  RowMatrix values = Eigen::Map<RowMatrix>(cells.data(), n, d);
  return IncompleteDataset(std::move(values), std::move(patterns), std::move(names));
}

IncompleteDataset load_csv(const std::filesystem::path& path, const std::string& na_token) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_csv(in, na_token);
}

void write_csv(const IncompleteDataset& ds, std::ostream& out, const std::string& na_token) {
  const auto& names = ds.column_names();
  for (int j = 0; j < ds.cols(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  char buf[64];
  for (int i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.cols(); ++j) {
      if (j) out << ',';
      if (!ds.observed(i, j)) {
        out << na_token;
      } else {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, ds.value(i, j));
        out.write(buf, ptr - buf);
      }
    }
    out << '\n';
  }
}

void write_csv(const IncompleteDataset& ds, const std::filesystem::path& path,
               const std::string& na_token) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(ds, out, na_token);
}

IncompleteDataset standardize(const IncompleteDataset& ds) {
  const int d = ds.cols();
  Eigen::VectorXd mean(d), sd(d);
  RowMatrix v = ds.values();
  for (int j = 0; j < d; ++j) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < ds.rows(); ++i) {
      if (ds.observed(i, j)) {
        sum += v(i, j);
        ++count;
      }
    }
    if (count < 2) {
      throw DataError("column '" + ds.column_names()[j] +
                      "' needs at least 2 observed entries to standardize");
    }
    const double m = sum / count;
    double ss = 0.0;
    for (int i = 0; i < ds.rows(); ++i) {
      if (ds.observed(i, j)) ss += (v(i, j) - m) * (v(i, j) - m);
    }
    const double s = std::sqrt(ss / (count - 1));
    if (!(s > 0.0)) throw DataError("column '" + ds.column_names()[j] + "' is constant");
    for (int i = 0; i < ds.rows(); ++i) {
      if (ds.observed(i, j)) v(i, j) = (v(i, j) - m) / s;
    }
    mean(j) = m;
    sd(j) = s;
  }
  IncompleteDataset out(std::move(v), ds.patterns(), ds.column_names());
  if (const auto& prev = ds.standardization()) {
    out.set_standardization(Standardization{prev->mean + prev->sd.cwiseProduct(mean),
                                            prev->sd.cwiseProduct(sd)});
  } else {
    out.set_standardization(Standardization{mean, sd});
  }
  return out;
}

IncompleteDataset destandardize(const IncompleteDataset& ds) {
  const auto& s = ds.standardization();
  if (!s) return ds;
  RowMatrix v = ds.values();
  for (int i = 0; i < ds.rows(); ++i) {
    v.row(i) = v.row(i).cwiseProduct(s->sd.transpose()) + s->mean.transpose();
  }
  return IncompleteDataset(std::move(v), ds.patterns(), ds.column_names());
}

GroundTruthDataset ampute_mcar(const RowMatrix& complete, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("MCAR probability must be in [0, 1)");
  const int d = static_cast<int>(complete.cols());
  std::vector<Pattern> patterns;
  patterns.reserve(complete.rows());
  std::bernoulli_distribution missing(p);
  for (Eigen::Index i = 0; i < complete.rows(); ++i) {
    Rng rng = substream(seed, Stream::amputation, i);
    std::uint64_t bits = 0;
    for (int j = 0; j < d; ++j) {
      if (!missing(rng)) bits |= std::uint64_t{1} << j;
    }
    patterns.emplace_back(bits, d);
  }
  return {complete, IncompleteDataset(complete, std::move(patterns))};
}

GroundTruthDataset ampute_mar(const RowMatrix& complete, const MarOptions& options,
                              std::uint64_t seed) {
  const int n = static_cast<int>(complete.rows());
  const int d = static_cast<int>(complete.cols());
  if (d < 2) throw std::invalid_argument("MAR amputation needs at least 2 columns");
  if (!(options.target_fraction > 0.0 && options.target_fraction < 1.0)) {
    throw std::invalid_argument("MAR target fraction must be in (0, 1)");
  }
  const Eigen::RowVectorXd mean = complete.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((complete.rowwise() - mean).array().square().colwise().sum() / std::max(n - 1, 1)).sqrt();
  if ((sd.array() <= 0.0).any()) throw DataError("MAR amputation: constant column");

  std::vector<int> candidate(n);
  std::vector<double> zbar(n);
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(seed, Stream::amputation, i);
    candidate[i] = std::uniform_int_distribution<int>(0, d - 1)(rng);
    u[i] = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      if (j != candidate[i]) s += (complete(i, j) - mean(j)) / sd(j);
    }
    zbar[i] = s / (d - 1);
  }
  auto expected = [&](double a) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += logistic(a + options.slope * zbar[i]);
    return total / n;
  };
  double lo = -50.0, hi = 50.0;
  if (expected(lo) > options.target_fraction || expected(hi) < options.target_fraction) {
    throw DataError("MAR amputation: calibration failed to bracket the target fraction");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < options.target_fraction ? lo : hi) = mid;
  }
  const double a = 0.5 * (lo + hi);

  std::vector<Pattern> patterns;
  patterns.reserve(n);
  const Pattern full = Pattern::all(d);
  for (int i = 0; i < n; ++i) {
    const bool drop = u[i] < logistic(a + options.slope * zbar[i]);
    patterns.push_back(drop ? mask(full, candidate[i]) : full);
  }
  return {complete, IncompleteDataset(complete, std::move(patterns))};
}

GroundTruthDataset ampute_monotone(const RowMatrix& complete, double base, double slope,
                                   std::uint64_t seed) {
  const int d = static_cast<int>(complete.cols());
  std::vector<Pattern> patterns;
  patterns.reserve(complete.rows());
  for (Eigen::Index i = 0; i < complete.rows(); ++i) {
    Rng rng = substream(seed, Stream::amputation, i);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int t = 1;
    while (t < d && unif(rng) >= logistic(base + slope * complete(i, t - 1))) ++t;
    const std::uint64_t bits = (std::uint64_t{1} << t) - 1;
    patterns.emplace_back(bits, d);
  }
  return {complete, IncompleteDataset(complete, std::move(patterns))};
}

FoldAssignment make_folds(int n, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("need at least 2 folds");
  if (n < folds) throw std::invalid_argument("fewer rows than folds");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = substream(seed, Stream::folds, 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  FoldAssignment out{std::vector<int>(n), folds};
  for (int k = 0; k < n; ++k) out.fold_of_row[perm[k]] = k % folds;
  return out;
}

MonotoneDataset as_monotone(const IncompleteDataset& ds) {
  MonotoneDataset out{ds, std::vector<int>(ds.rows())};
  for (int i = 0; i < ds.rows(); ++i) {
    const Pattern r = ds.pattern(i);
    const int t = r.count();
    const std::uint64_t prefix = t == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << t) - 1;
    if (r.bits() != prefix) {
      throw DataError("row " + std::to_string(i + 1) + " has non-monotone pattern " + r.str());
    }
    out.t_of_row[i] = t;
  }
  return out;
}

}  // namespace moo
