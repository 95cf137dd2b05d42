#include "moo/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include <json.hpp>

#include "moo/rng.hpp"

namespace moo {

namespace {

constexpr double kOddsMin = 1e-6;
constexpr double kOddsMax = 1e6;

void check_target(const IncompleteDataset& ds, int target) {
  if (target < 0 || target >= ds.cols()) throw std::invalid_argument("target column out of range");
}

std::map<std::uint64_t, int> pattern_counts(const IncompleteDataset& ds) {
  std::map<std::uint64_t, int> counts;
  for (const Pattern& p : ds.patterns()) ++counts[p.bits()];
  return counts;
}

NuisanceEntry blank_entry(Pattern r, const std::map<std::uint64_t, int>& counts, int target) {
  NuisanceEntry e;
  e.r = r;
  const auto a = counts.find(r.bits());
  const auto b = counts.find(unmask(r, target).bits());
  e.n_missing = a == counts.end() ? 0 : a->second;
  e.n_donor = b == counts.end() ? 0 : b->second;
  return e;
}

template <class Model>
void require_keys(const IncompleteDataset& ds, const Model& m, const char* what) {
  for (const Pattern& r : nuisance_keys(ds, m.target()))
    if (!m.contains(r))
      throw std::invalid_argument(std::string(what) + " has no entry for pattern " + r.str());
}

}  // namespace

std::vector<Pattern> nuisance_keys(const IncompleteDataset& ds, int target) {
  check_target(ds, target);
  std::set<Pattern> keys;
  for (const Pattern& p : ds.patterns()) keys.insert(p.test(target) ? mask(p, target) : p);
  return {keys.begin(), keys.end()};
}

// --------------------------------------------------------------------------

double OddsModel::odds(Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const {
  if (const auto c = constant_.find(r); c != constant_.end()) return c->second;
  const auto it = entries_.find(r);
  if (it == entries_.end()) throw std::out_of_range("no odds model for pattern " + r.str());
  const NuisanceEntry& e = it->second;
  if (e.n_missing == 0) return 0.0;
  const double eta = e.coef.dot(features(e.basis, x, r));
  return std::clamp(std::exp(std::min(eta, 50.0)), kOddsMin, kOddsMax);
}

OddsModel OddsModel::constant(const IncompleteDataset& ds, int target, double value) {
  OddsModel m;
  m.target_ = target;
  for (const Pattern& r : nuisance_keys(ds, target)) {
    m.constant_[r] = value;
    NuisanceEntry e;
    e.r = r;
    m.entries_[r] = e;
  }
  return m;
}

double OutcomeModel::mean(Eigen::Ref<const Eigen::VectorXd> x, Pattern r) const {
  const auto it = entries_.find(r);
  if (it == entries_.end()) throw std::out_of_range("no outcome model for pattern " + r.str());
  const NuisanceEntry& e = it->second;
  if (e.coef.size() == 0) return 0.0;
  return e.coef.dot(features(e.basis, x, r));
}

OutcomeModel OutcomeModel::zero(const IncompleteDataset& ds, int target) {
  std::map<Pattern, NuisanceEntry> entries;
  for (const Pattern& r : nuisance_keys(ds, target)) {
    NuisanceEntry e;
    e.r = r;
    entries[r] = e;
  }
  return OutcomeModel(target, std::move(entries));
}

// --------------------------------------------------------------------------

OddsModel fit_odds(const IncompleteDataset& ds, const NuisanceOptions& options) {
  const int t = options.target;
  const auto counts = pattern_counts(ds);
  std::map<Pattern, NuisanceEntry> entries;
  for (const Pattern& r : nuisance_keys(ds, t)) {
    NuisanceEntry e = blank_entry(r, counts, t);
    if (e.n_missing > 0 && e.n_donor == 0)
      throw DataError("pattern " + r.str() + " has rows but no donor rows with the target observed");
    const Pattern donor = unmask(r, t);
    Basis basis = r.empty() ? Basis::intercept : options.basis;
    if (e.n_missing < options.min_rows || e.n_donor < options.min_rows) {
      if (e.n_missing > 0)
        warn("odds for pattern " + r.str() + ": too few rows, using the empirical ratio");
      basis = Basis::intercept;
      e.fallback = true;
    }
    e.basis = basis;
    if (e.n_missing == 0) {
      e.coef = Eigen::VectorXd::Zero(1);
      e.basis = Basis::intercept;
      entries.emplace(r, std::move(e));
      continue;
    }
    if (basis == Basis::intercept) {
      e.coef = Eigen::VectorXd::Constant(1, std::log(static_cast<double>(e.n_missing) / e.n_donor));
      entries.emplace(r, std::move(e));
      continue;
    }
    std::vector<int> rows;
    for (int i = 0; i < ds.rows(); ++i)
      if (ds.pattern(i) == r || ds.pattern(i) == donor) rows.push_back(i);
    const int p = basis_size(basis, r.count());
    Eigen::MatrixXd X(rows.size(), p);
    Eigen::VectorXd y(rows.size());
    for (std::size_t a = 0; a < rows.size(); ++a) {
      X.row(a) = features(basis, ds.row(rows[a]), r).transpose();
      y(a) = ds.pattern(rows[a]) == r ? 1.0 : 0.0;
    }
    const LogisticFit fit = fit_logistic(X, y);
    e.coef = fit.coef;
    e.separated = fit.separated;
    if (fit.separated) warn("odds for pattern " + r.str() + ": separation, odds will be clipped");
    entries.emplace(r, std::move(e));
  }
  return OddsModel(t, std::move(entries));
}

OutcomeModel fit_outcome(const IncompleteDataset& ds, const NuisanceOptions& options) {
  const int t = options.target;
  const auto counts = pattern_counts(ds);
  std::map<Pattern, NuisanceEntry> entries;
  for (const Pattern& r : nuisance_keys(ds, t)) {
    NuisanceEntry e = blank_entry(r, counts, t);
    if (e.n_donor == 0) {
      if (e.n_missing > 0)
        throw DataError("pattern " + r.str() + " has rows but no donor rows with the target observed");
      entries.emplace(r, std::move(e));
      continue;
    }
    const Pattern donor = unmask(r, t);
    Basis basis = r.empty() ? Basis::intercept : options.basis;
    if (e.n_donor < basis_size(basis, r.count()) + 1) {
      warn("outcome for pattern " + r.str() + ": too few donor rows, using the donor mean");
      basis = Basis::intercept;
      e.fallback = true;
    }
    e.basis = basis;
    std::vector<int> rows;
    for (int i = 0; i < ds.rows(); ++i)
      if (ds.pattern(i) == donor) rows.push_back(i);
    const int p = basis_size(basis, r.count());
    Eigen::MatrixXd X(rows.size(), p);
    Eigen::VectorXd y(rows.size());
    for (std::size_t a = 0; a < rows.size(); ++a) {
      X.row(a) = features(basis, ds.row(rows[a]), r).transpose();
      y(a) = ds.value(rows[a], t);
    }
    const LinearFit fit = fit_ols(X, y);
    if (fit.ridged) warn("outcome for pattern " + r.str() + ": rank-deficient design, ridge applied");
    e.coef = fit.coef;
    entries.emplace(r, std::move(e));
  }
  return OutcomeModel(t, std::move(entries));
}

// --------------------------------------------------------------------------

namespace {

enum class Kind { mr, ipw, ra };

MeanEstimate estimate(const IncompleteDataset& ds, const OddsModel* odds,
                      const OutcomeModel* outcome, Kind kind) {
  const int t = odds ? odds->target() : outcome->target();
  check_target(ds, t);
  if (odds) require_keys(ds, *odds, "odds model");
  if (outcome) require_keys(ds, *outcome, "outcome model");
  const int n = ds.rows();
  if (n == 0) throw DataError("cannot estimate a mean from an empty dataset");

  MeanEstimate est;
  est.estimator = kind == Kind::mr ? "mr" : (kind == Kind::ipw ? "ipw" : "ra");
  std::map<Pattern, PatternContribution> parts;
  for (const Pattern& r : nuisance_keys(ds, t)) parts[r].r = r;
  std::vector<double> phi(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const Pattern R = ds.pattern(i);
    const auto x = ds.row(i);
    if (R.test(t)) {
      const double x1 = ds.value(i, t);
      phi[i] = x1;
      est.observed_part += x1;
      const Pattern r = mask(R, t);
      auto& part = parts[r];
      ++part.n_donor;
      const double o = odds ? odds->odds(x, r) : 0.0;
      const double m = outcome ? outcome->mean(x, r) : 0.0;
      part.weighted_outcome += o * x1;
      part.cross += o * m;
      part.weighted_residual += o * (x1 - m);
      if (kind == Kind::mr) phi[i] += o * (x1 - m);
      if (kind == Kind::ipw) phi[i] += o * x1;
    } else {
      auto& part = parts[R];
      ++part.n_missing;
      const double m = outcome ? outcome->mean(x, R) : 0.0;
      part.regression += m;
      if (kind != Kind::ipw) phi[i] = m;
    }
  }
  double total = 0.0;
  for (double v : phi) total += v;
  est.mu_hat = total / n;
  est.observed_part /= n;
  for (auto& [r, part] : parts) {
    part.weighted_residual /= n;
    part.regression /= n;
    part.weighted_outcome /= n;
    part.cross /= n;
    est.per_pattern.push_back(part);
  }
  est.eif.resize(n);
  for (int i = 0; i < n; ++i) est.eif[i] = phi[i] - est.mu_hat;
  return est;
}

}  // namespace

MeanEstimate mr_estimate(const IncompleteDataset& ds, const OddsModel& odds,
                         const OutcomeModel& outcome) {
  if (odds.target() != outcome.target()) throw std::invalid_argument("nuisance targets differ");
  return estimate(ds, &odds, &outcome, Kind::mr);
}

MeanEstimate ipw_estimate(const IncompleteDataset& ds, const OddsModel& odds) {
  return estimate(ds, &odds, nullptr, Kind::ipw);
}

MeanEstimate ra_estimate(const IncompleteDataset& ds, const OutcomeModel& outcome) {
  return estimate(ds, nullptr, &outcome, Kind::ra);
}

void write_estimate_header(std::ostream& out) { out << "estimator,mu_hat,per_pattern_json,seed\n"; }

void write_estimate_row(std::ostream& out, const MeanEstimate& e, std::uint64_t seed) {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : e.per_pattern)
    parts.push_back({{"r", p.r.str()},
                     {"n_missing", p.n_missing},
                     {"n_donor", p.n_donor},
                     {"weighted_residual", p.weighted_residual},
                     {"regression", p.regression},
                     {"weighted_outcome", p.weighted_outcome}});
  std::string text = parts.dump();
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += "\"\"";
    else quoted += c;
  }
  quoted += '"';
  out << e.estimator << ',' << e.mu_hat << ',' << quoted << ',' << seed << '\n';
}

IncompleteDataset robustness_scenario(int n, std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("sample size must be positive");
  RowMatrix values(n, 2);
  std::vector<Pattern> patterns(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(seed, Stream::synthetic, static_cast<std::uint64_t>(i));
    const double x2 = standard_normal(rng);
    const double x1 = 1.0 + x2 + 0.5 * x2 * x2 + standard_normal(rng);
    const bool r2 = uniform01(rng) >= 0.3;
    const double p_miss = r2 ? 1.0 / (1.0 + std::exp(0.5 - 0.25 * x2 * x2)) : 0.3;
    const bool r1 = uniform01(rng) >= p_miss;
    patterns[i] = Pattern((r1 ? 1u : 0u) | (r2 ? 2u : 0u), 2);
    values(i, 0) = r1 ? x1 : std::numeric_limits<double>::quiet_NaN();
    values(i, 1) = r2 ? x2 : std::numeric_limits<double>::quiet_NaN();
  }
  return IncompleteDataset(std::move(values), std::move(patterns), {"x1", "x2"});
}

NuisanceBases robustness_bases(const std::string& misspecify) {
  NuisanceBases b;
  if (misspecify == "none") return b;
  if (misspecify == "odds") b.odds = Basis::linear;
  else if (misspecify == "outcome") b.outcome = Basis::linear;
  else if (misspecify == "both") b.odds = b.outcome = Basis::linear;
  else throw std::invalid_argument("misspecify must be none, odds, outcome or both");
  return b;
}

}  // namespace moo
