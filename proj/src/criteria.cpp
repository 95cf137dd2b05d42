#include "moo/criteria.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>

#include "moo/parallel.hpp"

namespace moo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::atomic<bool> g_standardize_warned{false};

void check_standardized(const IncompleteDataset& ds) {
  if (!ds.standardization() && !g_standardize_warned.exchange(true))
    warn("evaluating criteria on unstandardized data; risks are not comparable across variables");
}

// Impute x_{row, j} from q(x_j | x_r, r).
struct Task {
  int row = 0;
  int j = 0;
  Pattern r;
};

// The row as the model is allowed to see it: NaN outside r.
Eigen::VectorXd visible(const IncompleteDataset& ds, int i, Pattern r) {
  Eigen::VectorXd x = ds.row(i);
  for (int k = 0; k < ds.cols(); ++k)
    if (!r.test(k)) x(k) = kNaN;
  return x;
}

Pattern prefix(int t, int d) {
  return Pattern(t == 0 ? 0 : (std::uint64_t{1} << t) - 1, d);
}

enum class Scoring { loss, energy };

// Entry-level results on the n x d grid, averaged over repeats.
struct EntryGrid {
  Eigen::MatrixXd value;
  Eigen::MatrixXd internal;
  std::vector<signed char> state;  // 0 untouched, 1 evaluated, -1 skipped
  int d = 0;
  signed char& at(int i, int j) { return state[static_cast<std::size_t>(i) * d + j]; }
  signed char at(int i, int j) const { return state[static_cast<std::size_t>(i) * d + j]; }
};

double energy_pair_scale(const CriterionConfig& cfg) {
  const double M = cfg.M;
  return cfg.energy == EnergyNormalization::printed ? 1.0 / (2.0 * M * (M - 1.0))
                                                    : 1.0 / (M * (M - 1.0));
}

EntryGrid score_entries(const ImputationModel& model, const IncompleteDataset& ds,
                        const std::vector<Task>& tasks, Scoring scoring, const LossFn& loss,
                        const CriterionConfig& cfg) {
  EntryGrid grid;
  grid.d = ds.cols();
  grid.value = Eigen::MatrixXd::Zero(ds.rows(), ds.cols());
  grid.internal = Eigen::MatrixXd::Zero(ds.rows(), ds.cols());
  grid.state.assign(static_cast<std::size_t>(ds.rows()) * ds.cols(), 0);
  const Stream tag = scoring == Scoring::loss ? Stream::moo : Stream::mooen;
  const double pair_scale = scoring == Scoring::energy ? energy_pair_scale(cfg) : 0.0;

  parallel_for(tasks.size(), cfg.threads, [&](std::size_t k) {
    const Task& t = tasks[k];
    if (!model.available(t.j, t.r)) {
      grid.at(t.row, t.j) = -1;
      return;
    }
    const Eigen::VectorXd x = visible(ds, t.row, t.r);
    const double truth = ds.value(t.row, t.j);
    std::vector<double> a(cfg.M), b(scoring == Scoring::energy ? cfg.M : 0);
    double value = 0.0, internal = 0.0;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      Rng rng = substream(cfg.seed, tag, t.row, t.j, rep);
      model.sample_marginal_n(t.j, x, t.r, rng, a);
      if (scoring == Scoring::loss) {
        double s = 0.0;
        for (double v : a) s += loss(truth, v);
        value += s / cfg.M;
      } else {
        model.sample_marginal_n(t.j, x, t.r, rng, b);
        double first = 0.0;
        for (double v : a) first += std::abs(truth - v);
        first /= cfg.M;
        double pairs = 0.0;
        for (int m = 0; m < cfg.M; ++m)
          for (int mp = m + 1; mp < cfg.M; ++mp) pairs += std::abs(a[m] - b[mp]);
        const double spread = pair_scale * pairs;
        value += first - spread;
        internal += spread;
      }
    }
    grid.value(t.row, t.j) = value / cfg.repeats;
    grid.internal(t.row, t.j) = internal / cfg.repeats;
    grid.at(t.row, t.j) = 1;
  });
  return grid;
}

CriterionReport reduce_grid(const EntryGrid& grid, int n_rows, std::string criterion,
                            const ImputationModel& model, const CriterionConfig& cfg) {
  CriterionReport rep;
  rep.criterion = std::move(criterion);
  rep.model = model.name();
  rep.settings = cfg;
  rep.n_rows = n_rows;
  const int n = static_cast<int>(grid.value.rows());
  const int d = grid.d;
  rep.per_variable.assign(d, 0.0);
  rep.per_variable_evaluated.assign(d, 0);
  rep.per_variable_skipped.assign(d, 0);
  std::vector<double> internal(d, 0.0);
  for (int j = 0; j < d; ++j) {
    double s = 0.0, si = 0.0;
    for (int i = 0; i < n; ++i) {
      const signed char st = grid.at(i, j);
      if (st == 1) {
        s += grid.value(i, j);
        si += grid.internal(i, j);
        ++rep.per_variable_evaluated[j];
      } else if (st == -1) {
        ++rep.per_variable_skipped[j];
      }
    }
    rep.per_variable[j] = s / n_rows;
    internal[j] = si / n_rows;
  }
  for (int j = 0; j < d; ++j) {
    rep.total_risk += rep.per_variable[j];
    rep.internal_term += internal[j];
    rep.n_evaluated += rep.per_variable_evaluated[j];
    rep.n_skipped += rep.per_variable_skipped[j];
  }
  if (rep.n_evaluated == 0)
    throw CriterionError(rep.criterion + ": every entry was skipped for model " + rep.model);
  return rep;
}

std::vector<Task> moo_tasks(const IncompleteDataset& ds, int only_j) {
  std::vector<Task> tasks;
  for (int i = 0; i < ds.rows(); ++i) {
    const Pattern r = ds.pattern(i);
    for (int j : r.indices())
      if (only_j < 0 || j == only_j) tasks.push_back({i, j, mask(r, j)});
  }
  return tasks;
}

void require_observed(const IncompleteDataset& ds, int j) {
  if (j < 0 || j >= ds.cols()) throw CriterionError("variable index out of range");
  if (ds.observed_count(j) == 0)
    throw CriterionError("variable " + std::to_string(j + 1) + " is never observed");
}

// Normalized rank of `truth` among the draws.
double rank_of(double truth, const std::vector<double>& draws, bool discrete, Rng& rng) {
  long lt = 0, eq = 0;
  for (double v : draws) {
    if (v < truth) ++lt;
    else if (v == truth) ++eq;
  }
  const double M = static_cast<double>(draws.size());
  if (!discrete) return static_cast<double>(lt + eq) / M;
  return (static_cast<double>(lt) + uniform01(rng) * (1.0 + static_cast<double>(eq))) / (M + 1.0);
}

// candidates[i] lists the tasks a row may be ranked on; one is picked per row
// and repeat, uniformly among those whose conditional is available.
CriterionReport rank_criterion(const ImputationModel& model, const IncompleteDataset& ds,
                               const std::vector<std::vector<Task>>& candidates,
                               std::string criterion, const CriterionConfig& cfg) {
  cfg.validate(2);
  const std::size_t n = candidates.size();
  std::vector<std::vector<double>> ranks(cfg.repeats, std::vector<double>(n, kNaN));
  std::vector<signed char> state(n, 0);

  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const auto& cand = candidates[i];
    if (cand.empty()) return;
    std::vector<const Task*> avail;
    for (const Task& t : cand)
      if (model.available(t.j, t.r)) avail.push_back(&t);
    if (avail.empty()) {
      state[i] = -1;
      return;
    }
    state[i] = 1;
    std::vector<double> draws(cfg.M);
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      const Task* t = avail.front();
      if (cand.size() > 1) {
        Rng pick = substream(cfg.seed, Stream::moort_pick, cand.front().row, 0, rep);
        t = avail[uniform_index(pick, avail.size())];
      }
      Rng rng = substream(cfg.seed, Stream::moort_draw, t->row, t->j, rep);
      model.sample_marginal_n(t->j, visible(ds, t->row, t->r), t->r, rng, draws);
      ranks[rep][i] = rank_of(ds.value(t->row, t->j), draws, cfg.discrete_rank, rng);
    }
  });

  CriterionReport rep;
  rep.criterion = std::move(criterion);
  rep.model = model.name();
  rep.settings = cfg;
  rep.per_variable.assign(ds.cols(), kNaN);
  for (signed char s : state) {
    if (s == 1) ++rep.n_evaluated;
    if (s == -1) ++rep.n_skipped;
  }
  rep.n_rows = static_cast<int>(rep.n_evaluated);
  if (rep.n_evaluated == 0)
    throw CriterionError(rep.criterion + ": no row could be ranked for model " + rep.model);
  double total = 0.0;
  for (int r = 0; r < cfg.repeats; ++r) {
    std::vector<double> s;
    s.reserve(rep.n_evaluated);
    for (std::size_t i = 0; i < n; ++i)
      if (state[i] == 1) s.push_back(ranks[r][i]);
    rep.ranks.insert(rep.ranks.end(), s.begin(), s.end());
    total += uniform_distance(std::move(s), cfg.metric);
  }
  rep.total_risk = total / cfg.repeats;
  return rep;
}

}  // namespace

// --------------------------------------------------------------------------

LossFn loss_from_string(const std::string& s) {
  if (s == "squared") return LossFn{LossKind::squared};
  if (s == "absolute") return LossFn{LossKind::absolute};
  throw std::invalid_argument("unknown loss '" + s + "'");
}

void CriterionConfig::validate(int min_M) const {
  if (M < min_M)
    throw CriterionError("M must be at least " + std::to_string(min_M));
  if (repeats < 1) throw CriterionError("repeats must be at least 1");
  if (threads < 1) throw CriterionError("threads must be at least 1");
}

void write_report_header(std::ostream& out) {
  out << "model,criterion,variable,risk,n_evaluated,n_skipped,M,repeats,seed\n";
}

void write_report_rows(std::ostream& out, const CriterionReport& rep) {
  const auto line = [&](const std::string& var, double risk, long ev, long sk) {
    out << rep.model << ',' << rep.criterion << ',' << var << ',';
    if (std::isnan(risk)) out << "NA";
    else out << risk;
    out << ',' << ev << ',' << sk << ',' << rep.settings.M << ',' << rep.settings.repeats << ','
        << rep.settings.seed << '\n';
  };
  for (std::size_t j = 0; j < rep.per_variable.size(); ++j) {
    if (std::isnan(rep.per_variable[j])) continue;
    const long ev = j < rep.per_variable_evaluated.size() ? rep.per_variable_evaluated[j] : 0;
    const long sk = j < rep.per_variable_skipped.size() ? rep.per_variable_skipped[j] : 0;
    line(std::to_string(j + 1), rep.per_variable[j], ev, sk);
  }
  line("total", rep.total_risk, rep.n_evaluated, rep.n_skipped);
}

double ks_uniform(std::vector<double> s) {
  if (s.empty()) throw CriterionError("no ranks to compare");
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double hi = static_cast<double>(i + 1) / n - s[i];
    const double lo = s[i] - static_cast<double>(i) / n;
    d = std::max({d, hi, lo});
  }
  return d;
}

double cvm_uniform(std::vector<double> s) {
  if (s.empty()) throw CriterionError("no ranks to compare");
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double acc = 1.0 / (12.0 * n);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = s[i] - (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n);
    acc += e * e;
  }
  return acc / n;
}

double uniform_distance(std::vector<double> s, RankMetric metric) {
  return metric == RankMetric::kolmogorov ? ks_uniform(std::move(s)) : cvm_uniform(std::move(s));
}

// --------------------------------------------------------------------------

CriterionReport moo_risk(const ImputationModel& model, const IncompleteDataset& ds,
                         const LossFn& loss, const CriterionConfig& cfg) {
  cfg.validate();
  check_standardized(ds);
  const auto grid = score_entries(model, ds, moo_tasks(ds, -1), Scoring::loss, loss, cfg);
  return reduce_grid(grid, ds.contributing_rows(), "moo", model, cfg);
}

CriterionReport moo_risk_variable(const ImputationModel& model, const IncompleteDataset& ds, int j,
                                  const LossFn& loss, const CriterionConfig& cfg) {
  cfg.validate();
  require_observed(ds, j);
  check_standardized(ds);
  const auto grid = score_entries(model, ds, moo_tasks(ds, j), Scoring::loss, loss, cfg);
  auto rep = reduce_grid(grid, ds.contributing_rows(), "moo_variable", model, cfg);
  rep.variable = j;
  return rep;
}

CriterionReport mko_risk(const ImputationModel& model, const IncompleteDataset& ds, int K,
                         const LossFn& loss, const CriterionConfig& cfg) {
  cfg.validate();
  if (K < 1) throw CriterionError("K must be at least 1");
  check_standardized(ds);
  const int n = ds.rows();
  const int d = ds.cols();
  EntryGrid grid;
  grid.d = d;
  grid.value = Eigen::MatrixXd::Zero(n, d);
  grid.internal = Eigen::MatrixXd::Zero(n, d);
  grid.state.assign(static_cast<std::size_t>(n) * d, 0);
  std::vector<long> row_evals(n, 0);

  parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    const Pattern R = ds.pattern(i);
    if (R.empty()) return;
    std::vector<double> draws(cfg.M);
    for (const Pattern& s : maskable_subsets(R, K)) {
      const Pattern rem = mask(R, s);
      const auto idx = s.indices();
      bool ok = true;
      for (int j : idx) ok = ok && model.available(j, rem);
      if (!ok) {
        for (int j : idx)
          if (grid.at(i, j) == 0) grid.at(i, j) = -1;
        continue;
      }
      const Eigen::VectorXd x = visible(ds, i, rem);
      row_evals[i] += static_cast<long>(idx.size());
      if (idx.size() == 1) {
        const int j = idx.front();
        double value = 0.0;
        for (int rep = 0; rep < cfg.repeats; ++rep) {
          Rng rng = substream(cfg.seed, Stream::moo, i, j, rep);
          model.sample_marginal_n(j, x, rem, rng, draws);
          double acc = 0.0;
          for (double v : draws) acc += loss(ds.value(i, j), v);
          value += acc / cfg.M;
        }
        grid.value(i, j) += value / cfg.repeats;
        grid.at(i, j) = 1;
        continue;
      }
      if (!model.has_joint())
        throw UnsupportedError(model.name() + " cannot sample jointly; MKO with K > 1 needs it");
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(idx.size()));
      for (int rep = 0; rep < cfg.repeats; ++rep) {
        Rng rng = substream(cfg.seed, Stream::mko, i, (std::uint64_t{1} << 32) | s.bits(), rep);
        Eigen::VectorXd part = Eigen::VectorXd::Zero(acc.size());
        for (int m = 0; m < cfg.M; ++m) {
          const Eigen::VectorXd draw = model.sample_joint(s, x, rem, rng);
          for (std::size_t a = 0; a < idx.size(); ++a) part(a) += loss(ds.value(i, idx[a]), draw(a));
        }
        acc += part / cfg.M;
      }
      for (std::size_t a = 0; a < idx.size(); ++a) {
        grid.value(i, idx[a]) += acc(a) / cfg.repeats;
        grid.at(i, idx[a]) = 1;
      }
    }
  });

  auto rep = reduce_grid(grid, ds.contributing_rows(), K >= d ? "mao" : "mko", model, cfg);
  rep.row_evaluations = std::move(row_evals);
  return rep;
}

// --------------------------------------------------------------------------

CriterionReport moort(const ImputationModel& model, const IncompleteDataset& ds,
                      const CriterionConfig& cfg) {
  check_standardized(ds);
  std::vector<std::vector<Task>> cand(ds.rows());
  for (int i = 0; i < ds.rows(); ++i) {
    const Pattern r = ds.pattern(i);
    for (int j : r.indices()) cand[i].push_back({i, j, mask(r, j)});
  }
  return rank_criterion(model, ds, cand, "moort", cfg);
}

CriterionReport moort_variable(const ImputationModel& model, const IncompleteDataset& ds, int j,
                               const CriterionConfig& cfg) {
  require_observed(ds, j);
  check_standardized(ds);
  std::vector<std::vector<Task>> cand(ds.rows());
  for (int i = 0; i < ds.rows(); ++i) {
    const Pattern r = ds.pattern(i);
    if (r.test(j)) cand[i].push_back({i, j, mask(r, j)});
  }
  auto rep = rank_criterion(model, ds, cand, "moort_variable", cfg);
  rep.variable = j;
  return rep;
}

CriterionReport moort_variable_sum(const ImputationModel& model, const IncompleteDataset& ds,
                                   const CriterionConfig& cfg) {
  CriterionReport out;
  out.criterion = "moort_sum";
  out.model = model.name();
  out.settings = cfg;
  out.per_variable.assign(ds.cols(), kNaN);
  out.per_variable_evaluated.assign(ds.cols(), 0);
  out.per_variable_skipped.assign(ds.cols(), 0);
  for (int j = 0; j < ds.cols(); ++j) {
    if (ds.observed_count(j) == 0) continue;
    const auto r = moort_variable(model, ds, j, cfg);
    out.per_variable[j] = r.total_risk;
    out.per_variable_evaluated[j] = r.n_evaluated;
    out.per_variable_skipped[j] = r.n_skipped;
    out.total_risk += r.total_risk;
    out.n_evaluated += r.n_evaluated;
    out.n_skipped += r.n_skipped;
  }
  out.n_rows = ds.contributing_rows();
  return out;
}

CriterionReport mooen(const ImputationModel& model, const IncompleteDataset& ds,
                      const CriterionConfig& cfg) {
  cfg.validate(2);
  check_standardized(ds);
  const auto grid = score_entries(model, ds, moo_tasks(ds, -1), Scoring::energy, LossFn{}, cfg);
  return reduce_grid(grid, ds.contributing_rows(), "mooen", model, cfg);
}

// --------------------------------------------------------------------------

namespace {

CriterionReport monotone_criterion(const ImputationModel& model, const MonotoneDataset& mds,
                                   bool latest_only, MonotoneMode mode, const LossFn& loss,
                                   const CriterionConfig& cfg) {
  const std::string base = latest_only ? "moolc" : "moobl";
  const IncompleteDataset& ds = mds.data;
  const int d = ds.cols();
  int n_rows = 0;
  std::vector<std::vector<Task>> cand(ds.rows());
  for (int i = 0; i < ds.rows(); ++i) {
    const int t = mds.dropout(i);
    if (t < 1) continue;
    ++n_rows;
    if (latest_only) {
      cand[i].push_back({i, t - 1, prefix(t - 1, d)});
    } else {
      for (int j = 0; j < t; ++j) cand[i].push_back({i, j, prefix(j, d)});
    }
  }
  if (n_rows == 0) throw CriterionError(base + ": no row has an observed variable");

  if (mode == MonotoneMode::rank) {
    if (latest_only) return rank_criterion(model, ds, cand, base + "_rank", cfg);
    // Every blocked entry is ranked. Picking one entry per row would weight
    // stage j by 1/T, and T depends on x_j under MAR dropout.
    std::vector<std::vector<Task>> entries;
    for (const auto& c : cand)
      for (const Task& t : c) entries.push_back({t});
    auto rep = rank_criterion(model, ds, entries, base + "_rank", cfg);
    rep.n_rows = n_rows;
    return rep;
  }

  cfg.validate(mode == MonotoneMode::energy ? 2 : 1);
  std::vector<Task> tasks;
  for (const auto& c : cand) tasks.insert(tasks.end(), c.begin(), c.end());
  const Scoring scoring = mode == MonotoneMode::loss ? Scoring::loss : Scoring::energy;
  const auto grid = score_entries(model, ds, tasks, scoring, loss, cfg);
  return reduce_grid(grid, n_rows, base + (mode == MonotoneMode::loss ? "_loss" : "_energy"),
                     model, cfg);
}

}  // namespace

CriterionReport moolc_risk(const ImputationModel& model, const MonotoneDataset& mds,
                           MonotoneMode mode, const LossFn& loss, const CriterionConfig& cfg) {
  return monotone_criterion(model, mds, true, mode, loss, cfg);
}

CriterionReport moobl_risk(const ImputationModel& model, const MonotoneDataset& mds,
                           MonotoneMode mode, const LossFn& loss, const CriterionConfig& cfg) {
  return monotone_criterion(model, mds, false, mode, loss, cfg);
}

}  // namespace moo
