#include <algorithm>
#include <atomic>

#include "moo/models.hpp"

namespace moo {

namespace {
std::atomic<bool> g_fallback_warned{false};
}

HotDeckModel::HotDeckModel(IncompleteDataset donors, HotDeckVariant variant, int k_neighbors)
    : donors_(std::move(donors)), variant_(variant), k_(k_neighbors) {
  if (donors_.rows() == 0) throw DataError("hot deck needs at least one donor row");
  if (k_ < 1) throw std::invalid_argument("k_neighbors must be at least 1");
}

HotDeckModel fit_hot_deck(const IncompleteDataset& train, HotDeckVariant variant, int k_neighbors) {
  return HotDeckModel(train, variant, k_neighbors);
}

bool HotDeckModel::available(int j, Pattern) const { return donors_.observed_count(j) > 0; }

std::vector<int> HotDeckModel::donor_pool(Pattern targets, Eigen::Ref<const Eigen::VectorXd> x,
                                          Pattern r) const {
  std::vector<int> pool;
  for (int i = 0; i < donors_.rows(); ++i)
    if (targets.subset_of(donors_.pattern(i))) pool.push_back(i);
  if (pool.empty())
    throw DataError("no donor observes all of " + targets.str());
  if (variant_ == HotDeckVariant::random || r.empty()) return pool;

  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(pool.size());
  for (int i : pool) {
    const std::uint64_t shared = r.bits() & donors_.pattern(i).bits();
    if (shared == 0) continue;
    double ss = 0.0;
    int c = 0;
    for (int k : Pattern(shared, r.dim()).indices()) {
      const double diff = x(k) - donors_.value(i, k);
      ss += diff * diff;
      ++c;
    }
    ranked.emplace_back(ss / c, i);
  }
  if (ranked.empty()) {
    if (!g_fallback_warned.exchange(true))
      warn("nn hot deck: no donor shares a coordinate with the query; using random donors");
    return pool;
  }
  const std::size_t k = std::min<std::size_t>(k_, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end());
  std::vector<int> nearest(k);
  for (std::size_t a = 0; a < k; ++a) nearest[a] = ranked[a].second;
  return nearest;
}

double HotDeckModel::sample_marginal(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                     Rng& rng) const {
  double v;
  sample_marginal_n(j, x, r, rng, std::span<double>(&v, 1));
  return v;
}

void HotDeckModel::sample_marginal_n(int j, Eigen::Ref<const Eigen::VectorXd> x, Pattern r,
                                     Rng& rng, std::span<double> out) const {
  const auto pool = donor_pool(Pattern(std::uint64_t{1} << j, dim()), x, r);
  for (double& v : out) v = donors_.value(pool[uniform_index(rng, pool.size())], j);
}

Eigen::VectorXd HotDeckModel::sample_joint(Pattern s, Eigen::Ref<const Eigen::VectorXd> x,
                                           Pattern r, Rng& rng) const {
  const auto pool = donor_pool(s, x, r);
  const int donor = pool[uniform_index(rng, pool.size())];
  const auto idx = s.indices();
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) out(a) = donors_.value(donor, idx[a]);
  return out;
}

}  // namespace moo
