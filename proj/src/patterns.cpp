#include "moo/patterns.hpp"

#include <algorithm>

namespace moo {

namespace {

std::uint64_t full_bits(int d) {
  return d == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << d) - 1);
}

void check_index(Pattern r, int j) {
  if (j < 0 || j >= r.dim()) {
    throw std::out_of_range("variable index " + std::to_string(j) +
                            " out of range for d=" + std::to_string(r.dim()));
  }
}

}  // namespace

Pattern::Pattern(std::uint64_t bits, int d) : bits_(bits), d_(d) {
  if (d < 1 || d > kMaxVariables) {
    throw std::invalid_argument("pattern dimension must be in [1, 64], got " +
                                std::to_string(d));
  }
  if ((bits & ~full_bits(d)) != 0) {
    throw std::invalid_argument("pattern bits exceed dimension");
  }
}

Pattern Pattern::all(int d) { return Pattern(full_bits(d), d); }

Pattern Pattern::parse(std::string_view text) {
  std::uint64_t bits = 0;
  const int d = static_cast<int>(text.size());
  if (d < 1 || d > kMaxVariables) {
    throw std::invalid_argument("pattern string length must be in [1, 64]");
  }
  for (int j = 0; j < d; ++j) {
    if (text[j] == '1') {
      bits |= std::uint64_t{1} << j;
    } else if (text[j] != '0') {
      throw std::invalid_argument("pattern string must contain only 0/1: " +
                                  std::string(text));
    }
  }
  return Pattern(bits, d);
}

bool Pattern::test(int j) const {
  check_index(*this, j);
  return (bits_ >> j) & 1u;
}

Pattern Pattern::complement() const { return Pattern(~bits_ & full_bits(d_), d_); }

std::vector<int> Pattern::indices() const {
  std::vector<int> out;
  out.reserve(count());
  for (std::uint64_t b = bits_; b != 0; b &= b - 1) {
    out.push_back(std::countr_zero(b));
  }
  return out;
}

std::string Pattern::str() const {
  std::string s(d_, '0');
  for (int j = 0; j < d_; ++j) {
    if ((bits_ >> j) & 1u) s[j] = '1';
  }
  return s;
}

Pattern mask(Pattern r, int j) {
  if (!r.test(j)) {
    throw std::logic_error("cannot mask variable " + std::to_string(j) +
                           ": not observed in " + r.str());
  }
  return Pattern(r.bits() & ~(std::uint64_t{1} << j), r.dim());
}

Pattern unmask(Pattern r, int j) {
  if (r.test(j)) {
    throw std::logic_error("cannot unmask variable " + std::to_string(j) +
                           ": already observed in " + r.str());
  }
  return Pattern(r.bits() | (std::uint64_t{1} << j), r.dim());
}

Pattern mask(Pattern r, Pattern s) {
  if (r.dim() != s.dim() || !s.subset_of(r)) {
    throw std::logic_error("cannot mask " + s.str() + " out of " + r.str());
  }
  return Pattern(r.bits() & ~s.bits(), r.dim());
}

PatternSet maskable_subsets(Pattern r, int K) {
  if (K < 1) throw std::invalid_argument("K must be positive");
  PatternSet out;
  // Submask enumeration walks r's submasks in descending order.
  const std::uint64_t R = r.bits();
  for (std::uint64_t s = R; s != 0; s = (s - 1) & R) {
    if (std::popcount(s) <= K) out.emplace_back(s, r.dim());
  }
  std::reverse(out.begin(), out.end());
  return out;
}

PatternSet donor_patterns(Pattern r, int j, int K) {
  if (K < 1) throw std::invalid_argument("K must be positive");
  const Pattern base = unmask(r, j);
  const std::uint64_t free = base.complement().bits();
  const int extra = K - 1;
  PatternSet out;
  // Supersets of base = base | (submask of free); submasks ascend with t.
  std::vector<std::uint64_t> subs;
  for (std::uint64_t t = free;; t = (t - 1) & free) {
    if (std::popcount(t) <= extra) subs.push_back(t);
    if (t == 0) break;
  }
  std::sort(subs.begin(), subs.end());
  out.reserve(subs.size());
  for (auto t : subs) out.emplace_back(base.bits() | t, r.dim());
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (int i = 1; i <= k; ++i) c = c * static_cast<std::uint64_t>(n - k + i) / i;
  return c;
}

std::uint64_t mko_loss_count(int L, int K) {
  std::uint64_t total = 0;
  for (int k = 1; k <= std::min(K, L); ++k) total += binomial(L, k) * k;
  return total;
}

}  // namespace moo
