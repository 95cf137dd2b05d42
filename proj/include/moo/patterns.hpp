#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace moo {

inline constexpr int kMaxVariables = 64;

/// Response pattern over d variables. Bit j set means variable j is observed.
///
/// Text form is a big-endian bit string with variable 1 leftmost, so the
/// pattern with only the third of three variables observed prints as "001".
class Pattern {
 public:
  Pattern() = default;
  Pattern(std::uint64_t bits, int d);

  static Pattern none(int d) { return Pattern(0, d); }
  static Pattern all(int d);
  static Pattern parse(std::string_view text);

  std::uint64_t bits() const { return bits_; }
  int dim() const { return d_; }
  int count() const { return std::popcount(bits_); }
  bool empty() const { return bits_ == 0; }
  bool full() const { return bits_ == all(d_).bits_; }

  bool test(int j) const;
  Pattern complement() const;

  /// Partial order: every variable observed here is observed in `other`.
  bool subset_of(Pattern other) const { return (bits_ & ~other.bits_) == 0; }

  /// Observed variable indices in increasing order.
  std::vector<int> indices() const;

  std::string str() const;

  friend bool operator==(Pattern a, Pattern b) = default;
  friend auto operator<=>(Pattern a, Pattern b) {
    if (auto c = a.d_ <=> b.d_; c != 0) return c;
    return a.bits_ <=> b.bits_;
  }

 private:
  std::uint64_t bits_ = 0;
  int d_ = 0;
};

/// Distinct patterns of equal dimension, ascending by integer value.
using PatternSet = std::vector<Pattern>;

/// r with variable j cleared. Throws if j is out of range or not observed.
Pattern mask(Pattern r, int j);

/// r with variable j set. Throws if j is out of range or already observed.
Pattern unmask(Pattern r, int j);

/// Removes every variable in `s` from `r`; `s` must be a subpattern of `r`.
Pattern mask(Pattern r, Pattern s);

/// All nonzero subpatterns of r with at most K observed variables.
PatternSet maskable_subsets(Pattern r, int K);

/// All patterns s >= unmask(r, j) with |s| - |r| <= K.
PatternSet donor_patterns(Pattern r, int j, int K);

/// Number of per-variable loss evaluations for a row with L observed
/// variables when masking every subset of size at most K.
std::uint64_t mko_loss_count(int L, int K);

std::uint64_t binomial(int n, int k);

}  // namespace moo
