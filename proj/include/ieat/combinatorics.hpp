#pragma once

// k-subsets of {0, ..., n-1} in lexicographic order, with ranking through the
// combinatorial number system so a rank range can be handed to each worker.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ieat/error.hpp"

namespace ieat {

/// n choose k, or nullopt when the value does not fit in 64 bits.
inline std::optional<std::uint64_t> binomial(std::uint64_t n, std::uint64_t k) noexcept {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned __int128 acc = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // acc * (n - k + i) / i stays integral at every step.
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(acc);
}

inline std::uint64_t binomial_or_throw(std::uint64_t n, std::uint64_t k) {
  auto c = binomial(n, k);
  if (!c)
    throw Error(ErrorCode::Overflow, "C(" + std::to_string(n) + ", " + std::to_string(k) +
                                         ") exceeds the 64-bit counting range");
  return *c;
}

using Combination = std::vector<std::uint32_t>;

/// The rank-th k-subset of {0..n-1} in lexicographic order (rank is 0-based).
inline Combination unrank_combination(std::uint64_t rank, std::uint32_t n, std::uint32_t k) {
  const std::uint64_t total = binomial_or_throw(n, k);
  if (rank >= total)
    throw Error(ErrorCode::InvalidConfig, "rank " + std::to_string(rank) +
                                              " out of range for C(" + std::to_string(n) +
                                              ", " + std::to_string(k) + ")");
  Combination out;
  out.reserve(k);
  std::uint32_t candidate = 0;
  for (std::uint32_t pos = 0; pos < k; ++pos) {
    while (true) {
      // Subsets that put `candidate` at this position.
      const std::uint64_t block = *binomial(n - 1 - candidate, k - 1 - pos);
      if (rank < block) break;
      rank -= block;
      ++candidate;
    }
    out.push_back(candidate);
    ++candidate;
  }
  return out;
}

/// Lexicographic rank of a strictly increasing k-subset of {0..n-1}.
inline std::uint64_t rank_combination(const Combination& c, std::uint32_t n) {
  const auto k = static_cast<std::uint32_t>(c.size());
  std::uint64_t rank = 0;
  std::uint32_t start = 0;
  for (std::uint32_t pos = 0; pos < k; ++pos) {
    for (std::uint32_t v = start; v < c[pos]; ++v) rank += *binomial(n - 1 - v, k - 1 - pos);
    start = c[pos] + 1;
  }
  return rank;
}

/// Advances to the lexicographic successor; false once the last subset is passed.
inline bool next_combination(Combination& c, std::uint32_t n) noexcept {
  const auto k = static_cast<std::uint32_t>(c.size());
  std::uint32_t i = k;
  while (i > 0) {
    --i;
    if (c[i] < n - k + i) {
      ++c[i];
      for (std::uint32_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

/// Calls visit(const Combination&) for ranks [first, last) of the n-choose-k
/// enumeration, in order.
template <class Visitor>
void for_each_combination(std::uint32_t n, std::uint32_t k, std::uint64_t first,
                          std::uint64_t last, Visitor&& visit) {
  if (first >= last) return;
  Combination c = unrank_combination(first, n, k);
  for (std::uint64_t r = first; r < last; ++r) {
    visit(static_cast<const Combination&>(c));
    if (r + 1 < last) next_combination(c, n);
  }
}

/// Every k-subset of {0..n-1}, lexicographic. Requires 0 < k < n.
inline std::vector<Combination> enumerate_partitions(std::uint32_t n_total, std::uint32_t n_x) {
  if (n_x == 0 || n_x >= n_total)
    throw Error(ErrorCode::InvalidConfig, "enumerate_partitions requires 0 < n_x < n_total");
  const std::uint64_t total = binomial_or_throw(n_total, n_x);
  std::vector<Combination> out;
  out.reserve(total);
  for_each_combination(n_total, n_x, 0, total, [&](const Combination& c) { out.push_back(c); });
  return out;
}

}  // namespace ieat
