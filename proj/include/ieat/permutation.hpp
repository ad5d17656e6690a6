#pragma once

// Permutation-test p-values over equal-sized partitions of X ∪ Y.
//
// p = #{partitions with statistic strictly greater than observed} / #partitions,
// with the observed partition counted in the denominator. Exact mode walks
// every partition; Monte Carlo mode samples uniform partitions with a
// per-sample seed, so neither mode depends on the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ieat/combinatorics.hpp"
#include "ieat/core.hpp"
#include "ieat/error.hpp"
#include "ieat/rng.hpp"

namespace ieat {

enum class PermutationMode { Exact, MonteCarlo };

/// strict: count{>} / N (the default). ge_plus_one: (count{>=} + 1) / (N + 1).
enum class Tail { Strict, GePlusOne };

inline const char* to_string(PermutationMode m) noexcept {
  return m == PermutationMode::Exact ? "exact" : "monte_carlo";
}
inline const char* to_string(Tail t) noexcept {
  return t == Tail::Strict ? "strict" : "ge_plus_one";
}

inline constexpr std::uint64_t kDefaultExactThreshold = 1'000'000;
inline constexpr std::uint64_t kDefaultSampleCount = 10'000;
inline constexpr std::uint64_t kDefaultSeed = 42;

struct PermutationConfig {
  std::uint64_t exact_threshold = kDefaultExactThreshold;
  std::uint64_t sample_count = kDefaultSampleCount;
  std::uint64_t seed = kDefaultSeed;
  Tail tail = Tail::Strict;
  unsigned workers = 0;  // 0: hardware concurrency
};

struct PermutationPlan {
  std::uint32_t n_total = 0;
  std::uint32_t n_x = 0;
  PermutationMode mode = PermutationMode::Exact;
  std::optional<std::uint64_t> partition_count;  // nullopt on 64-bit overflow
  std::uint64_t sample_count = kDefaultSampleCount;
  std::uint64_t seed = kDefaultSeed;
  std::uint64_t stream_key = 0;  // derived from (seed, test_id)
  std::uint64_t exact_threshold = kDefaultExactThreshold;
  Tail tail = Tail::Strict;
  unsigned workers = 0;
};

struct PermutationOutcome {
  double p_value = 0.0;
  std::uint64_t exceed_count = 0;
  std::uint64_t tie_count = 0;
  std::uint64_t evaluated_count = 0;
  double observed_statistic = 0.0;
  PermutationMode mode = PermutationMode::Exact;
  Tail tail = Tail::Strict;
  std::optional<double> standard_error;  // Monte Carlo only
};

inline unsigned resolve_workers(unsigned requested) noexcept {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

inline PermutationPlan make_plan(std::uint32_t n_total, std::uint32_t n_x,
                                 const PermutationConfig& config,
                                 std::string_view test_id = {}) {
  if (n_x == 0 || n_x >= n_total)
    throw Error(ErrorCode::InvalidConfig, "permutation plan requires 0 < n_x < n_total");
  PermutationPlan plan;
  plan.n_total = n_total;
  plan.n_x = n_x;
  plan.partition_count = binomial(n_total, n_x);
  plan.exact_threshold = config.exact_threshold;
  plan.sample_count = config.sample_count;
  plan.seed = config.seed;
  plan.stream_key = derive_seed(config.seed, test_id);
  plan.tail = config.tail;
  plan.workers = config.workers;
  plan.mode = (plan.partition_count && *plan.partition_count <= config.exact_threshold)
                  ? PermutationMode::Exact
                  : PermutationMode::MonteCarlo;
  return plan;
}

namespace detail {

struct Counts {
  std::uint64_t exceed = 0;
  std::uint64_t ties = 0;
};

/// Splits [0, total) into at most `workers` contiguous ranges, runs
/// fn(first, last) -> Counts on each, and sums the integer counts.
template <class Fn>
Counts parallel_count(std::uint64_t total, unsigned workers, Fn&& fn) {
  workers = static_cast<unsigned>(std::min<std::uint64_t>(std::max(workers, 1u), total));
  if (workers <= 1) return fn(std::uint64_t{0}, total);
  std::vector<Counts> partial(workers);
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const std::uint64_t chunk = total / workers;
  const std::uint64_t extra = total % workers;
  std::uint64_t first = 0;
  for (unsigned w = 0; w < workers; ++w) {
    const std::uint64_t last = first + chunk + (w < extra ? 1 : 0);
    pool.emplace_back([&, w, first, last] { partial[w] = fn(first, last); });
    first = last;
  }
  pool.clear();  // joins
  Counts out;
  for (const Counts& c : partial) {
    out.exceed += c.exceed;
    out.ties += c.ties;
  }
  return out;
}

inline double finish_pvalue(Tail tail, std::uint64_t exceed, std::uint64_t ties,
                            std::uint64_t evaluated) {
  if (tail == Tail::Strict)
    return static_cast<double>(exceed) / static_cast<double>(evaluated);
  return static_cast<double>(exceed + ties + 1) / static_cast<double>(evaluated + 1);
}

}  // namespace detail

/// Statistic of one partition: Σ diff over `in_x` rows minus Σ diff over the
/// rest, both in row order. For the observed partition this reproduces
/// test_statistic exactly.
inline double partition_statistic(std::span<const double> diff, std::span<const std::uint8_t> in_x) {
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (in_x[i]) sx += diff[i];
  }
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (!in_x[i]) sy += diff[i];
  }
  return sx - sy;
}

inline double observed_statistic(const SimilarityMatrix& sim) {
  return test_statistic(sim.x_scores(), sim.y_scores());
}

inline PermutationOutcome exact_pvalue(const SimilarityMatrix& sim, const PermutationPlan& plan) {
  if (plan.mode != PermutationMode::Exact)
    throw Error(ErrorCode::InvalidConfig, "exact_pvalue called with a Monte Carlo plan");
  if (!plan.partition_count)
    throw Error(ErrorCode::Overflow, "partition count exceeds the 64-bit counting range");
  if (plan.n_total != sim.n_total() || plan.n_x != sim.n_x)
    throw Error(ErrorCode::InvalidConfig, "plan does not match similarity matrix shape");

  const std::uint64_t total = *plan.partition_count;
  const double observed = observed_statistic(sim);
  const std::span<const double> diff(sim.diff);
  const std::uint32_t n = plan.n_total;
  const std::uint32_t k = plan.n_x;

  auto count_range = [&](std::uint64_t first, std::uint64_t last) {
    detail::Counts c;
    std::vector<std::uint8_t> in_x(n, 0);
    for_each_combination(n, k, first, last, [&](const Combination& combo) {
      std::fill(in_x.begin(), in_x.end(), std::uint8_t{0});
      for (std::uint32_t idx : combo) in_x[idx] = 1;
      const double s = partition_statistic(diff, in_x);
      if (s > observed)
        ++c.exceed;
      else if (s == observed)
        ++c.ties;
    });
    return c;
  };
  const detail::Counts counts =
      detail::parallel_count(total, resolve_workers(plan.workers), count_range);

  PermutationOutcome out;
  out.exceed_count = counts.exceed;
  out.tie_count = counts.ties;
  out.evaluated_count = total;
  out.observed_statistic = observed;
  out.mode = PermutationMode::Exact;
  out.tail = plan.tail;
  out.p_value = detail::finish_pvalue(plan.tail, counts.exceed, counts.ties, total);
  return out;
}

/// Fills `in_x` with a uniformly random n_x-subset drawn from the generator
/// seeded for one sample. `scratch` must have size n_total.
inline void sample_partition(std::uint64_t seed, std::uint32_t n_x,
                             std::span<std::uint32_t> scratch, std::span<std::uint8_t> in_x) {
  SplitMix64 gen(seed);
  std::iota(scratch.begin(), scratch.end(), 0u);
  const std::size_t n = scratch.size();
  for (std::uint32_t j = 0; j < n_x; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, n - 1);
    std::swap(scratch[j], scratch[pick(gen)]);
  }
  std::fill(in_x.begin(), in_x.end(), std::uint8_t{0});
  for (std::uint32_t j = 0; j < n_x; ++j) in_x[scratch[j]] = 1;
}

inline PermutationOutcome mc_pvalue(const SimilarityMatrix& sim, const PermutationPlan& plan) {
  if (plan.mode != PermutationMode::MonteCarlo)
    throw Error(ErrorCode::InvalidConfig, "mc_pvalue called with an exact plan");
  if (plan.sample_count == 0)
    throw Error(ErrorCode::InvalidConfig, "sample_count must be at least 1");
  if (plan.n_total != sim.n_total() || plan.n_x != sim.n_x)
    throw Error(ErrorCode::InvalidConfig, "plan does not match similarity matrix shape");

  const double observed = observed_statistic(sim);
  const std::span<const double> diff(sim.diff);
  const std::uint32_t n = plan.n_total;

  auto count_range = [&](std::uint64_t first, std::uint64_t last) {
    detail::Counts c;
    std::vector<std::uint32_t> scratch(n);
    std::vector<std::uint8_t> in_x(n);
    for (std::uint64_t i = first; i < last; ++i) {
      sample_partition(stream_seed(plan.stream_key, i), plan.n_x, scratch, in_x);
      const double s = partition_statistic(diff, in_x);
      if (s > observed)
        ++c.exceed;
      else if (s == observed)
        ++c.ties;
    }
    return c;
  };
  const detail::Counts counts =
      detail::parallel_count(plan.sample_count, resolve_workers(plan.workers), count_range);

  PermutationOutcome out;
  out.exceed_count = counts.exceed;
  out.tie_count = counts.ties;
  out.evaluated_count = plan.sample_count;
  out.observed_statistic = observed;
  out.mode = PermutationMode::MonteCarlo;
  out.tail = plan.tail;
  out.p_value = detail::finish_pvalue(plan.tail, counts.exceed, counts.ties, plan.sample_count);
  const double p = out.p_value;
  out.standard_error = std::sqrt(p * (1.0 - p) / static_cast<double>(plan.sample_count));
  return out;
}

/// Builds the plan from `config` and runs whichever mode it selects.
inline PermutationOutcome pvalue(const SimilarityMatrix& sim, const PermutationConfig& config,
                                 std::string_view test_id = {}) {
  const PermutationPlan plan = make_plan(static_cast<std::uint32_t>(sim.n_total()),
                                         static_cast<std::uint32_t>(sim.n_x), config, test_id);
  return plan.mode == PermutationMode::Exact ? exact_pvalue(sim, plan) : mc_pvalue(sim, plan);
}

}  // namespace ieat
