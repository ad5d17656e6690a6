#pragma once

// Effect sizes, test and suite execution, and the sweep aggregations:
// threshold curves, significance counts, per-layer profiles and |d|
// distribution summaries.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ieat/core.hpp"
#include "ieat/error.hpp"
#include "ieat/permutation.hpp"

namespace ieat {

enum class SigmaConvention { Population, Sample };

inline const char* to_string(SigmaConvention s) noexcept {
  return s == SigmaConvention::Population ? "population" : "sample";
}

enum class EffectState { Ok, DegenerateVariance };

inline const char* to_string(EffectState s) noexcept {
  return s == EffectState::Ok ? "ok" : "degenerate_variance";
}

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr double kDefaultGridMin = 1e-4;
inline constexpr double kDefaultGridMax = 1e-1;
inline constexpr std::size_t kDefaultGridPoints = 200;

struct EngineConfig {
  PermutationConfig permutation;
  SigmaConvention sigma = SigmaConvention::Population;
  std::vector<double> alphas{kDefaultAlpha};
  std::string model_tag;
  std::optional<int> layer;
};

struct TestResult {
  std::string test_id;
  std::string model_tag;
  std::optional<int> layer;
  TestLabels labels;
  EffectState effect_state = EffectState::Ok;
  std::optional<double> effect_size;  // absent iff effect_state != Ok
  double p_value = 0.0;
  double statistic = 0.0;
  PermutationMode mode = PermutationMode::Exact;
  std::uint64_t exceed_count = 0;
  std::uint64_t tie_count = 0;
  std::uint64_t evaluated_count = 0;
  std::optional<double> standard_error;
  std::uint64_t seed = 0;
  SigmaConvention sigma = SigmaConvention::Population;
  Tail tail = Tail::Strict;
  std::map<double, bool> significant_at;

  friend bool operator==(const TestResult&, const TestResult&) = default;
};

struct TestFailure {
  std::size_t index = 0;
  std::string test_id;
  ErrorCode code = ErrorCode::InvalidConfig;
  std::string message;

  friend bool operator==(const TestFailure&, const TestFailure&) = default;
};

struct SuiteRun {
  std::vector<TestResult> results;  // suite order, failed tests omitted
  std::vector<TestFailure> failures;
};

struct ThresholdCurve {
  std::string model_tag;
  std::vector<std::pair<double, std::size_t>> points;

  friend bool operator==(const ThresholdCurve&, const ThresholdCurve&) = default;
};

struct EffectSummary {
  std::string model_tag;
  std::size_t n = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  double mean = 0.0;

  friend bool operator==(const EffectSummary&, const EffectSummary&) = default;
};

struct LayerProfile {
  std::string model_tag;
  double alpha = kDefaultAlpha;
  std::vector<std::pair<int, std::size_t>> counts;

  friend bool operator==(const LayerProfile&, const LayerProfile&) = default;
};

namespace detail {

// Pooled scores in a canonical order (by magnitude, then value) so that
// relabeling X<->Y or negating every score gives a bit-identical σ.
inline std::vector<double> canonical_pool(std::span<const double> x, std::span<const double> y) {
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::sort(pooled.begin(), pooled.end(), [](double l, double r) {
    const double al = std::fabs(l);
    const double ar = std::fabs(r);
    return al != ar ? al < ar : l < r;
  });
  return pooled;
}

}  // namespace detail

/// Standard deviation of the pooled scores; divides by n (population) or n-1.
inline double pooled_sigma(std::span<const double> x, std::span<const double> y,
                           SigmaConvention sigma = SigmaConvention::Population) {
  const std::vector<double> pooled = detail::canonical_pool(x, y);
  const double n = static_cast<double>(pooled.size());
  const double mu = detail::mean(pooled);
  double ss = 0.0;
  for (double v : pooled) ss += (v - mu) * (v - mu);
  const double denom = sigma == SigmaConvention::Population ? n : n - 1.0;
  if (!(denom > 0.0)) return 0.0;
  return std::sqrt(ss / denom);
}

/// (mean x − mean y) / σ(x ∪ y). Throws DegenerateVariance when σ is zero.
inline double effect_size(std::span<const double> x_scores, std::span<const double> y_scores,
                          SigmaConvention sigma = SigmaConvention::Population) {
  if (x_scores.empty() || y_scores.empty())
    throw Error(ErrorCode::EmptyInput, "effect size needs non-empty score lists");
  const double s = pooled_sigma(x_scores, y_scores, sigma);
  if (!(s > 0.0))
    throw Error(ErrorCode::DegenerateVariance, "pooled association scores have zero variance");
  return (detail::mean(x_scores) - detail::mean(y_scores)) / s;
}

inline double effect_size(const AssociationScores& scores,
                          SigmaConvention sigma = SigmaConvention::Population) {
  return effect_size(scores.x_scores, scores.y_scores, sigma);
}

inline std::map<double, bool> significance_map(double p_value, const std::vector<double>& alphas) {
  std::map<double, bool> out;
  for (double a : alphas) out[a] = p_value <= a;
  return out;
}

inline TestResult run_test(const TestInstance& t, const EngineConfig& config) {
  try {
    const SimilarityMatrix sim = build_similarity_matrix(t);
    const PermutationOutcome perm = pvalue(sim, config.permutation, t.test_id);

    TestResult r;
    r.test_id = t.test_id;
    r.model_tag = config.model_tag;
    r.layer = config.layer;
    r.labels = t.labels;
    r.statistic = perm.observed_statistic;
    r.p_value = perm.p_value;
    r.mode = perm.mode;
    r.exceed_count = perm.exceed_count;
    r.tie_count = perm.tie_count;
    r.evaluated_count = perm.evaluated_count;
    r.standard_error = perm.standard_error;
    r.seed = config.permutation.seed;
    r.sigma = config.sigma;
    r.tail = perm.tail;
    r.significant_at = significance_map(r.p_value, config.alphas);
    try {
      r.effect_size = effect_size(sim.x_scores(), sim.y_scores(), config.sigma);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateVariance) throw;
      r.effect_state = EffectState::DegenerateVariance;
    }
    return r;
  } catch (const Error& e) {
    throw e.with_test(t.test_id);
  }
}

/// Runs every test; a failing test becomes a TestFailure record and the rest
/// still run. Tests are spread over the worker budget; results do not depend
/// on it.
inline SuiteRun run_suite(const std::vector<TestInstance>& suite, const EngineConfig& config) {
  if (suite.empty()) throw Error(ErrorCode::InvalidConfig, "suite contains no tests");

  const unsigned budget = resolve_workers(config.permutation.workers);
  const unsigned outer = std::min<unsigned>(budget, static_cast<unsigned>(suite.size()));
  EngineConfig inner = config;
  inner.permutation.workers = std::max(1u, budget / outer);

  std::vector<std::optional<TestResult>> results(suite.size());
  std::vector<std::optional<TestFailure>> failures(suite.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < suite.size(); i = next++) {
      try {
        results[i] = run_test(suite[i], inner);
      } catch (const Error& e) {
        failures[i] = TestFailure{i, suite[i].test_id, e.code(), e.what()};
      } catch (const std::exception& e) {
        failures[i] = TestFailure{i, suite[i].test_id, ErrorCode::InvalidConfig, e.what()};
      }
    }
  };
  if (outer <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < outer; ++w) pool.emplace_back(work);
  }

  SuiteRun run;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    if (results[i]) run.results.push_back(std::move(*results[i]));
    if (failures[i]) run.failures.push_back(std::move(*failures[i]));
  }
  return run;
}

inline std::size_t count_significant(const std::vector<TestResult>& results, double alpha) {
  return static_cast<std::size_t>(std::count_if(
      results.begin(), results.end(), [alpha](const TestResult& r) { return r.p_value <= alpha; }));
}

/// `points` thresholds spaced evenly in log10 between lo and hi, endpoints exact.
inline std::vector<double> log_grid(double lo = kDefaultGridMin, double hi = kDefaultGridMax,
                                    std::size_t points = kDefaultGridPoints) {
  if (!(lo > 0.0) || !(hi < 1.0) || !(lo < hi))
    throw Error(ErrorCode::InvalidConfig, "threshold grid needs 0 < lo < hi < 1");
  if (points < 2) throw Error(ErrorCode::InvalidConfig, "threshold grid needs at least 2 points");
  const double llo = std::log10(lo);
  const double lhi = std::log10(hi);
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    grid[i] = std::pow(10.0, llo + t * (lhi - llo));
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

inline ThresholdCurve threshold_curve(const std::vector<TestResult>& results,
                                      const std::vector<double>& grid,
                                      std::string model_tag = {}) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] < 1.0))
      throw Error(ErrorCode::InvalidConfig, "threshold grid values must lie in (0, 1)");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw Error(ErrorCode::InvalidConfig, "threshold grid must be strictly increasing");
  }
  if (model_tag.empty() && !results.empty()) model_tag = results.front().model_tag;
  ThresholdCurve curve{std::move(model_tag), {}};
  curve.points.reserve(grid.size());
  for (double pt : grid) curve.points.emplace_back(pt, count_significant(results, pt));
  return curve;
}

inline LayerProfile layer_profile(const std::map<int, std::vector<TestResult>>& per_layer,
                                  double alpha = kDefaultAlpha, std::string model_tag = {}) {
  if (per_layer.empty()) throw Error(ErrorCode::EmptyInput, "layer profile needs at least one layer");
  LayerProfile profile{std::move(model_tag), alpha, {}};
  for (const auto& [layer, results] : per_layer) {
    if (profile.model_tag.empty() && !results.empty()) profile.model_tag = results.front().model_tag;
    profile.counts.emplace_back(layer, count_significant(results, alpha));
  }
  return profile;
}

namespace detail {

inline double sorted_median(std::span<const double> v) {
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace detail

/// Box-plot statistics of |d|. Quartiles are Tukey hinges; whiskers span the
/// full range. Tests without a finite effect size are skipped.
inline EffectSummary abs_effect_summary(const std::vector<TestResult>& results,
                                        std::string model_tag = {}) {
  std::vector<double> values;
  for (const TestResult& r : results) {
    if (r.effect_size && std::isfinite(*r.effect_size)) values.push_back(std::fabs(*r.effect_size));
  }
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "no finite effect sizes to summarize");
  if (model_tag.empty()) model_tag = results.front().model_tag;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const std::size_t half = (n + 1) / 2;  // median shared by both halves when n is odd
  const std::span<const double> all(values);

  EffectSummary s;
  s.model_tag = std::move(model_tag);
  s.n = n;
  s.median = detail::sorted_median(all);
  s.q1 = detail::sorted_median(all.first(half));
  s.q3 = detail::sorted_median(all.last(half));
  s.whisker_low = values.front();
  s.whisker_high = values.back();
  s.mean = detail::mean(all);
  return s;
}

}  // namespace ieat
