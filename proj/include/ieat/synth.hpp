#pragma once

// Synthetic association tests with a planted bias, and a brute-force
// reference p-value used to cross-check the permutation engine.
//
// Geometry: a random unit bias axis u and a unit base direction v ⟂ u.
//   A_i = u + e,   B_i = -u + e,   X_i = v + βu + e,   Y_i = v - βu + e
// with e isotropic Gaussian of expected norm `noise_scale`, then every vector
// is scaled to unit length. β = 0 makes X and Y exchangeable.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ieat/core.hpp"
#include "ieat/error.hpp"
#include "ieat/rng.hpp"

namespace ieat {

struct SynthSpec {
  std::size_t dimension = 32;
  std::size_t n_targets = 8;  // |X| = |Y|
  std::size_t n_a = 8;
  std::size_t n_b = 8;
  double bias_strength = 0.0;  // β in [0, 1]
  double noise_scale = 0.5;
  std::uint64_t seed = 42;
  std::string test_id = "S1";

  void validate() const {
    if (dimension < 2) throw Error(ErrorCode::InvalidConfig, "synthetic dimension must be >= 2");
    if (n_targets < 1 || n_a < 1 || n_b < 1)
      throw Error(ErrorCode::InvalidConfig, "synthetic set sizes must be >= 1");
    if (!(bias_strength >= 0.0 && bias_strength <= 1.0))
      throw Error(ErrorCode::InvalidConfig, "bias strength must lie in [0, 1]");
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale))
      throw Error(ErrorCode::InvalidConfig, "noise scale must be a positive finite number");
  }
};

inline TestInstance generate(const SynthSpec& spec) {
  spec.validate();
  SplitMix64 gen(derive_seed(spec.seed, "synth:" + spec.test_id));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t dim = spec.dimension;

  auto random_unit = [&] {
    std::vector<double> v(dim);
    double n = 0.0;
    do {
      for (double& c : v) c = gauss(gen);
      n = detail::norm(v);
    } while (!(n > 0.0));
    for (double& c : v) c /= n;
    return v;
  };
  const std::vector<double> axis = random_unit();
  std::vector<double> base = random_unit();
  const double proj = detail::dot(base, axis);
  for (std::size_t i = 0; i < dim; ++i) base[i] -= proj * axis[i];
  const double base_norm = detail::norm(base);
  for (double& c : base) c /= base_norm;

  const double per_component = spec.noise_scale / std::sqrt(static_cast<double>(dim));
  auto make_set = [&](const std::string& name, Role role, std::size_t count, double base_weight,
                      double axis_weight) {
    ConceptSet set;
    set.name = name;
    set.role = role;
    set.dimension = dim;
    for (std::size_t k = 0; k < count; ++k) {
      Embedding e;
      e.id = name + "_" + std::to_string(k);
      e.vector.resize(dim);
      double n = 0.0;
      do {
        for (std::size_t i = 0; i < dim; ++i)
          e.vector[i] = base_weight * base[i] + axis_weight * axis[i] + per_component * gauss(gen);
        n = detail::norm(e.vector);
      } while (!(n > 0.0));
      for (double& c : e.vector) c /= n;
      set.members.push_back(std::move(e));
    }
    return set;
  };

  const double beta = spec.bias_strength;
  ConceptSet a = make_set("A", Role::AttributeA, spec.n_a, 0.0, 1.0);
  ConceptSet b = make_set("B", Role::AttributeB, spec.n_b, 0.0, -1.0);
  ConceptSet x = make_set("X", Role::TargetX, spec.n_targets, 1.0, beta);
  ConceptSet y = make_set("Y", Role::TargetY, spec.n_targets, 1.0, -beta);
  return make_test_instance(spec.test_id, std::move(x), std::move(y), std::move(a), std::move(b));
}

inline constexpr std::uint64_t kOracleMaxPartitions = 200'000;

struct OracleCount {
  std::uint64_t exceed = 0;
  std::uint64_t total = 0;
};

/// Reference permutation count. Recomputes every cosine and walks all
/// bitmasks of |X ∪ Y| bits, keeping those with |X| bits set. Deliberately
/// naive and independent of the engine's similarity matrix and enumerator.
inline OracleCount oracle_count(const TestInstance& t) {
  const std::size_t n_x = t.x.size();
  const std::size_t n = n_x + t.y.size();
  if (n > 62) throw Error(ErrorCode::TooLarge, "oracle supports at most 62 targets");
  {
    // C(n, n_x) computed by the multiplicative formula in floating point is
    // exact well past the cap.
    double c = 1.0;
    for (std::size_t i = 1; i <= n_x; ++i) c = c * static_cast<double>(n - n_x + i) / static_cast<double>(i);
    if (c > static_cast<double>(kOracleMaxPartitions))
      throw Error(ErrorCode::TooLarge, "more than 200000 partitions", ErrorLocation{.test_id = t.test_id});
  }

  auto cos_naive = [](const std::vector<double>& p, const std::vector<double>& q) {
    double pq = 0.0, pp = 0.0, qq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      pq += p[i] * q[i];
      pp += p[i] * p[i];
      qq += q[i] * q[i];
    }
    return pq / std::sqrt(pp * qq);
  };
  std::vector<const std::vector<double>*> targets;
  for (const auto& e : t.x.members) targets.push_back(&e.vector);
  for (const auto& e : t.y.members) targets.push_back(&e.vector);
  std::vector<double> assoc(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ma = 0.0;
    for (const auto& a : t.a.members) ma += cos_naive(*targets[i], a.vector);
    double mb = 0.0;
    for (const auto& b : t.b.members) mb += cos_naive(*targets[i], b.vector);
    assoc[i] = ma / static_cast<double>(t.a.size()) - mb / static_cast<double>(t.b.size());
  }

  auto stat = [&](std::uint64_t mask) {
    double in = 0.0, out = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if ((mask >> i) & 1u)
        in += assoc[i];
      else
        out += assoc[i];
    }
    return in - out;
  };
  const std::uint64_t observed_mask = (std::uint64_t{1} << n_x) - 1;
  const double observed = stat(observed_mask);

  OracleCount result;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != n_x) continue;
    ++result.total;
    if (stat(mask) > observed) ++result.exceed;
  }
  return result;
}

inline double oracle_pvalue(const TestInstance& t) {
  const OracleCount c = oracle_count(t);
  return static_cast<double>(c.exceed) / static_cast<double>(c.total);
}

}  // namespace ieat
