#pragma once

// Domain types and the numeric kernel: cosine similarity, differential
// association s(w, A, B), the similarity matrix and the association
// test statistic.
//
// All accumulation is double precision, left to right in member order.
// Nothing here uses compensated or pairwise summation: permutation counting
// relies on every partition statistic being produced by the same sequence of
// floating-point operations as the observed one.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ieat/error.hpp"

namespace ieat {

enum class Role { TargetX, TargetY, AttributeA, AttributeB };

inline const char* to_string(Role role) noexcept {
  switch (role) {
    case Role::TargetX: return "TargetX";
    case Role::TargetY: return "TargetY";
    case Role::AttributeA: return "AttributeA";
    case Role::AttributeB: return "AttributeB";
  }
  return "?";
}

struct Embedding {
  std::string id;
  std::vector<double> vector;

  std::size_t dimension() const noexcept { return vector.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

struct ConceptSet {
  std::string name;
  Role role = Role::TargetX;
  std::size_t dimension = 0;
  std::vector<Embedding> members;

  std::size_t size() const noexcept { return members.size(); }
  bool empty() const noexcept { return members.empty(); }

  /// Checks the structural invariants: non-empty, shared dimension, unique
  /// ids, finite components, non-zero norm. Throws on the first violation.
  void validate() const;

  ConceptSet with_role(Role r) const {
    ConceptSet copy = *this;
    copy.role = r;
    return copy;
  }

  friend bool operator==(const ConceptSet&, const ConceptSet&) = default;
};

struct TestLabels {
  std::string x;
  std::string y;
  std::string a;
  std::string b;
  friend bool operator==(const TestLabels&, const TestLabels&) = default;
};

/// One association test (X, Y, A, B). Construct through make_test_instance,
/// which enforces the equal-target-size and shared-dimension invariants.
struct TestInstance {
  std::string test_id;
  ConceptSet x;
  ConceptSet y;
  ConceptSet a;
  ConceptSet b;
  TestLabels labels;

  std::size_t dimension() const noexcept { return x.dimension; }
};

struct SimilarityMatrix {
  std::vector<std::string> rows;  // X ids, then Y ids
  std::size_t n_x = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::vector<double> a_block;  // row-major rows.size() x n_a
  std::vector<double> b_block;  // row-major rows.size() x n_b
  std::vector<double> diff;     // s(t, A, B) per row

  std::size_t n_total() const noexcept { return rows.size(); }
  double a_at(std::size_t row, std::size_t col) const { return a_block[row * n_a + col]; }
  double b_at(std::size_t row, std::size_t col) const { return b_block[row * n_b + col]; }
  std::span<const double> x_scores() const { return {diff.data(), n_x}; }
  std::span<const double> y_scores() const {
    return {diff.data() + n_x, diff.size() - n_x};
  }
};

struct AssociationScores {
  std::vector<double> x_scores;
  std::vector<double> y_scores;
  double statistic = 0.0;
};

namespace detail {

inline double dot(std::span<const double> u, std::span<const double> v) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

inline double norm(std::span<const double> u) noexcept { return std::sqrt(dot(u, u)); }

inline double mean(std::span<const double> values) noexcept {
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

inline bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace detail

inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error(ErrorCode::DimensionMismatch,
                "cosine over vectors of length " + std::to_string(u.size()) +
                    " and " + std::to_string(v.size()));
  const double nu = detail::norm(u);
  const double nv = detail::norm(v);
  if (!(nu > 0.0) || !(nv > 0.0))
    throw Error(ErrorCode::ZeroVector, "cosine of a zero-norm vector");
  const double c = detail::dot(u, v) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

inline void ConceptSet::validate() const {
  if (members.empty())
    throw Error(ErrorCode::EmptyConceptSet, "concept set '" + name + "' is empty");
  if (dimension == 0)
    throw Error(ErrorCode::DimensionMismatch, "concept set '" + name + "' has dimension 0");
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Embedding& e = members[i];
    ErrorLocation loc{.row = i, .id = e.id};
    if (e.vector.size() != dimension)
      throw Error(ErrorCode::DimensionMismatch,
                  "embedding has " + std::to_string(e.vector.size()) +
                      " components, set '" + name + "' declares " +
                      std::to_string(dimension),
                  loc);
    if (!detail::all_finite(e.vector))
      throw Error(ErrorCode::NonFinite, "embedding has non-finite components", loc);
    if (!(detail::norm(e.vector) > 0.0))
      throw Error(ErrorCode::ZeroVector, "embedding has zero norm", loc);
    if (!seen.insert(e.id).second)
      throw Error(ErrorCode::DuplicateId, "duplicate id in set '" + name + "'", loc);
  }
}

inline TestInstance make_test_instance(std::string test_id, ConceptSet x, ConceptSet y,
                                       ConceptSet a, ConceptSet b, TestLabels labels = {}) {
  ErrorLocation where{.test_id = test_id};
  for (const ConceptSet* s : {&x, &y, &a, &b}) {
    if (s->empty())
      throw Error(ErrorCode::EmptyConceptSet, "concept set '" + s->name + "' is empty", where);
  }
  const std::size_t dim = x.dimension;
  for (const ConceptSet* s : {&y, &a, &b}) {
    if (s->dimension != dim)
      throw Error(ErrorCode::InconsistentDimension,
                  "concept '" + s->name + "' has dimension " + std::to_string(s->dimension) +
                      ", expected " + std::to_string(dim),
                  where);
  }
  if (x.size() != y.size())
    throw Error(ErrorCode::UnequalTargets,
                "|X|=" + std::to_string(x.size()) + " differs from |Y|=" +
                    std::to_string(y.size()),
                where);
  if (x.name == y.name)
    throw Error(ErrorCode::OverlappingTargets,
                "targets X and Y are the same concept '" + x.name + "'", where);
  x.role = Role::TargetX;
  y.role = Role::TargetY;
  a.role = Role::AttributeA;
  b.role = Role::AttributeB;
  if (labels.x.empty()) labels.x = x.name;
  if (labels.y.empty()) labels.y = y.name;
  if (labels.a.empty()) labels.a = a.name;
  if (labels.b.empty()) labels.b = b.name;
  return TestInstance{std::move(test_id), std::move(x), std::move(y),
                      std::move(a),       std::move(b), std::move(labels)};
}

/// mean cos(w, a) over A minus mean cos(w, b) over B.
inline double diff_association(const Embedding& w, const ConceptSet& a_set,
                               const ConceptSet& b_set) {
  if (a_set.empty() || b_set.empty())
    throw Error(ErrorCode::EmptyConceptSet, "attribute set is empty");
  auto mean_cos = [&](const ConceptSet& set) {
    double acc = 0.0;
    for (const Embedding& m : set.members) acc += cosine(w.vector, m.vector);
    return acc / static_cast<double>(set.size());
  };
  return mean_cos(a_set) - mean_cos(b_set);
}

inline SimilarityMatrix build_similarity_matrix(const TestInstance& t) {
  SimilarityMatrix sim;
  sim.n_x = t.x.size();
  sim.n_a = t.a.size();
  sim.n_b = t.b.size();
  if (sim.n_a == 0 || sim.n_b == 0)
    throw Error(ErrorCode::EmptyConceptSet, "attribute set is empty",
                ErrorLocation{.test_id = t.test_id});

  std::vector<const Embedding*> targets;
  targets.reserve(t.x.size() + t.y.size());
  for (const Embedding& e : t.x.members) targets.push_back(&e);
  for (const Embedding& e : t.y.members) targets.push_back(&e);

  auto check = [&](const Embedding& e) {
    ErrorLocation loc{.id = e.id, .test_id = t.test_id};
    if (e.vector.size() != t.dimension())
      throw Error(ErrorCode::DimensionMismatch, "embedding dimension differs from test dimension",
                  loc);
    if (!detail::all_finite(e.vector))
      throw Error(ErrorCode::NonFinite, "embedding has non-finite components", loc);
    if (!(detail::norm(e.vector) > 0.0))
      throw Error(ErrorCode::ZeroVector, "embedding has zero norm", loc);
  };
  for (const Embedding* e : targets) check(*e);
  for (const Embedding& e : t.a.members) check(e);
  for (const Embedding& e : t.b.members) check(e);

  const std::size_t n = targets.size();
  sim.rows.reserve(n);
  sim.a_block.resize(n * sim.n_a);
  sim.b_block.resize(n * sim.n_b);
  sim.diff.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Embedding& w = *targets[i];
    sim.rows.push_back(w.id);
    double sum_a = 0.0;
    for (std::size_t j = 0; j < sim.n_a; ++j) {
      const double c = cosine(w.vector, t.a.members[j].vector);
      sim.a_block[i * sim.n_a + j] = c;
      sum_a += c;
    }
    double sum_b = 0.0;
    for (std::size_t j = 0; j < sim.n_b; ++j) {
      const double c = cosine(w.vector, t.b.members[j].vector);
      sim.b_block[i * sim.n_b + j] = c;
      sum_b += c;
    }
    // Same operation sequence as diff_association.
    sim.diff[i] = sum_a / static_cast<double>(sim.n_a) - sum_b / static_cast<double>(sim.n_b);
  }
  return sim;
}

/// Σ x_scores − Σ y_scores, each summed left to right.
inline double test_statistic(std::span<const double> x_scores, std::span<const double> y_scores) {
  double sx = 0.0;
  for (double v : x_scores) sx += v;
  double sy = 0.0;
  for (double v : y_scores) sy += v;
  return sx - sy;
}

inline double test_statistic(const AssociationScores& scores) {
  return test_statistic(scores.x_scores, scores.y_scores);
}

inline AssociationScores association_scores(const SimilarityMatrix& sim) {
  AssociationScores s;
  s.x_scores.assign(sim.x_scores().begin(), sim.x_scores().end());
  s.y_scores.assign(sim.y_scores().begin(), sim.y_scores().end());
  s.statistic = test_statistic(s.x_scores, s.y_scores);
  return s;
}

/// Returns a copy of `set` with every member scaled to unit L2 norm.
inline ConceptSet l2_normalized(ConceptSet set) {
  for (Embedding& e : set.members) {
    const double n = detail::norm(e.vector);
    if (n > 0.0)
      for (double& v : e.vector) v /= n;
  }
  return set;
}

}  // namespace ieat
