#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ieat/core.hpp"
#include "test_util.hpp"

using namespace ieat;
using ieat::testing::make_set;

TEST(Cosine, KnownValues) {
  const std::vector<double> e1{1, 0, 0}, e2{0, 1, 0};
  EXPECT_EQ(cosine(e1, e1), 1.0);
  EXPECT_EQ(cosine(e1, e2), 0.0);
  // dot = 8, norms 3 and 3
  EXPECT_NEAR(cosine(std::vector<double>{1, 2, 2}, std::vector<double>{2, 1, 2}), 8.0 / 9.0, 1e-15);
}

TEST(Cosine, Errors) {
  const std::vector<double> a{1, 0, 0}, b{1, 0}, z{0, 0, 0};
  try {
    cosine(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    cosine(a, z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(Cosine, ClampedToUnitInterval) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    auto v = ieat::testing::random_vector(rng, 1 + i % 50);
    std::vector<double> w = v;
    std::vector<double> neg = v;
    for (double& c : w) c *= 3.7;
    for (double& c : neg) c *= -0.3;
    const double c = cosine(v, w);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(c, 1.0, 1e-12);
    EXPECT_GE(cosine(v, neg), -1.0);
  }
}

TEST(DiffAssociation, Examples) {
  const auto a = make_set("A", {{1, 0}});
  const auto b = make_set("B", {{0, 1}});
  EXPECT_EQ(diff_association(Embedding{"w", {1, 0}}, a, b), 1.0);
  EXPECT_EQ(diff_association(Embedding{"w", {0, 1}}, a, b), -1.0);

  const auto same = make_set("S", {{0.3, 0.4}, {-1, 2}});
  EXPECT_EQ(diff_association(Embedding{"w", {0.6, -0.1}}, same, same), 0.0);
}

TEST(DiffAssociation, EmptyAttributeSet) {
  ConceptSet empty;
  empty.name = "E";
  empty.dimension = 2;
  try {
    diff_association(Embedding{"w", {1, 0}}, empty, make_set("B", {{0, 1}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyConceptSet);
  }
}

TEST(DiffAssociation, BoundedByTwo) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    auto a = ieat::testing::random_set(rng, "A", 1 + i % 5, 3);
    auto b = ieat::testing::random_set(rng, "B", 1 + i % 3, 3);
    const double d = diff_association(Embedding{"w", ieat::testing::random_vector(rng, 3)}, a, b);
    EXPECT_LE(std::fabs(d), 2.0);
  }
}

TEST(SimilarityMatrix, ShapeAndDiffs) {
  const auto t = make_test_instance("T", make_set("X", {{1, 0}, {1, 0}}), make_set("Y", {{0, 1}, {0, 1}}),
                                    make_set("A", {{1, 0}}), make_set("B", {{0, 1}}));
  const SimilarityMatrix sim = build_similarity_matrix(t);
  EXPECT_EQ(sim.n_total(), 4u);
  EXPECT_EQ(sim.a_block.size(), 4u);
  EXPECT_EQ(sim.b_block.size(), 4u);
  EXPECT_EQ(sim.diff, (std::vector<double>{1, 1, -1, -1}));
  EXPECT_EQ(sim.rows, (std::vector<std::string>{"X0", "X1", "Y0", "Y1"}));
}

TEST(SimilarityMatrix, DiffMatchesDiffAssociation) {
  std::mt19937_64 rng(3);
  const auto t = ieat::testing::random_instance(rng, 5, 4, 6, 9);
  const SimilarityMatrix sim = build_similarity_matrix(t);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(sim.diff[i], diff_association(t.x.members[i], t.a, t.b));
    EXPECT_EQ(sim.diff[5 + i], diff_association(t.y.members[i], t.a, t.b));
  }
  for (double c : sim.a_block) EXPECT_LE(std::fabs(c), 1.0);
  for (double c : sim.b_block) EXPECT_LE(std::fabs(c), 1.0);
}

TEST(SimilarityMatrix, ZeroVectorNamesEmbedding) {
  auto x = make_set("X", {{1, 0}, {0, 0}});
  const auto t = make_test_instance("T9", x, make_set("Y", {{0, 1}, {1, 1}}), make_set("A", {{1, 0}}),
                                    make_set("B", {{0, 1}}));
  try {
    build_similarity_matrix(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
    ASSERT_TRUE(e.where().id);
    EXPECT_EQ(*e.where().id, "X1");
    EXPECT_NE(std::string(e.what()).find("X1"), std::string::npos);
  }
}

TEST(TestInstance, Validation) {
  const auto a = make_set("A", {{1, 0}});
  const auto b = make_set("B", {{0, 1}});
  try {
    make_test_instance("T3", make_set("X", {{1, 0}, {1, 1}}), make_set("Y", {{0, 1}}), a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnequalTargets);
    EXPECT_EQ(*e.where().test_id, "T3");
  }
  try {
    make_test_instance("T", make_set("X", {{1, 0}}), make_set("Y", {{0, 1, 0}}), a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentDimension);
  }
  try {
    make_test_instance("T", make_set("X", {{1, 0}}), make_set("X", {{0, 1}}), a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OverlappingTargets);
  }
}

TEST(ConceptSet, ValidateCatchesEachViolation) {
  auto dup = make_set("D", {{1, 0}, {0, 1}});
  dup.members[1].id = dup.members[0].id;
  EXPECT_THROW(dup.validate(), Error);
  auto zero = make_set("Z", {{1, 0}, {0, 0}});
  EXPECT_THROW(zero.validate(), Error);
  auto nan = make_set("N", {{1, std::nan("")}});
  EXPECT_THROW(nan.validate(), Error);
  // Distinct ids with equal coordinates are allowed.
  make_set("E", {{1, 0}, {1, 0}}).validate();
}

TEST(TestStatistic, Examples) {
  EXPECT_EQ(test_statistic(std::vector<double>{1, 1}, std::vector<double>{-1, -1}), 4.0);
  const std::vector<double> s{0.1, -0.3, 0.25};
  EXPECT_EQ(test_statistic(s, s), 0.0);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto x = ieat::testing::random_vector(rng, 6);
    auto y = ieat::testing::random_vector(rng, 6);
    EXPECT_EQ(test_statistic(x, y), -test_statistic(y, x));
  }
}

TEST(Invariance, ScaleLeavesEverythingUnchanged) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = ieat::testing::random_instance(rng, 4, 3, 5, 8);
    const double k = std::exp(std::uniform_real_distribution<double>(-5, 5)(rng));
    const auto scaled = ieat::testing::transform_instance(t, [k](std::vector<double> v) {
      for (double& c : v) c *= k;
      return v;
    });
    const auto s1 = build_similarity_matrix(t);
    const auto s2 = build_similarity_matrix(scaled);
    for (std::size_t i = 0; i < s1.a_block.size(); ++i) EXPECT_NEAR(s1.a_block[i], s2.a_block[i], 1e-9);
    for (std::size_t i = 0; i < s1.diff.size(); ++i) EXPECT_NEAR(s1.diff[i], s2.diff[i], 1e-9);
    EXPECT_NEAR(association_scores(s1).statistic, association_scores(s2).statistic, 1e-9);
  }
}

TEST(Invariance, RotationChangesCosinesByAtMostTolerance) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const auto t = ieat::testing::random_instance(rng, 4, 4, 4, 12);
    const auto q = ieat::testing::random_orthogonal(rng, 12);
    const auto rotated =
        ieat::testing::transform_instance(t, [&](const std::vector<double>& v) { return ieat::testing::rotate(q, v); });
    const auto s1 = build_similarity_matrix(t);
    const auto s2 = build_similarity_matrix(rotated);
    for (std::size_t i = 0; i < s1.a_block.size(); ++i) EXPECT_NEAR(s1.a_block[i], s2.a_block[i], 1e-6);
    for (std::size_t i = 0; i < s1.b_block.size(); ++i) EXPECT_NEAR(s1.b_block[i], s2.b_block[i], 1e-6);
  }
}

TEST(Antisymmetry, SwappingRolesNegatesStatistic) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = ieat::testing::random_instance(rng, 5, 3, 4, 6);
    const double s = association_scores(build_similarity_matrix(t)).statistic;
    const auto xy = make_test_instance("T", t.y, t.x, t.a, t.b);
    const auto ab = make_test_instance("T", t.x, t.y, t.b, t.a);
    EXPECT_EQ(association_scores(build_similarity_matrix(xy)).statistic, -s);
    EXPECT_EQ(association_scores(build_similarity_matrix(ab)).statistic, -s);
  }
}

TEST(Determinism, RepeatedBuildsAreBitIdentical) {
  std::mt19937_64 rng(31);
  const auto t = ieat::testing::random_instance(rng, 6, 5, 5, 16);
  const auto s1 = build_similarity_matrix(t);
  const auto s2 = build_similarity_matrix(t);
  EXPECT_EQ(s1.a_block, s2.a_block);
  EXPECT_EQ(s1.b_block, s2.b_block);
  EXPECT_EQ(s1.diff, s2.diff);
}
