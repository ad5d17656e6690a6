#include <gtest/gtest.h>

#include "ieat/analysis.hpp"
#include "ieat/synth.hpp"
#include "test_util.hpp"

using namespace ieat;

TEST(Generate, DeterministicPerSeed) {
  SynthSpec spec;
  spec.seed = 5;
  spec.bias_strength = 0.3;
  const auto a = generate(spec);
  const auto b = generate(spec);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_EQ(a.a, b.a);
  EXPECT_EQ(a.b, b.b);
  spec.seed = 6;
  EXPECT_NE(generate(spec).x, a.x);
}

TEST(Generate, ShapesAndUnitNorms) {
  SynthSpec spec;
  spec.dimension = 10;
  spec.n_targets = 3;
  spec.n_a = 4;
  spec.n_b = 2;
  const auto t = generate(spec);
  EXPECT_EQ(t.x.size(), 3u);
  EXPECT_EQ(t.y.size(), 3u);
  EXPECT_EQ(t.a.size(), 4u);
  EXPECT_EQ(t.b.size(), 2u);
  for (const ConceptSet* s : {&t.x, &t.y, &t.a, &t.b}) {
    s->validate();
    for (const auto& e : s->members) EXPECT_NEAR(detail::norm(e.vector), 1.0, 1e-12);
  }
}

TEST(Generate, RejectsInvalidSpec) {
  SynthSpec spec;
  spec.bias_strength = 1.5;
  EXPECT_THROW(generate(spec), Error);
  spec.bias_strength = -0.1;
  EXPECT_THROW(generate(spec), Error);
  spec.bias_strength = 0.5;
  spec.noise_scale = 0.0;
  EXPECT_THROW(generate(spec), Error);
  spec.noise_scale = 1.0;
  spec.n_targets = 0;
  EXPECT_THROW(generate(spec), Error);
}

TEST(Oracle, AgreesWithEngine) {
  EngineConfig cfg;
  cfg.permutation.workers = 2;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.n_targets = 2 + seed % 7;
    spec.bias_strength = 0.05 * static_cast<double>(seed % 5);
    spec.noise_scale = 1.0;
    const auto t = generate(spec);
    const auto oracle = oracle_count(t);
    const auto r = run_test(t, cfg);
    ASSERT_EQ(oracle.exceed, r.exceed_count) << "seed " << seed;
    ASSERT_EQ(oracle.total, r.evaluated_count);
    EXPECT_EQ(oracle_pvalue(t), r.p_value);
  }
}

TEST(Oracle, HandPatternGivesOneSixth) {
  using ieat::testing::make_set;
  // Targets alternate between the two attribute poles: diff = [1, -1, 1, -1].
  const auto t = make_test_instance("T", make_set("X", {{1, 0}, {0, 1}}), make_set("Y", {{1, 0}, {0, 1}}),
                                    make_set("A", {{1, 0}}), make_set("B", {{0, 1}}));
  EXPECT_EQ(oracle_pvalue(t), 1.0 / 6.0);
}

TEST(Oracle, RefusesLargeInstances) {
  SynthSpec spec;
  spec.n_targets = 20;
  try {
    oracle_pvalue(generate(spec));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooLarge);
  }
}

TEST(Generate, PlantedSignalIsStrong) {
  EngineConfig cfg;
  cfg.permutation.workers = 1;
  int detected = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    spec.bias_strength = 1.0;
    spec.noise_scale = 0.05;
    spec.n_targets = 8;
    const auto r = run_test(generate(spec), cfg);
    if (r.p_value <= 0.01 && r.effect_size && *r.effect_size >= 1.5) ++detected;
  }
  EXPECT_GE(detected, 95);
}
