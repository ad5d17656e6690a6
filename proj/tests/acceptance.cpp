// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runs entirely on synthetic embeddings.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>

#include "ieat/ieat.hpp"
#include "test_util.hpp"

using namespace ieat;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

EngineConfig engine(unsigned workers = 0) {
  EngineConfig cfg;
  cfg.permutation.workers = workers;
  return cfg;
}

int cli(const std::string& args) {
  const std::string cmd = std::string("'") + IEAT_CLI_PATH + "' " + args + " >/dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// ---------------------------------------------------------------------------

Verdict oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> beta(0.0, 1.0);
  std::uniform_real_distribution<double> noise(0.2, 2.0);
  int mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    SynthSpec spec;
    spec.seed = 10'000 + static_cast<std::uint64_t>(i);
    spec.n_targets = 2 + static_cast<std::size_t>(i % 7);
    spec.n_a = 1 + static_cast<std::size_t>(i % 5);
    spec.n_b = 1 + static_cast<std::size_t>((i / 5) % 5);
    spec.dimension = 4 + static_cast<std::size_t>(i % 13);
    spec.bias_strength = beta(rng);
    spec.noise_scale = noise(rng);
    const TestInstance t = generate(spec);
    const auto oracle = oracle_count(t);
    const TestResult r = run_test(t, engine());
    if (r.exceed_count != oracle.exceed || r.evaluated_count != oracle.total || r.p_value != oracle_pvalue(t))
      ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 60.0, fmt("%d/500 mismatches, %.2f s (limit 60 s)", mismatches, secs)};
}

Verdict hand_cases() {
  using ieat::testing::make_set;
  const auto e1 = std::vector<double>{1, 0};
  const auto e2 = std::vector<double>{0, 1};
  // Targets sitting on the attribute poles give diff = [1, 1, -1, -1].
  const auto split = make_test_instance("H1", make_set("X", {e1, e1}), make_set("Y", {e2, e2}), make_set("A", {e1}),
                                        make_set("B", {e2}));
  // Alternating poles give diff = [1, -1, 1, -1].
  const auto alt = make_test_instance("H2", make_set("X", {e1, e2}), make_set("Y", {e1, e2}), make_set("A", {e1}),
                                      make_set("B", {e2}));
  const TestResult r1 = run_test(split, engine());
  const TestResult r2 = run_test(alt, engine());
  const bool ok = r1.exceed_count == 0 && r1.evaluated_count == 6 && r1.p_value == 0.0 && r1.effect_size &&
                  *r1.effect_size == 2.0 && r2.exceed_count == 1 && r2.evaluated_count == 6 &&
                  r2.p_value == 1.0 / 6.0;
  return {ok, fmt("p=%llu/%llu d=%.17g; p=%llu/%llu", static_cast<unsigned long long>(r1.exceed_count),
                  static_cast<unsigned long long>(r1.evaluated_count), r1.effect_size.value_or(NAN),
                  static_cast<unsigned long long>(r2.exceed_count),
                  static_cast<unsigned long long>(r2.evaluated_count))};
}

Verdict effect_bound() {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  int degenerate = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + static_cast<std::size_t>(i % 15);
    const auto t = ieat::testing::random_instance(rng, n, 1 + i % 4, 1 + i % 6, 2 + i % 20);
    const auto sim = build_similarity_matrix(t);
    try {
      worst = std::max(worst, std::fabs(effect_size(sim.x_scores(), sim.y_scores(), SigmaConvention::Population)));
    } catch (const Error&) {
      ++degenerate;
    }
  }
  return {worst <= 2.0 + 1e-12 && degenerate == 0,
          fmt("max |d| = %.17g over 1000 instances (%d degenerate)", worst, degenerate)};
}

Verdict monte_carlo_consistency() {
  std::mt19937_64 rng(41);
  int within = 0;
  double worst_z = 0.0;
  for (int i = 0; i < 100; ++i) {
    // n_x = 8: 12,870 partitions, small enough to enumerate as the reference.
    const auto t = ieat::testing::random_instance(rng, 8, 3, 3, 6, "M" + std::to_string(i));
    const auto sim = build_similarity_matrix(t);
    PermutationConfig exact_cfg;
    PermutationConfig mc_cfg;
    mc_cfg.exact_threshold = 0;
    mc_cfg.sample_count = 10'000;
    mc_cfg.seed = 1000 + static_cast<std::uint64_t>(i);
    const double p = pvalue(sim, exact_cfg, t.test_id).p_value;
    const double p_hat = pvalue(sim, mc_cfg, t.test_id).p_value;
    const double bound = 3.0 * std::sqrt(p * (1.0 - p) / 10'000.0);
    if (std::fabs(p_hat - p) <= bound) ++within;
    if (bound > 0) worst_z = std::max(worst_z, std::fabs(p_hat - p) / (bound / 3.0));
  }
  return {within >= 99, fmt("%d/100 within 3 SE (need >= 99), max |z| = %.2f", within, worst_z)};
}

Verdict invariance() {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  double worst_d = 0.0, worst_p = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t dim = 3 + static_cast<std::size_t>(i % 10);
    const auto t = ieat::testing::random_instance(rng, 2 + i % 5, 1 + i % 4, 1 + i % 3, dim);
    const TestResult base = run_test(t, engine());

    const double c = scale(rng);
    const auto scaled =
        ieat::testing::transform_instance(t, [&](std::vector<double> v) {
          for (double& x : v) x *= c;
          return v;
        });
    const auto q = ieat::testing::random_orthogonal(rng, dim);
    const auto rotated = ieat::testing::transform_instance(t, [&](const std::vector<double>& v) {
      return ieat::testing::rotate(q, v);
    });
    for (const TestInstance* other : {&scaled, &rotated}) {
      const TestResult r = run_test(*other, engine());
      worst_d = std::max(worst_d, std::fabs(*r.effect_size - *base.effect_size));
      worst_p = std::max(worst_p, std::fabs(r.p_value - base.p_value));
    }
  }
  return {worst_d <= 1e-6 && worst_p <= 1e-6, fmt("max |dd| = %.3g, max |dp| = %.3g", worst_d, worst_p)};
}

Verdict null_calibration() {
  int hits = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    SynthSpec spec;
    spec.bias_strength = 0.0;
    spec.seed = 5000 + s;
    if (run_test(generate(spec), engine()).p_value <= 0.05) ++hits;
  }
  const double frac = hits / 1000.0;
  return {frac >= 0.03 && frac <= 0.07, fmt("fraction p <= 0.05: %.3f (need [0.03, 0.07])", frac)};
}

// Moderate noise keeps d away from its bound of 2 so the trend stays visible.
SynthSpec planted(double beta, std::uint64_t seed) {
  SynthSpec spec;
  spec.bias_strength = beta;
  spec.seed = seed;
  spec.dimension = 16;
  spec.noise_scale = 2.0;
  return spec;
}

Verdict planted_signal() {
  std::vector<double> betas, means;
  for (int b = 0; b <= 10; ++b) {
    double acc = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const TestResult r = run_test(generate(planted(b / 10.0, 700 + s)), engine());
      acc += r.effect_size.value_or(0.0);
    }
    betas.push_back(b / 10.0);
    means.push_back(acc / 20.0);
  }
  bool strict = true;
  for (std::size_t i = 1; i < means.size(); ++i) strict = strict && means[i] > means[i - 1];
  const double rho = ieat::testing::spearman(betas, means);

  int detected = 0;
  for (std::uint64_t s = 0; s < 100; ++s)
    if (run_test(generate(planted(1.0, 900 + s)), engine()).p_value <= 0.01) ++detected;

  std::ostringstream trend;
  trend.precision(3);
  for (double m : means) trend << ' ' << m;
  return {strict && rho >= 0.95 && detected >= 95,
          fmt("strictly increasing=%s, Spearman=%.4f, beta=1 detected %d/100 at 0.01; mean d:%s",
              strict ? "yes" : "no", rho, detected, trend.str().c_str())};
}

Verdict determinism() {
  const auto dir = ieat::testing::temp_dir("acceptance_det");
  const auto suite = ieat::testing::table1_fixture(dir, 5);
  // Every fixture test has C(8,4) = 70 partitions; a threshold of 10 forces sampling.
  const std::string base = "run --suite " + q(suite) + " --seed 42 --exact-threshold 10 --samples 2000 --out ";
  bool ok = cli(base + q(dir / "a.json")) == 0 && cli(base + q(dir / "b.json")) == 0 &&
            cli(base + q(dir / "w1.json") + " --workers 1") == 0 && cli(base + q(dir / "w8.json") + " --workers 8") == 0;
  const std::string a = detail::read_file_bytes(dir / "a.json");
  const bool identical = ok && a == detail::read_file_bytes(dir / "b.json");
  const bool cli_workers = ok && a == detail::read_file_bytes(dir / "w1.json") &&
                           a == detail::read_file_bytes(dir / "w8.json");

  std::mt19937_64 rng(61);
  int divergent = 0;
  for (int i = 0; i < 20; ++i) {
    const bool exact = i % 2 == 0;
    const auto t = ieat::testing::random_instance(rng, exact ? 8 : 20, 4, 4, 10, "D" + std::to_string(i));
    std::uint64_t counts[3];
    const unsigned workers[3] = {1, 2, 8};
    for (int w = 0; w < 3; ++w) {
      EngineConfig cfg = engine(workers[w]);
      cfg.permutation.sample_count = 5000;
      counts[w] = run_test(t, cfg).exceed_count;
    }
    if (counts[0] != counts[1] || counts[0] != counts[2]) ++divergent;
  }
  return {identical && cli_workers && divergent == 0,
          fmt("documents identical=%s, CLI 1/8 workers identical=%s, %d/20 instances with worker-dependent counts",
              identical ? "yes" : "no", cli_workers ? "yes" : "no", divergent)};
}

Verdict performance() {
  std::mt19937_64 rng(71);
  const auto small = build_similarity_matrix(ieat::testing::random_instance(rng, 8, 8, 8, 64));
  const auto large = build_similarity_matrix(ieat::testing::random_instance(rng, 40, 8, 8, 64));
  PermutationConfig exact_cfg;
  PermutationConfig mc_cfg;
  mc_cfg.sample_count = 10'000;

  pvalue(small, exact_cfg, "warm");
  auto t0 = Clock::now();
  const auto e = pvalue(small, exact_cfg, "P1");
  const double exact_s = seconds_since(t0);
  t0 = Clock::now();
  const auto m = pvalue(large, mc_cfg, "P2");
  const double mc_s = seconds_since(t0);
  const bool ok = e.mode == PermutationMode::Exact && e.evaluated_count == 12'870 &&
                  m.mode == PermutationMode::MonteCarlo && m.evaluated_count == 10'000 && exact_s < 0.1 && mc_s < 1.0;
  return {ok, fmt("exact C(16,8) %.4f s (limit 0.1), Monte Carlo 10000 @ 40+40 %.4f s (limit 1)", exact_s, mc_s)};
}

Verdict structure() {
  // Target X, target Y, attribute A, attribute B per test.
  const std::vector<std::array<const char*, 4>> table1 = {
      {"Young", "Old", "Pleasant", "Unpleasant"},
      {"Other", "Arab-Muslim", "Pleasant", "Unpleasant"},
      {"European American", "Asian American", "American", "Foreign"},
      {"Disabled", "Not-Disabled", "Pleasant", "Unpleasant"},
      {"Male", "Female", "Career", "Family"},
      {"Male", "Female", "Science", "Liberal Arts"},
      {"Flower", "Insect", "Pleasant", "Unpleasant"},
      {"European American", "Native American", "Pleasant", "Unpleasant"},
      {"European American", "African American", "Pleasant", "Unpleasant"},
      {"Christianity", "Judaism", "Pleasant", "Unpleasant"},
      {"Gay", "Straight", "Pleasant", "Unpleasant"},
      {"Light Skin", "Dark Skin", "Pleasant", "Unpleasant"},
      {"White", "Black", "Tool", "Weapon"},
      {"White", "Black", "Tool", "Weapon (Modern)"},
      {"Thin", "Fat", "Pleasant", "Unpleasant"},
  };
  const auto manifest = load_manifest(fs::path(IEAT_SOURCE_DIR) / "data" / "table1_suite.json");
  bool names = manifest.tests.size() == table1.size();
  for (std::size_t i = 0; names && i < table1.size(); ++i) {
    const auto& t = manifest.tests[i];
    names = t.test_id == "T" + std::to_string(i + 1) && t.x_name == table1[i][0] && t.y_name == table1[i][1] &&
            t.a_name == table1[i][2] && t.b_name == table1[i][3];
  }

  const auto dir = ieat::testing::temp_dir("acceptance_structure");
  const auto suite = ieat::testing::table1_fixture(dir, 9);
  const auto loaded = load_suite(suite);
  const bool loads = loaded.instances.size() == 15 && loaded.failures.empty();

  bool curve = false, matrix = false;
  if (cli("run --suite " + q(suite) + " --model-tag M1 --out " + q(dir / "m1.json")) == 0 &&
      cli("run --suite " + q(suite) + " --model-tag M2 --seed 7 --out " + q(dir / "m2.json")) == 0 &&
      cli("sweep --results " + q(dir / "m1.json") + " " + q(dir / "m2.json") + " --format json --out " +
          q(dir / "sweep.json") + " --matrix-out " + q(dir / "matrix.csv")) == 0) {
    const auto doc = read_results(dir / "sweep.json");
    curve = doc.threshold_curves.size() == 2;
    for (const auto& c : doc.threshold_curves)
      curve = curve && c.points.size() == 200 && c.points.front().first == 1e-4 && c.points.back().first == 1e-1;

    std::istringstream in(detail::read_file_bytes(dir / "matrix.csv"));
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> cells;
      for (auto c : detail::split(line, ',')) cells.emplace_back(c);
      rows.push_back(std::move(cells));
    }
    matrix = rows.size() == 3 && rows[0].size() == 16 && rows[0][0] == "model_tag" && rows[0][1] == "T1" &&
             rows[0][15] == "T15" && rows[1][0] == "M1" && rows[2][0] == "M2" && rows[1].size() == 16 &&
             rows[2].size() == 16;
  }
  return {names && loads && curve && matrix,
          fmt("manifest tests/names=%s, loads 15 from EMB1=%s, curve spans [1e-4, 1e-1]=%s, matrix 2x15=%s",
              names ? "ok" : "BAD", loads ? "ok" : "BAD", curve ? "ok" : "BAD", matrix ? "ok" : "BAD")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"hand-computed cases", hand_cases},
      {"effect-size bound", effect_bound},
      {"Monte Carlo consistency", monte_carlo_consistency},
      {"scale/rotation invariance", invariance},
      {"null calibration", null_calibration},
      {"planted signal power and monotonicity", planted_signal},
      {"determinism", determinism},
      {"performance", performance},
      {"structure", structure},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-38s %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
