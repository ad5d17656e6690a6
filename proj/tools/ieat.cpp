// ieat: command-line driver for embedding association tests.
//
//   ieat run    --suite suite.json --out results.json
//   ieat sweep  --results a.json b.json --out curve.csv
//   ieat layers --suite suite.json --layers-root dumps/ --out layers.json
//   ieat synth  --out-dir synth/ --beta 1.0
//
// Exit status: 0 success, 1 configuration error, 2 data error,
// 3 some tests failed (results still written).

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ieat/ieat.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitPartial = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Options shared by run / layers. Unset optionals fall back to the
/// environment, then the manifest, then built-in defaults.
struct RunFlags {
  std::string suite;
  std::string out;
  std::string format = "json";
  std::string matrix_out;
  std::string model_tag;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> samples;
  std::optional<std::uint64_t> exact_threshold;
  std::vector<double> alphas;
  std::optional<unsigned> workers;
  std::optional<std::string> sigma;
  std::optional<std::string> tail;
  bool normalize = false;
  bool with_sweeps = false;
  double grid_min = ieat::kDefaultGridMin;
  double grid_max = ieat::kDefaultGridMax;
  std::size_t grid_points = ieat::kDefaultGridPoints;
  std::string layers_root;
};

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* raw = std::getenv(name);
  if (!raw || !*raw) return std::nullopt;
  std::string s(raw);
  if (!std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw ConfigError(std::string(name) + " must be a non-negative integer, got '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw ConfigError(std::string(name) + " is out of range: '" + s + "'");
  }
}

void validate_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0 && hi < 1.0)) throw ConfigError("threshold grid bounds must lie in (0, 1)");
  if (!(lo < hi)) throw ConfigError("threshold grid bounds inverted: min must be below max");
  if (points < 2) throw ConfigError("threshold grid needs at least 2 points");
}

void validate_alphas(const std::vector<double>& alphas) {
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha must lie in (0, 1), got " + ieat::format_double(a));
}

struct Resolved {
  ieat::EngineConfig engine;
  ieat::ConfigEcho echo;
  bool normalize = false;
};

Resolved resolve(const RunFlags& f, const ieat::SuiteManifest& m) {
  Resolved r;
  const ieat::ManifestOptions& o = m.options;
  auto& perm = r.engine.permutation;
  perm.seed = f.seed ? *f.seed : env_u64("IEAT_SEED").value_or(o.seed);
  perm.sample_count = f.samples.value_or(o.sample_count);
  perm.exact_threshold = f.exact_threshold.value_or(o.exact_threshold);
  if (f.workers) {
    perm.workers = *f.workers;
  } else if (auto w = env_u64("IEAT_WORKERS")) {
    perm.workers = static_cast<unsigned>(*w);
  }
  try {
    perm.tail = f.tail ? ieat::parse_tail(*f.tail) : o.tail;
    r.engine.sigma = f.sigma ? ieat::parse_sigma(*f.sigma) : o.sigma;
  } catch (const ieat::Error& e) {
    throw ConfigError(e.what());
  }
  if (perm.sample_count == 0) throw ConfigError("--samples must be at least 1");
  r.engine.alphas = f.alphas.empty() ? o.thresholds : f.alphas;
  if (r.engine.alphas.empty()) r.engine.alphas = {ieat::kDefaultAlpha};
  std::sort(r.engine.alphas.begin(), r.engine.alphas.end());
  r.engine.alphas.erase(std::unique(r.engine.alphas.begin(), r.engine.alphas.end()),
                        r.engine.alphas.end());
  validate_alphas(r.engine.alphas);
  validate_grid(f.grid_min, f.grid_max, f.grid_points);
  r.engine.model_tag = !f.model_tag.empty() ? f.model_tag
                       : !m.model_tag.empty() ? m.model_tag
                                              : m.suite_name;
  r.normalize = f.normalize || o.normalize;

  r.echo.suite_name = m.suite_name;
  r.echo.model_tag = r.engine.model_tag;
  r.echo.seed = perm.seed;
  r.echo.sample_count = perm.sample_count;
  r.echo.exact_threshold = perm.exact_threshold;
  r.echo.alphas = r.engine.alphas;
  r.echo.sigma = r.engine.sigma;
  r.echo.tail = perm.tail;
  r.echo.normalize = r.normalize;
  r.echo.grid_min = f.grid_min;
  r.echo.grid_max = f.grid_max;
  r.echo.grid_points = f.grid_points;
  return r;
}

ieat::SuiteManifest read_manifest(const std::string& path) {
  if (path.empty()) throw ConfigError("--suite is required");
  if (!fs::exists(path)) throw ConfigError("suite file not found: " + path);
  try {
    return ieat::load_manifest(path);
  } catch (const ieat::Error& e) {
    throw ConfigError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  try {
    ieat::detail::write_file_bytes(path, text);
  } catch (const ieat::Error& e) {
    throw ConfigError(e.what());
  }
}

ieat::OutputFormat output_format(const std::string& s) {
  try {
    return ieat::parse_output_format(s);
  } catch (const ieat::Error& e) {
    throw ConfigError(e.what());
  }
}

void print_results(const std::vector<ieat::TestResult>& results,
                   const std::vector<ieat::TestFailure>& failures, double alpha) {
  std::printf("%-10s %-6s %10s %12s %-12s %s\n", "model", "test", "d", "p", "mode", "sig");
  for (const auto& r : results) {
    const std::string d = r.effect_size ? ieat::format_double(std::round(*r.effect_size * 1e4) / 1e4) : "NA";
    std::printf("%-10s %-6s %10s %12.6g %-12s %s\n", r.model_tag.c_str(), r.test_id.c_str(), d.c_str(),
                r.p_value, ieat::to_string(r.mode), r.p_value <= alpha ? "*" : "");
  }
  for (const auto& f : failures) std::printf("error  %-6s %s\n", f.test_id.c_str(), f.message.c_str());
}

struct SuiteOutcome {
  ieat::SuiteRun run;
  std::size_t attempted = 0;
};

SuiteOutcome run_manifest(ieat::SuiteManifest manifest, const Resolved& cfg,
                          std::optional<fs::path> concept_root) {
  ieat::SuiteLoadOptions lopts;
  lopts.policy = ieat::LoadPolicy::Collect;
  lopts.normalize = cfg.normalize;
  lopts.concept_root = std::move(concept_root);
  if (manifest.tests.empty()) throw ConfigError("suite contains no tests");
  ieat::LoadedSuite loaded = ieat::load_suite(std::move(manifest), lopts);

  SuiteOutcome out;
  out.attempted = loaded.manifest.tests.size();
  if (!loaded.instances.empty()) out.run = ieat::run_suite(loaded.instances, cfg.engine);
  // Re-index run failures against manifest order and merge with load failures.
  std::vector<ieat::TestFailure> all = loaded.failures;
  for (auto f : out.run.failures) {
    const auto& tests = loaded.manifest.tests;
    for (std::size_t i = 0; i < tests.size(); ++i)
      if (tests[i].test_id == f.test_id) f.index = i;
    all.push_back(std::move(f));
  }
  std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return l.index < r.index; });
  out.run.failures = std::move(all);
  return out;
}

int cmd_run(const RunFlags& f) {
  if (f.out.empty()) throw ConfigError("--out is required");
  const auto format = output_format(f.format);
  ieat::SuiteManifest manifest = read_manifest(f.suite);
  const Resolved cfg = resolve(f, manifest);
  SuiteOutcome outcome = run_manifest(std::move(manifest), cfg, std::nullopt);

  ieat::ResultsDocument doc;
  doc.config = cfg.echo;
  doc.results = outcome.run.results;
  doc.failures = outcome.run.failures;
  if (f.with_sweeps && !doc.results.empty()) {
    doc.threshold_curves.push_back(ieat::threshold_curve(
        doc.results, ieat::log_grid(f.grid_min, f.grid_max, f.grid_points), cfg.engine.model_tag));
    try {
      doc.effect_summaries.push_back(ieat::abs_effect_summary(doc.results, cfg.engine.model_tag));
    } catch (const ieat::Error&) {
      // every effect size degenerate: nothing to summarize
    }
  }
  if (format == ieat::OutputFormat::Json)
    write_text(f.out, ieat::format_results_json(doc));
  else
    write_text(f.out, ieat::format_results_csv(doc));
  if (!f.matrix_out.empty())
    write_text(f.matrix_out, ieat::format_effect_matrix_csv(doc.results, cfg.engine.alphas.front()));

  print_results(doc.results, doc.failures, cfg.engine.alphas.front());
  if (doc.results.empty()) {
    std::fprintf(stderr, "no test produced a result\n");
    return kExitData;
  }
  return doc.failures.empty() ? kExitOk : kExitPartial;
}

struct SweepFlags {
  std::vector<std::string> results;
  std::string out;
  std::string format = "csv";
  std::string summary_out;
  std::string matrix_out;
  double matrix_alpha = ieat::kDefaultAlpha;
  double grid_min = ieat::kDefaultGridMin;
  double grid_max = ieat::kDefaultGridMax;
  std::size_t grid_points = ieat::kDefaultGridPoints;
};

int cmd_sweep(const SweepFlags& f) {
  if (f.results.empty()) throw ConfigError("--results needs at least one results document");
  if (f.out.empty()) throw ConfigError("--out is required");
  const auto format = output_format(f.format);
  validate_grid(f.grid_min, f.grid_max, f.grid_points);
  validate_alphas({f.matrix_alpha});

  // Results grouped by model tag, in first-seen order.
  std::vector<std::string> tags;
  std::map<std::string, std::vector<ieat::TestResult>> by_tag;
  std::vector<ieat::TestResult> all;
  ieat::ConfigEcho echo;
  bool first = true;
  for (const std::string& path : f.results) {
    if (!fs::exists(path)) throw ConfigError("results file not found: " + path);
    ieat::ResultsDocument doc;
    try {
      doc = ieat::read_results(path);
    } catch (const ieat::Error& e) {
      throw DataError(e.what());
    }
    if (first) echo = doc.config;
    first = false;
    for (auto& r : doc.results) {
      if (!by_tag.count(r.model_tag)) tags.push_back(r.model_tag);
      by_tag[r.model_tag].push_back(r);
      all.push_back(std::move(r));
    }
  }
  if (all.empty()) throw DataError("results documents contain no test results");

  const auto grid = ieat::log_grid(f.grid_min, f.grid_max, f.grid_points);
  ieat::ResultsDocument out;
  out.config = echo;
  out.config.grid_min = f.grid_min;
  out.config.grid_max = f.grid_max;
  out.config.grid_points = f.grid_points;
  if (tags.size() > 1) out.config.model_tag.clear();
  for (const auto& tag : tags) {
    out.threshold_curves.push_back(ieat::threshold_curve(by_tag[tag], grid, tag));
    try {
      out.effect_summaries.push_back(ieat::abs_effect_summary(by_tag[tag], tag));
    } catch (const ieat::Error&) {
    }
  }
  if (format == ieat::OutputFormat::Json)
    write_text(f.out, ieat::format_results_json(out));
  else
    write_text(f.out, ieat::format_curves_csv(out.threshold_curves));
  if (!f.summary_out.empty()) write_text(f.summary_out, ieat::format_effect_summaries_csv(out.effect_summaries));
  if (!f.matrix_out.empty()) write_text(f.matrix_out, ieat::format_effect_matrix_csv(all, f.matrix_alpha));

  for (const auto& c : out.threshold_curves)
    std::printf("%s: %zu/%zu significant at p_t=%g, %zu at p_t=%g\n", c.model_tag.c_str(),
                c.points.front().second, by_tag[c.model_tag].size(), c.points.front().first,
                c.points.back().second, c.points.back().first);
  return kExitOk;
}

std::optional<int> trailing_int(const std::string& name) {
  std::size_t i = name.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(name[i - 1]))) --i;
  if (i == name.size() || name.size() - i > 9) return std::nullopt;
  return std::stoi(name.substr(i));
}

int cmd_layers(const RunFlags& f) {
  if (f.out.empty()) throw ConfigError("--out is required");
  if (f.layers_root.empty()) throw ConfigError("--layers-root is required");
  const auto format = output_format(f.format);
  const ieat::SuiteManifest manifest = read_manifest(f.suite);
  const Resolved base = resolve(f, manifest);
  if (!fs::is_directory(f.layers_root)) throw ConfigError("layers root is not a directory: " + f.layers_root);

  std::map<int, fs::path> layer_dirs;
  for (const auto& entry : fs::directory_iterator(f.layers_root)) {
    if (!entry.is_directory()) continue;
    const auto idx = trailing_int(entry.path().filename().string());
    if (!idx) continue;
    if (!layer_dirs.emplace(*idx, entry.path()).second)
      throw ConfigError("two directories map to layer " + std::to_string(*idx));
  }
  if (layer_dirs.empty()) throw DataError("no layer directories (names ending in a layer number) under " + f.layers_root);
  for (const auto& [idx, dir] : layer_dirs)
    if (fs::is_empty(dir)) throw DataError("layer " + std::to_string(idx) + " directory is empty: " + dir.string());

  ieat::ResultsDocument doc;
  doc.config = base.echo;
  std::map<int, std::vector<ieat::TestResult>> per_layer;
  for (const auto& [idx, dir] : layer_dirs) {
    Resolved cfg = base;
    cfg.engine.layer = idx;
    SuiteOutcome outcome = run_manifest(manifest, cfg, dir);
    if (outcome.run.results.empty())
      throw DataError("layer " + std::to_string(idx) + ": no test produced a result (" +
                      (outcome.run.failures.empty() ? std::string("?") : outcome.run.failures.front().message) + ")");
    per_layer[idx] = outcome.run.results;
    doc.results.insert(doc.results.end(), outcome.run.results.begin(), outcome.run.results.end());
    for (auto& fl : outcome.run.failures) {
      fl.message = "layer " + std::to_string(idx) + ": " + fl.message;
      doc.failures.push_back(std::move(fl));
    }
  }
  for (double alpha : base.engine.alphas)
    doc.layer_profiles.push_back(ieat::layer_profile(per_layer, alpha, base.engine.model_tag));

  if (format == ieat::OutputFormat::Json)
    write_text(f.out, ieat::format_results_json(doc));
  else
    write_text(f.out, ieat::format_layer_profiles_csv(doc.layer_profiles));

  const auto& profile = doc.layer_profiles.front();
  std::printf("layer  significant@%s\n", ieat::format_double(profile.alpha).c_str());
  for (const auto& [layer, count] : profile.counts) std::printf("%5d  %zu\n", layer, count);
  return doc.failures.empty() ? kExitOk : kExitPartial;
}

struct SynthFlags {
  std::string out_dir;
  ieat::SynthSpec spec;
  bool binary = false;
};

int cmd_synth(SynthFlags f) {
  if (f.out_dir.empty()) throw ConfigError("--out-dir is required");
  try {
    f.spec.validate();
  } catch (const ieat::Error& e) {
    throw ConfigError(e.what());
  }
  const ieat::TestInstance t = ieat::generate(f.spec);
  std::error_code ec;
  fs::create_directories(f.out_dir, ec);
  if (ec) throw ConfigError("cannot create " + f.out_dir + ": " + ec.message());

  ieat::SuiteManifest m;
  m.suite_name = "synthetic";
  m.model_tag = "synthetic";
  m.dimension = f.spec.dimension;
  m.options.seed = f.spec.seed;
  const std::string ext = f.binary ? ".emb" : ".csv";
  for (const ieat::ConceptSet* s : {&t.x, &t.y, &t.a, &t.b}) {
    const std::string file = s->name + ext;
    m.concept_files[s->name] = file;
    const fs::path path = fs::path(f.out_dir) / file;
    try {
      if (f.binary)
        ieat::save_concept_binary(*s, path);
      else
        ieat::save_concept_text(*s, path);
    } catch (const ieat::Error& e) {
      throw ConfigError(e.what());
    }
  }
  m.tests.push_back({t.test_id, t.x.name, t.y.name, t.a.name, t.b.name, t.labels});
  write_text(fs::path(f.out_dir) / "suite.json", ieat::format_manifest(m));
  std::printf("wrote %s/suite.json (beta=%g, noise=%g, seed=%llu)\n", f.out_dir.c_str(), f.spec.bias_strength,
              f.spec.noise_scale, static_cast<unsigned long long>(f.spec.seed));
  return kExitOk;
}

void add_engine_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--suite", f.suite, "Suite manifest (JSON)")->required();
  cmd->add_option("--out", f.out, "Output path")->required();
  cmd->add_option("--format", f.format, "Output format: json or csv");
  cmd->add_option("--model-tag", f.model_tag, "Model tag stamped on every result");
  cmd->add_option("--seed", f.seed, "Top-level seed (env IEAT_SEED)");
  cmd->add_option("--samples", f.samples, "Monte Carlo sample count");
  cmd->add_option("--exact-threshold", f.exact_threshold, "Largest partition count enumerated exactly");
  cmd->add_option("--alpha", f.alphas, "Significance threshold(s)");
  cmd->add_option("--workers", f.workers, "Worker threads (env IEAT_WORKERS; default: all cores)");
  cmd->add_option("--sigma", f.sigma, "Effect-size σ: population or sample");
  cmd->add_option("--tail", f.tail, "p-value tail: strict or ge_plus_one");
  cmd->add_flag("--normalize", f.normalize, "L2-normalize embeddings at load");
  cmd->add_option("--grid-min", f.grid_min, "Smallest p_t of the threshold grid");
  cmd->add_option("--grid-max", f.grid_max, "Largest p_t of the threshold grid");
  cmd->add_option("--grid-points", f.grid_points, "Number of log-spaced grid points");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding association tests: permutation p-values, effect sizes and sweeps"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run every test of a suite manifest");
  add_engine_flags(run, run_flags);
  run->add_option("--matrix-out", run_flags.matrix_out, "Also write a models x tests effect-size CSV");
  run->add_flag("--with-sweeps", run_flags.with_sweeps, "Embed threshold curve and |d| summary");

  SweepFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Threshold curves and |d| summaries from results documents");
  sweep->add_option("--results", sweep_flags.results, "Results documents (JSON)")->required();
  sweep->add_option("--out", sweep_flags.out, "Output path")->required();
  sweep->add_option("--format", sweep_flags.format, "Output format: csv or json");
  sweep->add_option("--summary-out", sweep_flags.summary_out, "Write |d| box-plot statistics CSV");
  sweep->add_option("--matrix-out", sweep_flags.matrix_out, "Write models x tests effect-size CSV");
  sweep->add_option("--matrix-alpha", sweep_flags.matrix_alpha, "Significance marker threshold for the matrix");
  sweep->add_option("--grid-min", sweep_flags.grid_min, "Smallest p_t");
  sweep->add_option("--grid-max", sweep_flags.grid_max, "Largest p_t");
  sweep->add_option("--grid-points", sweep_flags.grid_points, "Number of log-spaced grid points");

  RunFlags layer_flags;
  auto* layers = app.add_subcommand("layers", "Run a suite once per layer directory and profile significance");
  add_engine_flags(layers, layer_flags);
  layers->add_option("--layers-root", layer_flags.layers_root, "Directory of per-layer concept-file directories")
      ->required();

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "Write a synthetic planted-bias test as concept files + manifest");
  synth->add_option("--out-dir", synth_flags.out_dir, "Output directory")->required();
  synth->add_option("--dim", synth_flags.spec.dimension, "Embedding dimension");
  synth->add_option("--n-targets", synth_flags.spec.n_targets, "|X| = |Y|");
  synth->add_option("--n-a", synth_flags.spec.n_a, "|A|");
  synth->add_option("--n-b", synth_flags.spec.n_b, "|B|");
  synth->add_option("--beta", synth_flags.spec.bias_strength, "Planted bias strength in [0, 1]");
  synth->add_option("--noise", synth_flags.spec.noise_scale, "Noise scale (expected noise norm)");
  synth->add_option("--seed", synth_flags.spec.seed, "Generator seed");
  synth->add_option("--test-id", synth_flags.spec.test_id, "Test id");
  synth->add_flag("--binary", synth_flags.binary, "Write EMB1 files instead of text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*sweep) return cmd_sweep(sweep_flags);
    if (*layers) return cmd_layers(layer_flags);
    if (*synth) return cmd_synth(synth_flags);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const ieat::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ieat::ErrorCode::InvalidConfig ? kExitConfig : kExitData;
  }
  return kExitConfig;
}
