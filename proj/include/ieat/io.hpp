#pragma once

// On-disk formats.
//
// Concept text file (UTF-8, LF):
//     id,v0,v1,...,v{D-1}
//     <id>,<float>,...,<float>
//
// EMB1 binary container (all integers little-endian):
//     "EMB1" | u32 version (=1) | u32 D | u32 count
//     count x ( u16 id_len | id bytes | D x f32 )
//
// Suite manifest and results document are JSON; results and sweep artifacts
// can also be written as CSV tables.

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "ieat/analysis.hpp"
#include "ieat/core.hpp"
#include "ieat/error.hpp"
#include "ieat/permutation.hpp"

namespace ieat {

inline constexpr std::string_view kEngineName = "ieat";
inline constexpr std::string_view kEngineVersion = "1.0.0";
inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kResultsSchemaVersion = 1;
inline constexpr std::uint32_t kEmb1Version = 1;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// number formatting

/// Shortest decimal that parses back to the same double (at most 17
/// significant digits).
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error(ErrorCode::Io, "failed to format number");
  return std::string(buf.data(), end);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return v;
}

namespace detail {

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::Io, "cannot open file", ErrorLocation{.path = path.string()});
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline void write_file_bytes(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::Io, "cannot open file for writing", ErrorLocation{.path = path.string()});
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed", ErrorLocation{.path = path.string()});
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

template <class T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xffu));
    u = static_cast<U>(u >> 8);
  }
}

template <class T>
T get_le(const unsigned char* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<decltype(u)>((u << 8) | p[i]);
  return static_cast<T>(u);
}

}  // namespace detail

struct LoadOptions {
  bool normalize = false;
  std::optional<std::size_t> expected_dimension;
};

// ---------------------------------------------------------------------------
// concept text format

inline ConceptSet parse_concept_text(std::string_view text, std::string name,
                                     const LoadOptions& opts = {}) {
  ConceptSet set;
  set.name = std::move(name);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    const auto fields = detail::split(line, ',');
    if (!have_header) {
      if (fields.size() < 2 || fields[0] != "id")
        throw Error(ErrorCode::Parse, "header must be id,v0,...,v{D-1}",
                    ErrorLocation{.row = line_no, .column = 1});
      for (std::size_t i = 1; i < fields.size(); ++i) {
        if (fields[i] != "v" + std::to_string(i - 1))
          throw Error(ErrorCode::Parse, "unexpected header column '" + std::string(fields[i]) + "'",
                      ErrorLocation{.row = line_no, .column = i + 1});
      }
      set.dimension = fields.size() - 1;
      have_header = true;
      continue;
    }
    const std::uint64_t row = set.members.size() + 1;  // 1-based data row
    Embedding e;
    e.id = std::string(fields[0]);
    if (e.id.empty())
      throw Error(ErrorCode::Parse, "empty id on line " + std::to_string(line_no),
                  ErrorLocation{.row = row, .column = 1});
    if (fields.size() - 1 != set.dimension)
      throw Error(ErrorCode::DimensionMismatch,
                  "row " + std::to_string(row) + " has " + std::to_string(fields.size() - 1) +
                      " components, header declares " + std::to_string(set.dimension),
                  ErrorLocation{.row = row, .id = e.id});
    e.vector.reserve(set.dimension);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto v = parse_double(fields[i]);
      if (!v || !std::isfinite(*v))
        throw Error(ErrorCode::Parse,
                    "bad number '" + std::string(fields[i]) + "' on line " + std::to_string(line_no),
                    ErrorLocation{.row = row, .column = i + 1, .id = e.id});
      e.vector.push_back(*v);
    }
    set.members.push_back(std::move(e));
  }
  if (!have_header) throw Error(ErrorCode::Parse, "missing header line", ErrorLocation{.row = 1});
  if (opts.expected_dimension && *opts.expected_dimension != set.dimension)
    throw Error(ErrorCode::InconsistentDimension,
                "concept '" + set.name + "' has dimension " + std::to_string(set.dimension) +
                    ", expected " + std::to_string(*opts.expected_dimension));
  set.validate();
  return opts.normalize ? l2_normalized(std::move(set)) : set;
}

inline ConceptSet load_concept_text(const fs::path& path, const LoadOptions& opts = {}) {
  try {
    return parse_concept_text(detail::read_file_bytes(path), path.stem().string(), opts);
  } catch (const Error& e) {
    throw e.with_path(path.string());
  }
}

inline std::string format_concept_text(const ConceptSet& set) {
  std::string out = "id";
  for (std::size_t i = 0; i < set.dimension; ++i) out += ",v" + std::to_string(i);
  out += '\n';
  for (const Embedding& e : set.members) {
    out += e.id;
    for (double v : e.vector) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void save_concept_text(const ConceptSet& set, const fs::path& path) {
  detail::write_file_bytes(path, format_concept_text(set));
}

// ---------------------------------------------------------------------------
// EMB1 binary format

inline std::string encode_emb1(const ConceptSet& set) {
  std::string out;
  out.append("EMB1", 4);
  detail::put_le<std::uint32_t>(out, kEmb1Version);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.dimension));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.members.size()));
  for (const Embedding& e : set.members) {
    if (e.id.size() > 0xffff)
      throw Error(ErrorCode::InvalidConfig, "id longer than 65535 bytes", ErrorLocation{.id = e.id});
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.id.size()));
    out += e.id;
    for (double v : e.vector)
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline ConceptSet decode_emb1(std::string_view bytes, std::string name, const LoadOptions& opts = {}) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 4 || std::memcmp(p, "EMB1", 4) != 0)
    throw Error(ErrorCode::BadMagic, "missing EMB1 magic", ErrorLocation{.byte_offset = 0});
  if (size < 16)
    throw Error(ErrorCode::TruncatedRecord, "header shorter than 16 bytes",
                ErrorLocation{.byte_offset = size});
  const auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != kEmb1Version)
    throw Error(ErrorCode::UnsupportedVersion, "EMB1 version " + std::to_string(version),
                ErrorLocation{.byte_offset = 4});
  ConceptSet set;
  set.name = std::move(name);
  set.dimension = detail::get_le<std::uint32_t>(p + 8);
  const auto count = detail::get_le<std::uint32_t>(p + 12);
  std::size_t off = 16;
  set.members.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::size_t record_start = off;
    ErrorLocation loc{.row = r + 1ULL, .byte_offset = record_start};
    if (off + 2 > size)
      throw Error(ErrorCode::TruncatedRecord, "record " + std::to_string(r + 1) + " truncated", loc);
    const auto id_len = detail::get_le<std::uint16_t>(p + off);
    off += 2;
    if (off + id_len + 4ULL * set.dimension > size)
      throw Error(ErrorCode::TruncatedRecord, "record " + std::to_string(r + 1) + " truncated", loc);
    Embedding e;
    e.id.assign(bytes.substr(off, id_len));
    off += id_len;
    e.vector.resize(set.dimension);
    for (std::size_t i = 0; i < set.dimension; ++i, off += 4)
      e.vector[i] = static_cast<double>(std::bit_cast<float>(detail::get_le<std::uint32_t>(p + off)));
    set.members.push_back(std::move(e));
  }
  if (off != size)
    throw Error(ErrorCode::Parse, std::to_string(size - off) + " trailing bytes after last record",
                ErrorLocation{.byte_offset = off});
  if (opts.expected_dimension && *opts.expected_dimension != set.dimension)
    throw Error(ErrorCode::InconsistentDimension,
                "concept '" + set.name + "' has dimension " + std::to_string(set.dimension) +
                    ", expected " + std::to_string(*opts.expected_dimension));
  set.validate();
  return opts.normalize ? l2_normalized(std::move(set)) : set;
}

inline ConceptSet load_concept_binary(const fs::path& path, const LoadOptions& opts = {}) {
  try {
    return decode_emb1(detail::read_file_bytes(path), path.stem().string(), opts);
  } catch (const Error& e) {
    throw e.with_path(path.string());
  }
}

inline void save_concept_binary(const ConceptSet& set, const fs::path& path) {
  detail::write_file_bytes(path, encode_emb1(set));
}

inline bool is_binary_concept_path(const fs::path& path) {
  const std::string ext = path.extension().string();
  return ext == ".emb" || ext == ".emb1" || ext == ".bin";
}

/// Loads by extension: .emb/.emb1/.bin as EMB1, anything else as text.
inline ConceptSet load_concept(const fs::path& path, std::string name, const LoadOptions& opts = {}) {
  ConceptSet set = is_binary_concept_path(path) ? load_concept_binary(path, opts)
                                                : load_concept_text(path, opts);
  set.name = std::move(name);
  return set;
}

// ---------------------------------------------------------------------------
// suite manifest

struct ManifestTest {
  std::string test_id;
  std::string x_name;
  std::string y_name;
  std::string a_name;
  std::string b_name;
  TestLabels labels;
};

struct ManifestOptions {
  std::vector<double> thresholds{kDefaultAlpha};
  std::uint64_t seed = kDefaultSeed;
  std::uint64_t sample_count = kDefaultSampleCount;
  std::uint64_t exact_threshold = kDefaultExactThreshold;
  bool normalize = false;
  SigmaConvention sigma = SigmaConvention::Population;
  Tail tail = Tail::Strict;
};

struct SuiteManifest {
  int schema_version = kManifestSchemaVersion;
  std::string suite_name;
  std::string model_tag;
  std::optional<std::size_t> dimension;
  std::vector<ManifestTest> tests;
  std::map<std::string, std::string> concept_files;  // concept name -> path
  ManifestOptions options;
  fs::path base_dir;  // directory relative paths resolve against
};

inline SigmaConvention parse_sigma(std::string_view s) {
  if (s == "population") return SigmaConvention::Population;
  if (s == "sample") return SigmaConvention::Sample;
  throw Error(ErrorCode::InvalidConfig, "sigma must be 'population' or 'sample', got '" +
                                            std::string(s) + "'");
}

inline Tail parse_tail(std::string_view s) {
  if (s == "strict") return Tail::Strict;
  if (s == "ge_plus_one") return Tail::GePlusOne;
  throw Error(ErrorCode::InvalidConfig,
              "tail must be 'strict' or 'ge_plus_one', got '" + std::string(s) + "'");
}

inline PermutationMode parse_mode(std::string_view s) {
  if (s == "exact") return PermutationMode::Exact;
  if (s == "monte_carlo") return PermutationMode::MonteCarlo;
  throw Error(ErrorCode::Parse, "unknown permutation mode '" + std::string(s) + "'");
}

inline EffectState parse_effect_state(std::string_view s) {
  if (s == "ok") return EffectState::Ok;
  if (s == "degenerate_variance") return EffectState::DegenerateVariance;
  throw Error(ErrorCode::Parse, "unknown effect state '" + std::string(s) + "'");
}

inline ErrorCode parse_error_code(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::Io); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == s) return code;
  }
  throw Error(ErrorCode::Parse, "unknown error code '" + std::string(s) + "'");
}

inline SuiteManifest parse_manifest(std::string_view text, fs::path base_dir = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("manifest is not valid JSON: ") + e.what(),
                ErrorLocation{.byte_offset = e.byte});
  }
  try {
    SuiteManifest m;
    m.base_dir = std::move(base_dir);
    if (!j.contains("schema_version"))
      throw Error(ErrorCode::InvalidConfig, "manifest lacks mandatory schema_version");
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion)
      throw Error(ErrorCode::UnsupportedVersion,
                  "manifest schema_version " + std::to_string(m.schema_version));
    m.suite_name = j.value("suite_name", std::string{});
    m.model_tag = j.value("model_tag", std::string{});
    if (j.contains("dimension") && !j.at("dimension").is_null())
      m.dimension = j.at("dimension").get<std::size_t>();
    for (const auto& [name, path] : j.at("concept_files").items())
      m.concept_files[name] = path.get<std::string>();
    for (const auto& t : j.at("tests")) {
      ManifestTest mt;
      mt.test_id = t.at("test_id").get<std::string>();
      mt.x_name = t.at("x_name").get<std::string>();
      mt.y_name = t.at("y_name").get<std::string>();
      mt.a_name = t.at("a_name").get<std::string>();
      mt.b_name = t.at("b_name").get<std::string>();
      if (t.contains("labels")) {
        const auto& l = t.at("labels");
        mt.labels = TestLabels{l.value("x", std::string{}), l.value("y", std::string{}),
                               l.value("a", std::string{}), l.value("b", std::string{})};
      }
      m.tests.push_back(std::move(mt));
    }
    if (j.contains("options")) {
      const auto& o = j.at("options");
      if (o.contains("thresholds")) m.options.thresholds = o.at("thresholds").get<std::vector<double>>();
      m.options.seed = o.value("seed", m.options.seed);
      m.options.sample_count = o.value("sample_count", m.options.sample_count);
      m.options.exact_threshold = o.value("exact_threshold", m.options.exact_threshold);
      m.options.normalize = o.value("normalize", m.options.normalize);
      if (o.contains("sigma")) m.options.sigma = parse_sigma(o.at("sigma").get<std::string>());
      if (o.contains("tail")) m.options.tail = parse_tail(o.at("tail").get<std::string>());
    }
    std::set<std::string> ids;
    for (const ManifestTest& t : m.tests) {
      if (!ids.insert(t.test_id).second)
        throw Error(ErrorCode::InvalidConfig, "duplicate test_id '" + t.test_id + "'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("manifest schema violation: ") + e.what());
  }
}

inline SuiteManifest load_manifest(const fs::path& path) {
  try {
    return parse_manifest(detail::read_file_bytes(path), path.parent_path());
  } catch (const Error& e) {
    throw e.with_path(path.string());
  }
}

inline std::string format_manifest(const SuiteManifest& m) {
  nlohmann::ordered_json j;
  j["schema_version"] = m.schema_version;
  j["suite_name"] = m.suite_name;
  if (!m.model_tag.empty()) j["model_tag"] = m.model_tag;
  j["dimension"] = m.dimension ? nlohmann::ordered_json(*m.dimension) : nlohmann::ordered_json();
  j["concept_files"] = nlohmann::ordered_json::object();
  for (const auto& [name, path] : m.concept_files) j["concept_files"][name] = path;
  j["tests"] = nlohmann::ordered_json::array();
  for (const ManifestTest& t : m.tests) {
    j["tests"].push_back({{"test_id", t.test_id},
                          {"x_name", t.x_name},
                          {"y_name", t.y_name},
                          {"a_name", t.a_name},
                          {"b_name", t.b_name},
                          {"labels", {{"x", t.labels.x}, {"y", t.labels.y}, {"a", t.labels.a}, {"b", t.labels.b}}}});
  }
  j["options"] = {{"thresholds", m.options.thresholds},
                  {"seed", m.options.seed},
                  {"sample_count", m.options.sample_count},
                  {"exact_threshold", m.options.exact_threshold},
                  {"normalize", m.options.normalize},
                  {"sigma", to_string(m.options.sigma)},
                  {"tail", to_string(m.options.tail)}};
  return j.dump(2) + "\n";
}

enum class LoadPolicy { FailFast, Collect };

struct LoadedSuite {
  SuiteManifest manifest;
  std::vector<TestInstance> instances;  // manifest order, failed tests omitted
  std::vector<TestFailure> failures;
};

struct SuiteLoadOptions {
  LoadPolicy policy = LoadPolicy::FailFast;
  std::optional<bool> normalize;     // overrides manifest option
  std::optional<fs::path> concept_root;  // overrides the manifest directory
};

/// Resolves and validates every concept each test references. Concepts are
/// loaded once even when several tests share them. Under Collect, a bad
/// concept file fails only the tests that use it.
inline LoadedSuite load_suite(SuiteManifest manifest, const SuiteLoadOptions& opts = {}) {
  LoadedSuite out;
  const fs::path root = opts.concept_root.value_or(manifest.base_dir);
  LoadOptions lopts;
  lopts.normalize = opts.normalize.value_or(manifest.options.normalize);
  lopts.expected_dimension = manifest.dimension;

  std::map<std::string, ConceptSet> cache;
  std::map<std::string, Error> bad;
  auto get = [&](const std::string& name) -> const ConceptSet& {
    if (auto it = cache.find(name); it != cache.end()) return it->second;
    if (auto it = bad.find(name); it != bad.end()) throw it->second;
    try {
      const auto file = manifest.concept_files.find(name);
      if (file == manifest.concept_files.end())
        throw Error(ErrorCode::MissingConcept, "concept '" + name + "' has no file entry");
      const fs::path path = fs::path(file->second).is_absolute() ? fs::path(file->second)
                                                                  : root / file->second;
      if (!fs::exists(path))
        throw Error(ErrorCode::MissingConcept,
                    "file for concept '" + name + "' does not exist",
                    ErrorLocation{.path = path.string()});
      return cache.emplace(name, load_concept(path, name, lopts)).first->second;
    } catch (const Error& e) {
      bad.emplace(name, e);
      throw;
    }
  };

  for (std::size_t i = 0; i < manifest.tests.size(); ++i) {
    const ManifestTest& t = manifest.tests[i];
    try {
      out.instances.push_back(make_test_instance(t.test_id, get(t.x_name), get(t.y_name),
                                                 get(t.a_name), get(t.b_name), t.labels));
    } catch (const Error& e) {
      const Error tagged = e.with_test(t.test_id);
      if (opts.policy == LoadPolicy::FailFast) throw tagged;
      out.failures.push_back(TestFailure{i, t.test_id, tagged.code(), tagged.what()});
    }
  }
  if (opts.policy == LoadPolicy::FailFast && !manifest.dimension && !out.instances.empty()) {
    const std::size_t d = out.instances.front().dimension();
    for (const TestInstance& ti : out.instances) {
      if (ti.dimension() != d)
        throw Error(ErrorCode::InconsistentDimension,
                    "test dimension " + std::to_string(ti.dimension()) + " differs from " +
                        std::to_string(d),
                    ErrorLocation{.test_id = ti.test_id});
    }
  }
  out.manifest = std::move(manifest);
  return out;
}

inline LoadedSuite load_suite(const fs::path& path, const SuiteLoadOptions& opts = {}) {
  return load_suite(load_manifest(path), opts);
}

// ---------------------------------------------------------------------------
// results document

struct ConfigEcho {
  std::string suite_name;
  std::string model_tag;
  std::optional<int> layer;
  std::uint64_t seed = kDefaultSeed;
  std::uint64_t sample_count = kDefaultSampleCount;
  std::uint64_t exact_threshold = kDefaultExactThreshold;
  std::vector<double> alphas{kDefaultAlpha};
  SigmaConvention sigma = SigmaConvention::Population;
  Tail tail = Tail::Strict;
  bool normalize = false;
  double grid_min = kDefaultGridMin;
  double grid_max = kDefaultGridMax;
  std::size_t grid_points = kDefaultGridPoints;

  friend bool operator==(const ConfigEcho&, const ConfigEcho&) = default;
};

struct ResultsDocument {
  std::string engine_name{kEngineName};
  std::string engine_version{kEngineVersion};
  ConfigEcho config;
  std::vector<TestResult> results;
  std::vector<TestFailure> failures;
  std::vector<ThresholdCurve> threshold_curves;
  std::vector<LayerProfile> layer_profiles;
  std::vector<EffectSummary> effect_summaries;

  friend bool operator==(const ResultsDocument&, const ResultsDocument&) = default;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(); }
inline ojson opt_json(const std::optional<int>& v) { return v ? ojson(*v) : ojson(); }

inline std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}
inline std::optional<int> opt_int(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<int>();
}

inline ojson to_json(const TestResult& r) {
  ojson sig = ojson::object();
  for (const auto& [alpha, flag] : r.significant_at) sig[format_double(alpha)] = flag;
  return ojson{{"model_tag", r.model_tag},
               {"test_id", r.test_id},
               {"layer", opt_json(r.layer)},
               {"labels", {{"x", r.labels.x}, {"y", r.labels.y}, {"a", r.labels.a}, {"b", r.labels.b}}},
               {"effect_size", opt_json(r.effect_size)},
               {"effect_state", to_string(r.effect_state)},
               {"p_value", r.p_value},
               {"statistic", r.statistic},
               {"mode", to_string(r.mode)},
               {"exceed_count", r.exceed_count},
               {"tie_count", r.tie_count},
               {"evaluated_count", r.evaluated_count},
               {"standard_error", opt_json(r.standard_error)},
               {"seed", r.seed},
               {"sigma", to_string(r.sigma)},
               {"tail", to_string(r.tail)},
               {"significant_at", sig}};
}

inline TestResult result_from_json(const nlohmann::json& j) {
  TestResult r;
  r.model_tag = j.at("model_tag").get<std::string>();
  r.test_id = j.at("test_id").get<std::string>();
  r.layer = opt_int(j, "layer");
  const auto& l = j.at("labels");
  r.labels = TestLabels{l.at("x").get<std::string>(), l.at("y").get<std::string>(),
                        l.at("a").get<std::string>(), l.at("b").get<std::string>()};
  r.effect_size = opt_double(j, "effect_size");
  r.effect_state = parse_effect_state(j.at("effect_state").get<std::string>());
  r.p_value = j.at("p_value").get<double>();
  r.statistic = j.at("statistic").get<double>();
  r.mode = parse_mode(j.at("mode").get<std::string>());
  r.exceed_count = j.at("exceed_count").get<std::uint64_t>();
  r.tie_count = j.at("tie_count").get<std::uint64_t>();
  r.evaluated_count = j.at("evaluated_count").get<std::uint64_t>();
  r.standard_error = opt_double(j, "standard_error");
  r.seed = j.at("seed").get<std::uint64_t>();
  r.sigma = parse_sigma(j.at("sigma").get<std::string>());
  r.tail = parse_tail(j.at("tail").get<std::string>());
  for (const auto& [key, flag] : j.at("significant_at").items()) {
    const auto alpha = parse_double(key);
    if (!alpha) throw Error(ErrorCode::Parse, "bad significance threshold key '" + key + "'");
    r.significant_at[*alpha] = flag.get<bool>();
  }
  return r;
}

}  // namespace detail

inline std::string format_results_json(const ResultsDocument& doc) {
  using detail::ojson;
  ojson j;
  j["schema_version"] = kResultsSchemaVersion;
  j["engine"] = {{"name", doc.engine_name}, {"version", doc.engine_version}};
  const ConfigEcho& c = doc.config;
  j["config"] = {{"suite_name", c.suite_name},
                 {"model_tag", c.model_tag},
                 {"layer", detail::opt_json(c.layer)},
                 {"seed", c.seed},
                 {"sample_count", c.sample_count},
                 {"exact_threshold", c.exact_threshold},
                 {"alphas", c.alphas},
                 {"sigma", to_string(c.sigma)},
                 {"tail", to_string(c.tail)},
                 {"normalize", c.normalize},
                 {"grid", {{"min", c.grid_min}, {"max", c.grid_max}, {"points", c.grid_points}}}};
  j["results"] = ojson::array();
  for (const TestResult& r : doc.results) j["results"].push_back(detail::to_json(r));
  j["errors"] = ojson::array();
  for (const TestFailure& f : doc.failures)
    j["errors"].push_back({{"index", f.index},
                           {"test_id", f.test_id},
                           {"code", to_string(f.code)},
                           {"message", f.message}});
  j["threshold_curves"] = ojson::array();
  for (const ThresholdCurve& tc : doc.threshold_curves) {
    ojson pts = ojson::array();
    for (const auto& [pt, count] : tc.points) pts.push_back({{"p_t", pt}, {"count", count}});
    j["threshold_curves"].push_back({{"model_tag", tc.model_tag}, {"points", pts}});
  }
  j["layer_profiles"] = ojson::array();
  for (const LayerProfile& lp : doc.layer_profiles) {
    ojson counts = ojson::array();
    for (const auto& [layer, count] : lp.counts) counts.push_back({{"layer", layer}, {"count", count}});
    j["layer_profiles"].push_back({{"model_tag", lp.model_tag}, {"alpha", lp.alpha}, {"counts", counts}});
  }
  j["effect_summaries"] = ojson::array();
  for (const EffectSummary& s : doc.effect_summaries)
    j["effect_summaries"].push_back({{"model_tag", s.model_tag},
                                     {"n", s.n},
                                     {"median", s.median},
                                     {"q1", s.q1},
                                     {"q3", s.q3},
                                     {"whisker_low", s.whisker_low},
                                     {"whisker_high", s.whisker_high},
                                     {"mean", s.mean}});
  return j.dump(2) + "\n";
}

inline ResultsDocument parse_results_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("results document is not valid JSON: ") + e.what(),
                ErrorLocation{.byte_offset = e.byte});
  }
  try {
    if (j.at("schema_version").get<int>() != kResultsSchemaVersion)
      throw Error(ErrorCode::UnsupportedVersion, "results schema_version mismatch");
    ResultsDocument doc;
    doc.engine_name = j.at("engine").at("name").get<std::string>();
    doc.engine_version = j.at("engine").at("version").get<std::string>();
    const auto& c = j.at("config");
    doc.config.suite_name = c.at("suite_name").get<std::string>();
    doc.config.model_tag = c.at("model_tag").get<std::string>();
    doc.config.layer = detail::opt_int(c, "layer");
    doc.config.seed = c.at("seed").get<std::uint64_t>();
    doc.config.sample_count = c.at("sample_count").get<std::uint64_t>();
    doc.config.exact_threshold = c.at("exact_threshold").get<std::uint64_t>();
    doc.config.alphas = c.at("alphas").get<std::vector<double>>();
    doc.config.sigma = parse_sigma(c.at("sigma").get<std::string>());
    doc.config.tail = parse_tail(c.at("tail").get<std::string>());
    doc.config.normalize = c.at("normalize").get<bool>();
    doc.config.grid_min = c.at("grid").at("min").get<double>();
    doc.config.grid_max = c.at("grid").at("max").get<double>();
    doc.config.grid_points = c.at("grid").at("points").get<std::size_t>();
    for (const auto& r : j.at("results")) doc.results.push_back(detail::result_from_json(r));
    for (const auto& f : j.at("errors"))
      doc.failures.push_back(TestFailure{f.at("index").get<std::size_t>(),
                                         f.at("test_id").get<std::string>(),
                                         parse_error_code(f.at("code").get<std::string>()),
                                         f.at("message").get<std::string>()});
    for (const auto& tc : j.at("threshold_curves")) {
      ThresholdCurve curve{tc.at("model_tag").get<std::string>(), {}};
      for (const auto& p : tc.at("points"))
        curve.points.emplace_back(p.at("p_t").get<double>(), p.at("count").get<std::size_t>());
      doc.threshold_curves.push_back(std::move(curve));
    }
    for (const auto& lp : j.at("layer_profiles")) {
      LayerProfile prof{lp.at("model_tag").get<std::string>(), lp.at("alpha").get<double>(), {}};
      for (const auto& p : lp.at("counts"))
        prof.counts.emplace_back(p.at("layer").get<int>(), p.at("count").get<std::size_t>());
      doc.layer_profiles.push_back(std::move(prof));
    }
    for (const auto& s : j.at("effect_summaries"))
      doc.effect_summaries.push_back(EffectSummary{
          s.at("model_tag").get<std::string>(), s.at("n").get<std::size_t>(),
          s.at("median").get<double>(), s.at("q1").get<double>(), s.at("q3").get<double>(),
          s.at("whisker_low").get<double>(), s.at("whisker_high").get<double>(),
          s.at("mean").get<double>()});
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("results schema violation: ") + e.what());
  }
}

inline ResultsDocument read_results(const fs::path& path) {
  try {
    return parse_results_json(detail::read_file_bytes(path));
  } catch (const Error& e) {
    throw e.with_path(path.string());
  }
}

/// Long-form table, one row per (model_tag, test_id).
inline std::string format_results_csv(const ResultsDocument& doc) {
  using detail::csv_field;
  std::string out =
      "model_tag,test_id,layer,x,y,a,b,effect_size,effect_state,p_value,statistic,mode,"
      "exceed_count,evaluated_count";
  for (double a : doc.config.alphas) out += ",sig_" + format_double(a);
  out += '\n';
  for (const TestResult& r : doc.results) {
    out += csv_field(r.model_tag) + ',' + csv_field(r.test_id) + ',';
    out += r.layer ? std::to_string(*r.layer) : std::string{};
    out += ',' + csv_field(r.labels.x) + ',' + csv_field(r.labels.y) + ',' + csv_field(r.labels.a) +
           ',' + csv_field(r.labels.b) + ',';
    out += r.effect_size ? format_double(*r.effect_size) : std::string{};
    out += ',';
    out += to_string(r.effect_state);
    out += ',' + format_double(r.p_value) + ',' + format_double(r.statistic) + ',';
    out += to_string(r.mode);
    out += ',' + std::to_string(r.exceed_count) + ',' + std::to_string(r.evaluated_count);
    for (double a : doc.config.alphas) out += (r.p_value <= a) ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

/// Models as rows, tests as columns; a trailing '*' marks p <= alpha and
/// "NA" marks a degenerate-variance test.
inline std::string format_effect_matrix_csv(const std::vector<TestResult>& results,
                                            double alpha = kDefaultAlpha) {
  std::vector<std::string> tests;
  std::vector<std::string> models;
  std::map<std::pair<std::string, std::string>, const TestResult*> cell;
  for (const TestResult& r : results) {
    if (std::find(tests.begin(), tests.end(), r.test_id) == tests.end()) tests.push_back(r.test_id);
    if (std::find(models.begin(), models.end(), r.model_tag) == models.end())
      models.push_back(r.model_tag);
    cell[{r.model_tag, r.test_id}] = &r;
  }
  std::string out = "model_tag";
  for (const std::string& t : tests) out += ',' + detail::csv_field(t);
  out += '\n';
  for (const std::string& m : models) {
    out += detail::csv_field(m);
    for (const std::string& t : tests) {
      out += ',';
      const auto it = cell.find({m, t});
      if (it == cell.end()) continue;
      const TestResult& r = *it->second;
      out += r.effect_size ? format_double(*r.effect_size) : std::string("NA");
      if (r.p_value <= alpha) out += '*';
    }
    out += '\n';
  }
  return out;
}

inline std::string format_curves_csv(const std::vector<ThresholdCurve>& curves) {
  std::string out = "model_tag,p_t,count\n";
  for (const ThresholdCurve& c : curves)
    for (const auto& [pt, count] : c.points)
      out += detail::csv_field(c.model_tag) + ',' + format_double(pt) + ',' + std::to_string(count) + '\n';
  return out;
}

inline std::string format_layer_profiles_csv(const std::vector<LayerProfile>& profiles) {
  std::string out = "model_tag,alpha,layer,count\n";
  for (const LayerProfile& p : profiles)
    for (const auto& [layer, count] : p.counts)
      out += detail::csv_field(p.model_tag) + ',' + format_double(p.alpha) + ',' +
             std::to_string(layer) + ',' + std::to_string(count) + '\n';
  return out;
}

inline std::string format_effect_summaries_csv(const std::vector<EffectSummary>& summaries) {
  std::string out = "model_tag,n,median,q1,q3,whisker_low,whisker_high,mean\n";
  for (const EffectSummary& s : summaries)
    out += detail::csv_field(s.model_tag) + ',' + std::to_string(s.n) + ',' + format_double(s.median) +
           ',' + format_double(s.q1) + ',' + format_double(s.q3) + ',' + format_double(s.whisker_low) +
           ',' + format_double(s.whisker_high) + ',' + format_double(s.mean) + '\n';
  return out;
}

enum class OutputFormat { Json, Csv };

inline OutputFormat parse_output_format(std::string_view s) {
  if (s == "json") return OutputFormat::Json;
  if (s == "csv") return OutputFormat::Csv;
  throw Error(ErrorCode::InvalidConfig, "format must be 'json' or 'csv', got '" + std::string(s) + "'");
}

inline void write_results(const ResultsDocument& doc, const fs::path& path, OutputFormat format) {
  detail::write_file_bytes(path, format == OutputFormat::Json ? format_results_json(doc)
                                                              : format_results_csv(doc));
}

}  // namespace ieat
