#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ieat {

enum class ErrorCode {
  DimensionMismatch,
  ZeroVector,
  NonFinite,
  EmptyConceptSet,
  DuplicateId,
  UnequalTargets,
  OverlappingTargets,
  Overflow,
  DegenerateVariance,
  Parse,
  BadMagic,
  UnsupportedVersion,
  TruncatedRecord,
  MissingConcept,
  InconsistentDimension,
  InvalidConfig,
  EmptyInput,
  TooLarge,
  Io,
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyConceptSet: return "EmptyConceptSet";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnequalTargets: return "UnequalTargets";
    case ErrorCode::OverlappingTargets: return "OverlappingTargets";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::MissingConcept: return "MissingConcept";
    case ErrorCode::InconsistentDimension: return "InconsistentDimension";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Machine-readable location attached to an error. Every field is optional;
/// loaders fill in whichever apply (row/column for text, byte offset for
/// binary, stimulus id, owning test).
struct ErrorLocation {
  std::optional<std::string> path{};
  std::optional<std::uint64_t> row{};
  std::optional<std::uint64_t> column{};
  std::optional<std::uint64_t> byte_offset{};
  std::optional<std::string> id{};
  std::optional<std::string> test_id{};
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, ErrorLocation where = {})
      : std::runtime_error(compose(code, message, where)),
        code_(code),
        detail_(message),
        where_(std::move(where)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  const ErrorLocation& where() const noexcept { return where_; }

  /// Copy of this error with the owning test attached.
  Error with_test(const std::string& test_id) const {
    ErrorLocation loc = where_;
    loc.test_id = test_id;
    return Error(code_, detail_, std::move(loc));
  }

  Error with_path(const std::string& path) const {
    ErrorLocation loc = where_;
    loc.path = path;
    return Error(code_, detail_, std::move(loc));
  }

 private:
  static std::string compose(ErrorCode code, const std::string& message,
                             const ErrorLocation& where) {
    std::string out(to_string(code));
    out += ": ";
    out += message;
    if (where.test_id) out += " [test " + *where.test_id + "]";
    if (where.path) out += " [path " + *where.path + "]";
    if (where.row) out += " [row " + std::to_string(*where.row) + "]";
    if (where.column) out += " [column " + std::to_string(*where.column) + "]";
    if (where.byte_offset)
      out += " [byte " + std::to_string(*where.byte_offset) + "]";
    if (where.id) out += " [id " + *where.id + "]";
    return out;
  }

  ErrorCode code_;
  std::string detail_;
  ErrorLocation where_;
};

}  // namespace ieat
