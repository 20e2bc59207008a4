#pragma once

#include <stdexcept>
#include <string>

namespace distill {

/// Broad failure classes. The CLI maps these to exit codes and message
/// prefixes; tests match on them.
enum class ErrorCategory {
  kStructural,   // shape / dimension mismatch, invalid arguments
  kDegenerate,   // input too small or empty for the requested statistic
  kNumerical,    // non-finite values, asymmetric matrices
  kFormat,       // malformed files
  kConfig,       // invalid configuration
  kPairing,      // contrastive batch assembly failed
  kIo,           // filesystem
};

const char* to_string(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define DISTILL_ERROR_TYPE(Name, Category)                         \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(Category, what) {} \
  }

DISTILL_ERROR_TYPE(StructuralError, ErrorCategory::kStructural);
DISTILL_ERROR_TYPE(DegenerateInputError, ErrorCategory::kDegenerate);
DISTILL_ERROR_TYPE(NumericalError, ErrorCategory::kNumerical);
DISTILL_ERROR_TYPE(ConfigError, ErrorCategory::kConfig);
DISTILL_ERROR_TYPE(PairingError, ErrorCategory::kPairing);
DISTILL_ERROR_TYPE(IoError, ErrorCategory::kIo);

#undef DISTILL_ERROR_TYPE

/// Malformed binary file. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(ErrorCategory::kFormat,
              what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

inline const char* to_string(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::kStructural: return "structural";
    case ErrorCategory::kDegenerate: return "degenerate-input";
    case ErrorCategory::kNumerical: return "numerical";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kPairing: return "pairing";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

}  // namespace distill
