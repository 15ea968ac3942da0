#pragma once

#include <stdexcept>
#include <string>

namespace autogen {

enum class ErrorCategory {
  kInvalidInput,
  kOutOfDomain,
  kPrecision,
  kConfig,
  kData,
  kDivergence,
  kValidation,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define AUTOGEN_DEFINE_ERROR(Name, Category)                 \
  class Name : public Error {                                \
   public:                                                   \
    explicit Name(const std::string& what)                   \
        : Error(ErrorCategory::Category, what) {}            \
  };

AUTOGEN_DEFINE_ERROR(InvalidInputError, kInvalidInput)
AUTOGEN_DEFINE_ERROR(OutOfDomainError, kOutOfDomain)
AUTOGEN_DEFINE_ERROR(PrecisionError, kPrecision)
AUTOGEN_DEFINE_ERROR(ConfigError, kConfig)
AUTOGEN_DEFINE_ERROR(DataError, kData)
AUTOGEN_DEFINE_ERROR(DivergenceError, kDivergence)
AUTOGEN_DEFINE_ERROR(ValidationError, kValidation)
AUTOGEN_DEFINE_ERROR(IoError, kIo)

#undef AUTOGEN_DEFINE_ERROR

// Process exit status for an error category (CLI contract).
inline int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kData: return 3;
    case ErrorCategory::kDivergence: return 4;
    case ErrorCategory::kValidation:
    case ErrorCategory::kInvalidInput:
    case ErrorCategory::kOutOfDomain: return 5;
    default: return 1;
  }
}

inline const char* category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidInput: return "invalid-input";
    case ErrorCategory::kOutOfDomain: return "out-of-domain";
    case ErrorCategory::kPrecision: return "precision";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kDivergence: return "divergence";
    case ErrorCategory::kValidation: return "validation";
    case ErrorCategory::kIo: return "io";
  }
  return "unknown";
}

}  // namespace autogen
