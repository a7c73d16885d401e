#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace idac {

enum class ErrorKind {
  InvalidInput,
  Shape,
  InvalidLabel,
  InvalidConfig,
  NumericDegeneracy,
  TrainingDiverged,
  UndefinedMetric,
  Parse,
  Schema,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` distinguishes the error
/// contracts so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace idac
