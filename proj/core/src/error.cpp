#include "idac/error.hpp"

namespace idac {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::InvalidLabel: return "invalid-label";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::NumericDegeneracy: return "numeric-degeneracy";
    case ErrorKind::TrainingDiverged: return "training-diverged";
    case ErrorKind::UndefinedMetric: return "undefined-metric";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace idac
