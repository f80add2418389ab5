#include "commx/error.hpp"

namespace commx {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Config: return "config";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Format: return "format";
    case ErrorKind::Label: return "label";
    case ErrorKind::Data: return "data";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Metric: return "metric";
    case ErrorKind::Fingerprint: return "fingerprint";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Io: return 3;
    case ErrorKind::Format: return 4;
    case ErrorKind::Label: return 5;
    case ErrorKind::Data: return 6;
    case ErrorKind::Fingerprint: return 7;
    case ErrorKind::Numeric: return 8;
    case ErrorKind::Dimension: return 9;
    case ErrorKind::Alignment: return 10;
    case ErrorKind::Metric: return 11;
    case ErrorKind::Domain: return 12;
    case ErrorKind::Contract: return 13;
    case ErrorKind::Conflict: return 14;
    case ErrorKind::Validation: return 15;
  }
  return 1;
}

}  // namespace commx
