#include "aida/error.hpp"

namespace aida {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::duplicate_name: return "duplicate_name";
    case ErrorKind::dangling_reference: return "dangling_reference";
    case ErrorKind::invalid_value: return "invalid_value";
    case ErrorKind::schema: return "schema";
    case ErrorKind::transition: return "transition";
    case ErrorKind::plan: return "plan";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::io: return "io";
    case ErrorKind::missing_verdict: return "missing_verdict";
  }
  return "unknown";
}

}  // namespace aida
