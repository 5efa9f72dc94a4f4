#include "promptex/error.hpp"

namespace promptex {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::zero_norm: return "zero_norm";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::backend_failure: return "backend_failure";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::state: return "state";
  }
  return "unknown";
}

}  // namespace promptex
