#include "atriaqc/error.hpp"

namespace atriaqc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::MissingArtifact: return "missing artifact";
    case ErrorKind::Undetermined: return "undetermined";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Domain:
    case ErrorKind::Data:
    case ErrorKind::Shape:
      return 2;
    case ErrorKind::MissingArtifact:
    case ErrorKind::Format:
      return 3;
    case ErrorKind::Numeric:
      return 4;
    case ErrorKind::Undetermined:
    case ErrorKind::Io:
      return 1;
  }
  return 1;
}

}  // namespace atriaqc
