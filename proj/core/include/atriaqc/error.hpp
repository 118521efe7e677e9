#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace atriaqc {

enum class ErrorKind {
  Domain,           // argument outside the operation's mathematical domain
  Config,           // invalid configuration or parameter combination
  Format,           // malformed file or checkpoint
  Data,             // dataset does not satisfy a precondition (e.g. missing mask)
  Shape,            // tensor shape mismatch
  Numeric,          // non-finite values, divergence
  MissingArtifact,  // upstream file/directory not found
  Undetermined,     // no slices selected, prediction cannot be made
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

/// Stable process exit codes: 0 ok, 2 config, 3 missing dependency, 4 numeric failure.
int exit_code_for(ErrorKind kind);

}  // namespace atriaqc
