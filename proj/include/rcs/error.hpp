// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rcs {

enum class ErrorKind {
  Format,            // malformed input file
  Unsupported,       // well-formed but unsupported encoding
  Parse,             // non-numeric / unparsable field
  Validation,        // semantically invalid value
  Config,            // configuration invariant violated
  Shape,             // tensor or matrix shape mismatch
  Load,              // checkpoint / persisted artifact cannot be loaded
  Assembly,          // prediction reassembly mismatch
  UndefinedMetric,   // metric undefined for the given labels
  Diverged,          // non-finite training loss
  Usage,             // API misuse
  EmptyCorpus,       // nothing to reduce over
  DegenerateCorpus,  // zero variance
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind), message_(message) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
  /// The message without the "<kind> error: " prefix.
  [[nodiscard]] const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace rcs
