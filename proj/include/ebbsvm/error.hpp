#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ebbsvm {

enum class ErrorKind {
  invalid_argument,
  io,
  format,
  schema,
  degenerate_data,
  infeasible,
  time_limit,
  training_failed,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `context` carries provenance such as
/// "theta=3 replicate=17" or "fold=4" and is prepended by outer layers.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string context = {});

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& context() const noexcept { return context_; }

  Error with_context(const std::string& outer) const;

 private:
  ErrorKind kind_;
  std::string message_;
  std::string context_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::invalid_argument, message);
}

}  // namespace ebbsvm
