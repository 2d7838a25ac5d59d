#pragma once

#include <stdexcept>
#include <string>

namespace aida {

enum class ErrorKind {
  parse,
  duplicate_name,
  dangling_reference,
  invalid_value,
  schema,
  transition,
  plan,
  not_found,
  config,
  shape,
  io,
  missing_verdict,
};

const char* to_string(ErrorKind kind);

/// Single exception type for every validation failure. `subject` names the offending
/// property, entry or file; `line` is set for text-format parse errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string subject, const std::string& message, int line = 0)
      : std::runtime_error(message), kind_(kind), subject_(std::move(subject)), line_(line) {}

  ErrorKind kind() const { return kind_; }
  const std::string& subject() const { return subject_; }
  int line() const { return line_; }

 private:
  ErrorKind kind_;
  std::string subject_;
  int line_;
};

}  // namespace aida
