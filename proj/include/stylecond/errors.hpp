#pragma once

#include <stdexcept>
#include <string>

namespace stylecond {

/// Input failed a schema or precondition check. `field()` names the offending
/// field path (e.g. "slots[3].color") when one applies.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, std::string message)
      : std::invalid_argument(field.empty() ? message : field + ": " + message),
        field_(std::move(field)),
        message_(std::move(message)) {}

  const std::string& field() const noexcept { return field_; }
  /// The message without the field prefix.
  const std::string& message() const noexcept { return message_; }

  /// Same error with `prefix` prepended to the field path.
  ValidationError nested(const std::string& prefix) const {
    return ValidationError(field_.empty() ? prefix : prefix + "." + field_, message_);
  }

 private:
  std::string field_;
  std::string message_;
};

/// A file on disk (dataset record, checkpoint) does not match its format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values showed up during a forward/backward pass or in a loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stylecond

namespace stylecond {

/// The loaded model cannot serve the request (e.g. a conditional operation on
/// an unconditional checkpoint).
class ModeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stylecond
