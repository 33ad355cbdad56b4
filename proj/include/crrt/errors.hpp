#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crrt {

// Violated pre/post condition on a caller-supplied argument (shape mismatch,
// non-scalar loss, nondeterministic function under check, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Item id or class index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Non-finite value produced by an op. `op()` names the op that produced it.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& what)
      : std::runtime_error(op + ": " + what), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

// Invalid configuration value. `field()` is the dotted path, e.g. "crr.gamma".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Malformed input data. Carries the file and 1-based line when known.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::string file = {}, std::size_t line = 0)
      : std::runtime_error(format(what, file, line)), file_(std::move(file)), line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& what, const std::string& file, std::size_t line) {
    if (file.empty() && line == 0) return what;
    std::string loc = file.empty() ? "<input>" : file;
    if (line > 0) loc += ":" + std::to_string(line);
    return loc + ": " + what;
  }
  std::string file_;
  std::size_t line_;
};

// Feedback value not allowed by the active reward scheme.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace crrt
