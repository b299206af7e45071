#pragma once

#include <stdexcept>
#include <string>

namespace wattnet {

// Failure categories map one-to-one onto CLI exit codes.
enum class ErrorCategory { parse = 2, validation = 3, compute = 4, io = 5, config = 6 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error(ErrorCategory::parse, what) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};
struct ComputeError : Error {
  explicit ComputeError(const std::string& what) : Error(ErrorCategory::compute, what) {}
};
struct ShapeError : ComputeError {
  explicit ShapeError(const std::string& what) : ComputeError("shape: " + what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

}  // namespace wattnet
