#pragma once

#include <stdexcept>
#include <string>

namespace spinlm {

// Caller passed something that violates an operation's precondition.
// The CLI maps this to exit code 2.
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// Persisted data or an input file failed a consistency check (exit code 3).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A computation produced non-finite values or diverged (exit code 4).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spinlm
