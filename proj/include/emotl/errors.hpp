#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emotl {

// Base of every error raised by the library. The CLI maps the subclasses
// tagged `user_facing` to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool user_facing = false)
      : std::runtime_error(what), user_facing_(user_facing) {}
  bool user_facing() const noexcept { return user_facing_; }

 private:
  bool user_facing_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension error: " + what, true) {}
};

class MissingInputError : public Error {
 public:
  explicit MissingInputError(const std::string& name)
      : Error("missing input: '" + name + "' is not bound", true) {}
};

// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what)
      : Error("contract violation: " + what, true) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("configuration error: " + what, true) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error("data error: " + what, true) {}
  DataError(const std::string& source, std::size_t line, const std::string& what)
      : Error("data error: " + source + ":" + std::to_string(line) + ": " + what, true),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class TransferError : public Error {
 public:
  explicit TransferError(const std::string& what) : Error("transfer error: " + what, true) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io error: " + what, true) {}
};

class OracleUnusableError : public Error {
 public:
  explicit OracleUnusableError(const std::string& what)
      : Error("finite-difference oracle unusable: " + what) {}
};

}  // namespace emotl
