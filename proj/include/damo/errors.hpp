#pragma once

#include <stdexcept>
#include <string>

namespace damo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// p(x) > 0 where q(x) = 0 for a divergence that needs p << q.
class SupportViolation : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class MalformedLine : public Error {
 public:
  MalformedLine(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptySource : public Error {
 public:
  using Error::Error;
};

class UnknownEnv : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised by the inner solver when |Q| leaves the admissible bound.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace damo
