#pragma once

#include <stdexcept>
#include <string>

namespace lgd {

/// Invalid configuration or argument values (K = 0, density outside (0,1], ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Vector or dataset dimensions that do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mathematical domain violations (zero vector where a direction is needed).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Every probed bucket was empty and the sampler was configured to fail.
class SamplerExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long long step)
      : std::runtime_error(what), step_(step) {}
  long long step() const { return step_; }

 private:
  long long step_;
};

/// Malformed input files (CSV cells, snapshots, config JSON).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lgd
