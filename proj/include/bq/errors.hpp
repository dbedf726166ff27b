#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments: indices outside the truncation, nonzero means, malformed plans.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class StepSizeError : public Error {
 public:
  using Error::Error;
};

// Non-finite state; carries enough to replay the failing step.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::uint64_t seed, std::int64_t step)
      : Error(what), seed_(seed), step_(step) {}
  std::uint64_t seed() const { return seed_; }
  std::int64_t step() const { return step_; }

 private:
  std::uint64_t seed_;
  std::int64_t step_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace bq
