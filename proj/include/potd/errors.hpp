#pragma once

#include <stdexcept>
#include <string>

namespace potd {

// Invalid configuration or violated protocol precondition (architecture,
// segment length, holdout size, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed mismatched shapes or dimensions.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training produced a non-finite value.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& msg, std::string tensor, long segment = -1)
      : std::runtime_error(msg), tensor_(std::move(tensor)), segment_(segment) {}

  const std::string& tensor() const noexcept { return tensor_; }
  long segment() const noexcept { return segment_; }

 private:
  std::string tensor_;
  long segment_;
};

// Stored digest does not match payload.
class IntegrityError : public std::runtime_error {
 public:
  IntegrityError(const std::string& msg, long index)
      : std::runtime_error(msg), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace potd
