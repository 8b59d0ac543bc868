#pragma once

#include <stdexcept>
#include <string>

namespace gmg {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Violated precondition of an operation (empty batch, bad hyper-parameter, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Invalid run configuration (unknown key, out-of-range value).
class ConfigError : public ContractError {
 public:
  explicit ConfigError(const std::string& what) : ContractError(what) {}
};

/// Non-finite value produced or supplied.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed persisted data: bad magic, version or checksum.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gmg
