#pragma once

#include <stdexcept>
#include <string>

namespace fairaudit {

// Error taxonomy maps 1:1 onto CLI exit codes: config -> 2, data -> 3,
// numeric -> 4. Every error names the module it came from so the CLI can
// emit a single structured record.
class AuditError : public std::runtime_error {
 public:
  AuditError(std::string module, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)) {}
  const std::string& module() const { return module_; }

 private:
  std::string module_;
};

class ConfigError : public AuditError {
 public:
  using AuditError::AuditError;
};

class DataError : public AuditError {
 public:
  using AuditError::AuditError;
};

class NumericError : public AuditError {
 public:
  using AuditError::AuditError;
};

}  // namespace fairaudit
