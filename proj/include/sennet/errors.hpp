#pragma once

#include <stdexcept>
#include <string>

namespace sennet {

// Error taxonomy. The coarse kind decides CLI exit codes:
// config/spec problems, data problems, and model/corpus mismatches.
enum class ErrorKind { Config, Data, Mismatch };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ZeroVectorError : Error {
  explicit ZeroVectorError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct SchemaMismatchError : Error {
  explicit SchemaMismatchError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct BadSpecError : Error {
  explicit BadSpecError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::Config, msg) {}
};
struct DimMismatchError : Error {
  explicit DimMismatchError(const std::string& msg) : Error(ErrorKind::Mismatch, msg) {}
};
struct ShapeMismatchError : Error {
  explicit ShapeMismatchError(const std::string& msg) : Error(ErrorKind::Mismatch, msg) {}
};
struct BadLabelError : Error {
  explicit BadLabelError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct NoForwardStateError : Error {
  explicit NoForwardStateError(const std::string& msg) : Error(ErrorKind::Mismatch, msg) {}
};
struct NotEnoughIdentitiesError : Error {
  explicit NotEnoughIdentitiesError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct EmptyResultError : Error {
  explicit EmptyResultError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct MissingLabelsError : Error {
  explicit MissingLabelsError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct NonBinaryLabelsError : Error {
  explicit NonBinaryLabelsError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct InsufficientCellError : Error {
  explicit InsufficientCellError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct DegenerateBaselineError : Error {
  explicit DegenerateBaselineError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

}  // namespace sennet
