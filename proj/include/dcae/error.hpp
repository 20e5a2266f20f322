#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dcae {

// Base class of every error raised by the library. The CLI maps each subclass
// to its own process exit code (see ExitCode).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor rank/size/divisibility violations.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid model, phase, or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf values where finite values are required.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int64_t step = -1) : Error(what), step_(step) {}
  // Training step at which the failure was detected, or -1.
  int64_t step() const { return step_; }

 private:
  int64_t step_;
};

// Training phases requested in an order the phase history does not allow.
class PipelineError : public Error {
 public:
  using Error::Error;
};

// Dataset ingestion failures (unknown generator, empty folder, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Checkpoint persistence failures. Subclasses distinguish the failure mode.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CorruptIndexError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TruncatedBlobError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

enum class ExitCode : int {
  kOk = 0,
  kUnknown = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kCheckpoint = 5,
  kPipeline = 6,
  kShape = 7,
};

}  // namespace dcae
