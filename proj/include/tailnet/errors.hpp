#pragma once

#include <stdexcept>
#include <string>

namespace tailnet {

// Errors caused by user input (bad files, bad flags, bad item ids).
// The CLI maps these to exit code 2; everything else exits 1.
class UserError : public std::runtime_error {
 public:
  explicit UserError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file (CSV, dataset container, checkpoint).
class FormatError : public UserError {
 public:
  explicit FormatError(const std::string& what) : UserError(what) {}
};

// Structurally valid input that yields an unusable dataset.
class DataError : public UserError {
 public:
  explicit DataError(const std::string& what) : UserError(what) {}
};

// File system failure.
class IoError : public UserError {
 public:
  explicit IoError(const std::string& what) : UserError(what) {}
};

// Shape disagreement between tensors.
class ShapeError : public std::logic_error {
 public:
  explicit ShapeError(const std::string& what) : std::logic_error(what) {}
};

// API misuse (empty session, backward twice, ...).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// Numerical failure during optimization (NaN/Inf loss).
class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tailnet
