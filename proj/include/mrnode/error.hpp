// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mrnode {

/// Base of every error thrown by the library. The CLI maps these to a
/// nonzero exit code with the kind() prefix on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Malformed input file. row is 1-based over data rows (header excluded);
/// row 0 means the header or the file as a whole.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t row, std::string field, const std::string& msg)
      : Error("parse", file + ": row " + std::to_string(row) + ", field '" + field + "': " + msg),
        file_(std::move(file)),
        row_(row),
        field_(std::move(field)) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t row() const noexcept { return row_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  std::size_t row_;
  std::string field_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& msg) : Error("domain", msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error("contract", msg) {}
};

class DegenerateStatsError : public Error {
 public:
  explicit DegenerateStatsError(const std::string& msg) : Error("degenerate-stats", msg) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& msg) : Error("checkpoint", msg) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error("training", msg) {}
};

}  // namespace mrnode
