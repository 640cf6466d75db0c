#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace caa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text; `line` is 1-based and counts the header row.
class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Binary feature/model container errors. `record` is the 0-based record
/// index when the problem is tied to one record.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what,
                       std::optional<std::size_t> record = std::nullopt)
      : Error(record ? "record " + std::to_string(*record) + ": " + what : what),
        record_(record) {}

  std::optional<std::size_t> record() const noexcept { return record_; }

 private:
  std::optional<std::size_t> record_;
};

/// A precondition on the data (not its encoding) does not hold.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A subgroup is too small for a difference report.
class InsufficientDataError : public DataError {
 public:
  InsufficientDataError(const std::string& what, std::size_t count)
      : DataError(what), count_(count) {}

  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

}  // namespace caa
