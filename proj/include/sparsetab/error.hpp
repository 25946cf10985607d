#pragma once

#include <stdexcept>
#include <string>

namespace sparsetab {

// Base for every error raised by the library. `category()` is a short
// machine-readable tag used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error("parse", what) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what) : Error("argument", what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct ChecksumError : Error {
  explicit ChecksumError(const std::string& what) : Error("checksum", what) {}
};

struct VersionError : Error {
  explicit VersionError(const std::string& what) : Error("version", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace sparsetab
