#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mobiledet {

/// Base error. `code()` is a short machine-readable category used by the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& what) : Error("parse", what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

struct RangeError : Error {
  explicit RangeError(const std::string& what) : Error("range", what) {}
};

struct CapExceededError : Error {
  explicit CapExceededError(const std::string& what) : Error("enumeration_cap", what) {}
};

struct SingularSystemError : Error {
  explicit SingularSystemError(const std::string& what) : Error("singular", what) {}
};

struct UnknownBucketError : Error {
  explicit UnknownBucketError(const std::string& what) : Error("unknown_bucket", what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

struct SearchError : Error {
  explicit SearchError(const std::string& what) : Error("search", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace mobiledet
