#pragma once

#include <stdexcept>
#include <string>

namespace samif {

/// Base for every error raised by the library. The CLI maps these to the
/// "data error" exit code.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition on an argument (shape mismatch, bad index, ...).
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

enum class FormatErrorKind {
    BadMagic,
    VersionMismatch,
    TruncatedPayload,
    ShapeMismatch,
    BadHeader,
    ReferentialIntegrity,
    CorruptRle,
    Io,
};

/// Raised by the serialization layer; `kind()` tells the failure modes apart.
class FormatError : public Error {
  public:
    FormatError(FormatErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FormatErrorKind kind() const noexcept { return kind_; }

  private:
    FormatErrorKind kind_;
};

} // namespace samif
