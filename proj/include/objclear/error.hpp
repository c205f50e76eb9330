#pragma once

#include <stdexcept>
#include <string>

namespace objclear {

/// Base class for every error raised by the toolkit. `category()` is a short
/// stable tag used by the CLI when reporting failures.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("invalid-argument", what) {}
};

class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& what) : Error("invalid-input", what) {}
};

class NoEffectError : public Error {
public:
    explicit NoEffectError(const std::string& what) : Error("no-effect", what) {}
};

class PlacementError : public Error {
public:
    explicit PlacementError(const std::string& what) : Error("placement", what) {}
};

class DirectionMismatch : public Error {
public:
    explicit DirectionMismatch(const std::string& what) : Error("direction-mismatch", what) {}
};

class UndefinedRegion : public Error {
public:
    explicit UndefinedRegion(const std::string& what) : Error("undefined-region", what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

}  // namespace objclear
