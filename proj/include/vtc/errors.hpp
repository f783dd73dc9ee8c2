#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace vtc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad shapes, non-finite values, bad parameters.
class ValidationError : public Error {
public:
    enum class Reason {
        shape_mismatch,
        non_finite,
        dtype_mismatch,
        malformed,
        out_of_range,
        bad_parameter,
    };

    ValidationError(Reason reason, std::string field, const std::string& message)
        : Error(field.empty() ? message : field + ": " + message),
          reason_(reason),
          field_(std::move(field)) {}

    Reason reason() const noexcept { return reason_; }
    const std::string& field() const noexcept { return field_; }

private:
    Reason reason_;
    std::string field_;
};

/// Filesystem failure. `field` names the bundle entry that was being read or
/// written, when there is one.
class IoError : public Error {
public:
    IoError(std::filesystem::path path, std::string field, const std::string& message)
        : Error((field.empty() ? std::string{} : field + ": ") + message + " (" + path.string() + ")"),
          path_(std::move(path)),
          field_(std::move(field)) {}

    const std::filesystem::path& path() const noexcept { return path_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::filesystem::path path_;
    std::string field_;
};

/// Two compression strategies whose outputs cannot be compared.
class IncomparableError : public Error {
public:
    using Error::Error;
};

}  // namespace vtc
