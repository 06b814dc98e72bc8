#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fenceline {

/// Input outside the mathematical domain of an operation (negative
/// concentration, AQI above 500, latitude beyond the Mercator limit).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct FieldError {
    std::string field;
    std::string message;
};

/// A candidate record failed validation. Carries per-field messages so the
/// HTTP layer can report them individually.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(std::string message, std::vector<FieldError> fields = {})
        : std::invalid_argument(std::move(message)), fields_(std::move(fields)) {}

    ValidationError(const std::string& field, const std::string& message)
        : std::invalid_argument(field + ": " + message), fields_{{field, message}} {}

    const std::vector<FieldError>& fields() const noexcept { return fields_; }

private:
    std::vector<FieldError> fields_;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Upstream payload could not be mapped to a reading.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string sensor_id, const std::string& message)
        : std::runtime_error(sensor_id + ": " + message), sensor_id_(std::move(sensor_id)) {}

    const std::string& sensor_id() const noexcept { return sensor_id_; }

private:
    std::string sensor_id_;
};

/// Transport-level failure talking to the upstream (timeout, HTTP status).
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Journal or import file unusable (unreadable, corrupted mid-file).
class StorageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad operator configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fenceline
