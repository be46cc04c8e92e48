#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bonmf {

// Every failure the engine reports falls into one of these buckets. The CLI
// maps them one-to-one onto process exit codes.
enum class ErrorKind { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class DimensionError : public DataError {
public:
    DimensionError(const std::string& context, std::size_t expected, std::size_t actual)
        : DataError(context + ": dimension mismatch (expected " + std::to_string(expected) +
                    ", got " + std::to_string(actual) + ")"),
          expected_(expected),
          actual_(actual) {}

    std::size_t expected() const noexcept { return expected_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

// Malformed input text; line is 1-based, 0 when not applicable.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& message, const std::string& text = {})
        : DataError(format(line, message, text)), line_(line) {}

    std::size_t line() const noexcept { return line_; }

    /// The same error with its message prefixed by the source, e.g. a path.
    ParseError in_source(const std::string& source) const { return ParseError(line_, source + ": " + what(), Verbatim{}); }

private:
    struct Verbatim {};
    ParseError(std::size_t line, const std::string& message, Verbatim) : DataError(message), line_(line) {}

    static std::string format(std::size_t line, const std::string& message,
                              const std::string& text) {
        std::string out = line ? "line " + std::to_string(line) + ": " + message : message;
        if (!text.empty()) out += " [" + text + "]";
        return out;
    }

    std::size_t line_;
};

class MissingFeature : public DataError {
public:
    MissingFeature(const std::string& modality, const std::string& entity, const std::string& detail = {})
        : DataError("missing " + modality + " feature for entity '" + entity + "'" + detail),
          modality_(modality),
          entity_(entity) {}

    const std::string& modality() const noexcept { return modality_; }
    const std::string& entity() const noexcept { return entity_; }

private:
    std::string modality_;
    std::string entity_;
};

}  // namespace bonmf
