#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace jitagent {

// Base of every error the library throws across module boundaries. `kind()`
// is the stable machine-readable name used in logs, HTTP bodies and tests.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define JITAGENT_DEFINE_ERROR(Name)                                     \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    };

JITAGENT_DEFINE_ERROR(UnknownFixture)
JITAGENT_DEFINE_ERROR(UnknownPath)
JITAGENT_DEFINE_ERROR(ArityError)
JITAGENT_DEFINE_ERROR(ArgumentTypeError)
JITAGENT_DEFINE_ERROR(DomainError)
JITAGENT_DEFINE_ERROR(InvalidState)
JITAGENT_DEFINE_ERROR(UnsupportedLanguage)
JITAGENT_DEFINE_ERROR(UnknownSnapshot)
JITAGENT_DEFINE_ERROR(StorageError)
JITAGENT_DEFINE_ERROR(ParseError)
JITAGENT_DEFINE_ERROR(TransportError)
JITAGENT_DEFINE_ERROR(AuthError)
JITAGENT_DEFINE_ERROR(BudgetExceeded)
JITAGENT_DEFINE_ERROR(NoMatch)
JITAGENT_DEFINE_ERROR(CassetteMiss)
JITAGENT_DEFINE_ERROR(DuplicatePath)
JITAGENT_DEFINE_ERROR(WrongState)
JITAGENT_DEFINE_ERROR(OraclePathError)
JITAGENT_DEFINE_ERROR(ConfigError)

#undef JITAGENT_DEFINE_ERROR

// Errors that carry a 1-based source line.
class RuleSyntaxError : public Error {
public:
    RuleSyntaxError(int line, const std::string& message)
        : Error("RuleSyntaxError", "line " + std::to_string(line) + ": " + message), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class SuiteSyntaxError : public Error {
public:
    SuiteSyntaxError(int line, const std::string& message)
        : Error("SuiteSyntaxError", "line " + std::to_string(line) + ": " + message), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// Milliseconds since the Unix epoch.
std::int64_t wall_clock_ms();

// ISO-8601 UTC rendering of a millisecond timestamp.
std::string iso8601(std::int64_t epoch_ms);

std::string read_file(const std::string& path);
// Writes via a temporary sibling and rename so readers never see a torn file.
void write_file_atomic(const std::string& path, std::string_view contents);

// Shipped data files: $JITAGENT_DATA when set, else the source tree's data/.
std::string data_dir();

}  // namespace jitagent
