#ifndef VIDAGG_ERRORS_HPP
#define VIDAGG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vidagg {

// CLI exit codes: 0 ok, 2 config, 3 data/schema, 4 numeric.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed container: bad magic, wrong version, truncated file.
struct FormatError : DataError {
    explicit FormatError(const std::string& msg) : DataError("format error: " + msg) {}
};

// Structurally sound container whose declared dimensions do not match the payload.
struct SchemaError : DataError {
    explicit SchemaError(const std::string& msg) : DataError("schema error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

}  // namespace vidagg

#endif
