#pragma once

#include <stdexcept>
#include <string>

namespace synth {

// Error taxonomy shared by every module. The C API maps these onto
// sp_status codes; internally they behave like ordinary exceptions.

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Remote endpoint failures that the caller may retry.
struct EndpointError : std::runtime_error {
    EndpointError(const std::string& what, std::string payload)
        : std::runtime_error(what), raw_payload(std::move(payload)) {}
    std::string raw_payload;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace synth
