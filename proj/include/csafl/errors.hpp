#pragma once

#include <stdexcept>
#include <string>

namespace csafl {

// Invalid user-supplied configuration (bad ranges, unknown keys, k > n, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (empty input, shape mismatch).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Malformed file content. The message names the file and the offending record.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input is well-formed but mathematically degenerate (zero variance, no samples).
class DegenerateInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace csafl
