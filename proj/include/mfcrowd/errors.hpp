#pragma once

#include <stdexcept>
#include <string>

namespace mfcrowd {

/// Array lengths or field shapes disagree with the grid they are used on.
class DimensionError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration that cannot be run: CFL violation, missing keys, bad values.
class ConfigError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Operation called with a kernel in the wrong mode (Local vs Nonlocal).
class ModeError : public std::logic_error {
 public:
    using std::logic_error::logic_error;
};

}  // namespace mfcrowd
