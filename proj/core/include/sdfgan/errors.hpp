#pragma once

#include <stdexcept>
#include <string>

namespace sdfgan {

// Thrown for malformed files, missing shapes, empty datasets and the like.
// The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation produces non-finite values (e.g. a diverged
// training loss). The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sdfgan
