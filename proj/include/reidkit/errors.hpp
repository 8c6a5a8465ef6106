#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reidkit {

// Shape or argument violations in tensor math.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad configuration values (manifest keys, hyperparameters out of range).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Unreadable or malformed input data (files, datasets, checkpoints).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite math is required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(std::size_t iteration)
        : std::runtime_error("training diverged at iteration " + std::to_string(iteration)),
          iteration(iteration) {}
    std::size_t iteration;
};

}  // namespace reidkit
