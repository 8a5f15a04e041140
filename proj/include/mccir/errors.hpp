#pragma once

#include <stdexcept>
#include <string>

namespace mccir {

// Factorization hit a non-positive pivot, or a system has no usable rank.
struct SingularMatrixError : std::runtime_error {
    explicit SingularMatrixError(const std::string& what) : std::runtime_error(what) {}
};

// An iterative solver or Monte Carlo routine failed to produce a result.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mccir
