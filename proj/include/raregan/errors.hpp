#pragma once

#include <stdexcept>
#include <string>

namespace raregan {

// Shapes of matrices, vectors, caches or parameter sets disagree.
class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A precondition on an argument value was violated.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A ForwardCache was produced by a different network or by the same network
// before its parameters changed.
class StaleCache : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class BudgetExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SpaceTooLarge : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class Divergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace raregan
