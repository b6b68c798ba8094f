#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kg {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two objects living on different grids were combined.
class SizeError : public Error {
public:
    using Error::Error;
};

/// A mode index outside N_K.
class IndexError : public Error {
public:
    using Error::Error;
};

/// A numeric parameter outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A monomial violating the momentum condition M(j,sigma) = 0 mod K.
class MomentumError : public Error {
public:
    using Error::Error;
};

/// Something that holds by construction did not (e.g. a polynomial evaluated
/// to a non-real number).
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Numerical failures: the CLI maps every subclass to exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

class NonConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SeriesDivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// phi(ad_{hT}) has an eigenvalue too close to zero (resonant time step).
class ResonantStepError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class BlowUpError : public NumericalError {
public:
    BlowUpError(std::size_t step, const std::string& what)
        : NumericalError(what), step_(step) {}
    [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A brute-force enumeration would exceed the desk-scale budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace kg
