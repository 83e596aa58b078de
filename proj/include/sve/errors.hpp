#pragma once

#include <stdexcept>
#include <string>

namespace sve {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Argument outside its mathematical domain (bad bounds, bad exponent, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(what) {}
};

/// An integral that is provably or numerically non-integrable.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what) : Error(what) {}
};

/// Adaptive quadrature failed to reach the requested tolerance.
class QuadratureError : public Error {
public:
    explicit QuadratureError(const std::string& what) : Error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

class SizeMismatch : public Error {
public:
    explicit SizeMismatch(const std::string& what) : Error(what) {}
};

class GridMismatch : public Error {
public:
    explicit GridMismatch(const std::string& what) : Error(what) {}
};

/// Coefficient evaluation produced NaN/inf.
class NonFiniteOutput : public Error {
public:
    explicit NonFiniteOutput(const std::string& what) : Error(what) {}
};

/// Particle state became non-finite during simulation; carries the step index.
class NonFiniteState : public Error {
public:
    NonFiniteState(const std::string& what, std::size_t step)
        : Error(what), step_index(step) {}
    std::size_t step_index;
};

class ModeMismatch : public Error {
public:
    explicit ModeMismatch(const std::string& what) : Error(what) {}
};

class MissingAccumulators : public Error {
public:
    explicit MissingAccumulators(const std::string& what) : Error(what) {}
};

class InsufficientLags : public Error {
public:
    explicit InsufficientLags(const std::string& what) : Error(what) {}
};

class LadderTooShort : public Error {
public:
    explicit LadderTooShort(const std::string& what) : Error(what) {}
};

/// Configuration file / CLI usage problems.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

} // namespace sve
