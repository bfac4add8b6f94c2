#pragma once

#include <stdexcept>
#include <string>

namespace solarmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite inputs, scheduling points outside the polytope, off-simplex weights.
class DomainError : public Error {
public:
    using Error::Error;
};

/// The truth-model integrator produced a non-finite state.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, int substep)
        : Error(what), substep_(substep) {}
    int substep() const noexcept { return substep_; }

private:
    int substep_;
};

/// Inconsistent matrix dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// QP data violates its mathematical preconditions (e.g. indefinite Hessian).
class ProblemDefinitionError : public Error {
public:
    using Error::Error;
};

/// A precondition on call order or data length was violated.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class UnboundedError : public Error {
public:
    using Error::Error;
};

class EmptySetError : public Error {
public:
    using Error::Error;
};

/// Offline design (gains, terminal ingredients, tube sets) failed.
class SynthesisError : public Error {
public:
    using Error::Error;
};

class ApproximationError : public Error {
public:
    using Error::Error;
};

class InfeasibleTargetError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0)
        : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class ComparisonError : public Error {
public:
    using Error::Error;
};

} // namespace solarmpc
