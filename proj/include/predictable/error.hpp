#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace predictable {

enum class Errc {
    invalid_input,
    parse_error,
    not_converged,
    diverged,
    too_large,
    grid_not_found,
    io_error,
    schema_error,
    not_found,
    conflict,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
    case Errc::invalid_input: return "invalid_input";
    case Errc::parse_error: return "parse_error";
    case Errc::not_converged: return "not_converged";
    case Errc::diverged: return "diverged";
    case Errc::too_large: return "too_large";
    case Errc::grid_not_found: return "grid_not_found";
    case Errc::io_error: return "io_error";
    case Errc::schema_error: return "schema_error";
    case Errc::not_found: return "not_found";
    case Errc::conflict: return "conflict";
    }
    return "unknown";
}

/// Base exception for every failure raised by the library. The code is
/// stable and machine readable; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// Grid documents report the offending position (1-based).
class ParseError : public Error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what)
        : Error(Errc::parse_error, "line " + std::to_string(line) + ", column " +
                                       std::to_string(column) + ": " + what),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(double residual, std::size_t iterations)
        : Error(Errc::not_converged, "no convergence after " + std::to_string(iterations) +
                                         " iterations (residual " + std::to_string(residual) + ")"),
          residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

/// Raised when an undiscounted evaluation cannot terminate: the listed states
/// do not reach a terminal with probability one, so their value is -infinity.
class DivergenceError : public Error {
public:
    explicit DivergenceError(std::vector<std::size_t> improper)
        : Error(Errc::diverged, "policy is improper in " + std::to_string(improper.size()) + " state(s)"),
          improper_(std::move(improper)) {}

    const std::vector<std::size_t>& improper_states() const noexcept { return improper_; }

private:
    std::vector<std::size_t> improper_;
};

/// Schema violations name the offending field with a JSON-path-like string.
class SchemaError : public Error {
public:
    SchemaError(std::string field, const std::string& what)
        : Error(Errc::schema_error, field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace predictable
