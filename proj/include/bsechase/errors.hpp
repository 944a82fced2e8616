#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsechase {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class NotHermitianError : public Error {
public:
    using Error::Error;
};

/// Raised by QR when a column is numerically dependent on the preceding ones.
class RankDeficiencyError : public Error {
public:
    RankDeficiencyError(std::size_t column, double diag, double threshold)
        : Error("rank deficiency at column " + std::to_string(column) +
                " (|R_kk| = " + std::to_string(diag) +
                " < " + std::to_string(threshold) + ")"),
          column_(column) {}

    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

class LanczosBreakdownError : public Error {
public:
    using Error::Error;
};

class EmptyBasisError : public Error {
public:
    using Error::Error;
};

class LayoutError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(const std::string& what, const std::string& path)
        : Error(what + ": " + path), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Iteration budget exhausted. Carries whatever converged before the budget ran out.
template <class Result>
class PartialConvergenceError : public Error {
public:
    PartialConvergenceError(const std::string& what, Result partial)
        : Error(what), partial_(std::move(partial)) {}

    const Result& partial() const noexcept { return partial_; }

private:
    Result partial_;
};

}  // namespace bsechase
