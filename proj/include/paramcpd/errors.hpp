#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paramcpd {

// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data: missing files, corrupt records, degenerate corpora (exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure: divergence, non-finite losses (exit code 4).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class TrainingError : public NumericalError {
public:
    TrainingError(const std::string& what, std::size_t batch_index)
        : NumericalError(what), batch_index_(batch_index) {}
    std::size_t batch_index() const noexcept { return batch_index_; }

private:
    std::size_t batch_index_;
};

}  // namespace paramcpd
