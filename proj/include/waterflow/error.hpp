// Copyright 2026 The waterflow Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef WATERFLOW_ERROR_HPP
#define WATERFLOW_ERROR_HPP

#include <stdexcept>
#include <string>

namespace wf {

// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int {
    ok = 0,
    usage = 1,
    io = 2,
    contract = 3,
    numerical = 4,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::usage, "config error: " + what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ExitCode::io, "i/o error: " + what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ExitCode::contract, "shape error: " + what) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ExitCode::contract, "contract error: " + what) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ExitCode::contract, "domain error: " + what) {}
};

class EstimationError : public Error {
public:
    explicit EstimationError(const std::string& what) : Error(ExitCode::numerical, "estimation error: " + what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ExitCode::numerical, "numerical error: " + what) {}
};

} // namespace wf

#endif
