// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace kronlora {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand dimensions do not conform.
class ShapeError : public Error {
public:
    using Error::Error;
};

// No valid factorization for the requested layer.
class PlanningError : public Error {
public:
    using Error::Error;
};

// Invalid user-facing configuration value (dropout rate, config file field, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Adapter state does not allow the requested operation (e.g. backward without a cached mask).
class StateError : public Error {
public:
    using Error::Error;
};

// Checkpoint magic or kind code not recognised.
class FormatError : public Error {
public:
    using Error::Error;
};

// Checkpoint structurally readable but inconsistent or truncated.
class CorruptionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace kronlora
