// Copyright (C) 2026 The saas-attn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace saas {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition violated by a caller-supplied value.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Configuration value out of range or unknown; `field()` names the key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), m_field(std::move(field)) {}
    const std::string& field() const noexcept { return m_field; }

private:
    std::string m_field;
};

/// Non-finite values or a broken attention contract during a forward pass.
class NumericalError : public Error {
public:
    NumericalError(int layer, const std::string& what)
        : Error(what), m_layer(layer) {}
    int layer() const noexcept { return m_layer; }

private:
    int m_layer;
};

class IoError : public Error {
public:
    using Error::Error;
};

inline constexpr double kStochasticTolerance = 1e-9;

}  // namespace saas
