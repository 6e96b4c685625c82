// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace triadapt {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An invalid configuration value (non-positive std, zero-sized matrix, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A config file violates the schema; `key` is the dotted path of the offending field.
class SchemaError : public ConfigError {
public:
    SchemaError(std::string key, const std::string& message)
        : ConfigError(message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Rank growth would exceed min(n, d) for a site.
class CapacityError : public Error {
public:
    CapacityError(std::string site, const std::string& message)
        : Error(message), site_(std::move(site)) {}

    const std::string& site() const noexcept { return site_; }

private:
    std::string site_;
};

/// Budget/threshold machinery invoked outside its domain.
class ScheduleError : public Error {
public:
    using Error::Error;
};

/// A non-finite loss or parameter appeared during training.
class NumericalError : public Error {
public:
    NumericalError(long step, std::string site, const std::string& message)
        : Error(message), step_(step), site_(std::move(site)) {}

    long step() const noexcept { return step_; }
    const std::string& site() const noexcept { return site_; }

private:
    long step_;
    std::string site_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace triadapt
