// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cmc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor/kernel dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An operation was called out of the allowed task lifecycle order
/// (training an unfrozen predecessor, freezing out of order, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// A mask allocation asked for more free parameters than the layer has left.
class CapacityExhausted : public Error {
public:
    CapacityExhausted(const std::string& layer, std::int64_t requested, std::int64_t free)
        : Error("capacity exhausted in layer '" + layer + "': requested " +
                std::to_string(requested) + " entries but only " + std::to_string(free) +
                " are free; expand the layer capacity (extra rows) to continue"),
          layer_(layer), requested_(requested), free_(free) {}

    const std::string& layer() const { return layer_; }
    std::int64_t requested() const { return requested_; }
    std::int64_t free() const { return free_; }

private:
    std::string layer_;
    std::int64_t requested_;
    std::int64_t free_;
};

/// Non-finite loss or gradient; training cannot continue.
class NumericError : public Error {
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

}  // namespace cmc
