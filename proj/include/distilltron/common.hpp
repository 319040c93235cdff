// Copyright (c) 2026, The Distilltron Authors
// SPDX-License-Identifier: Apache-2.0
//
// Error hierarchy and small shared helpers.

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace distilltron {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape / dimension mismatches between tensors or spectrograms.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration values (kernel widths, length ranges, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Bad runtime input (empty sequence, short signal, unknown symbol, ...).
struct InputError : Error {
    using Error::Error;
};

// Math domain violations (log of non-positive value, ...).
struct DomainError : Error {
    using Error::Error;
};

// API misuse: preconditions an operation cannot recover from.
struct ContractError : Error {
    using Error::Error;
};

// Malformed files (WAV, MELSPEC, manifest, checkpoint, config).
struct ParseError : Error {
    using Error::Error;
};

template <typename... Args>
std::string format_msg(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

inline bool is_finite(double v) {
    return std::isfinite(v);
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::string shape_to_string(const std::vector<std::size_t>& shape);

// FNV-1a over a byte stream; used for checksums of parameter blocks and files.
class Fnv1a {
public:
    void update(const void* data, std::size_t n);
    void update_u64(std::uint64_t v);
    void update_string(const std::string& s);
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

// Explicit little-endian encoding so file formats do not depend on host layout.
void put_u64_le(std::string& out, std::uint64_t v);
void put_f64_le(std::string& out, double v);
std::uint64_t get_u64_le(const unsigned char* p);
double get_f64_le(const unsigned char* p);

}  // namespace distilltron
