#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace sci {

/// Shape/dimension mismatches between tensors.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated operation precondition (bad argument, missing state).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Inconsistent dataset/label structure.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File format / serialization problems.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// FNV-1a over raw float bytes; used for freeze contracts and determinism checks.
uint64_t bytes_checksum(std::span<const float> data, uint64_t seed = 0xcbf29ce484222325ull);

} // namespace sci
