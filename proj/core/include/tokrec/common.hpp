// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tokrec {

// Violated input contract (bad shapes, unknown keys, out-of-range values).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Failure while reading or writing an artifact (missing file, bad magic,
// checksum mismatch, malformed row).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

} // namespace tokrec
