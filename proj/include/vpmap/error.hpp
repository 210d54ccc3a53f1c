// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vpmap {

enum class ErrorCode : std::uint8_t {
    // input / contract violations
    ShapeError,
    InvalidInput,
    InvalidDepth,
    InvalidPoint,
    InvalidFov,
    InvalidSigma,
    InvalidConfig,
    EmptyMask,
    EmptyClip,
    NotGpm,
    CorruptFile,
    TypeError,
    IoError,
    // numerical failures
    DegenerateProjection,
    DegenerateRange,
    DegeneratePrediction,
    AntiCorrelated,
    FocalUnobservable,
    UnderConstrained,
    NonFiniteLoss,
    DivergenceError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for codes that signal a numerical failure rather than bad input.
bool is_numerical(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what,
          std::optional<std::uint64_t> offset = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what),
          code_(code), offset_(offset) {}

    ErrorCode code() const noexcept { return code_; }
    /// Byte offset for file-format errors.
    std::optional<std::uint64_t> offset() const noexcept { return offset_; }

private:
    ErrorCode code_;
    std::optional<std::uint64_t> offset_;
};

}  // namespace vpmap
