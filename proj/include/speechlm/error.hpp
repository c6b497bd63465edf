// Copyright 2026 speechlm authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace speechlm {

// Error taxonomy. CLI maps InputError/ConfigError/FormatError/EncodingError
// to exit code 2 (bad input), everything else to 1 (runtime failure).

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

struct EncodingError : Error {
    explicit EncodingError(const std::string& msg) : Error(msg) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

struct TruncationError : Error {
    explicit TruncationError(const std::string& msg) : Error(msg) {}
};

// Raised when training hits a non-finite loss; carries step and batch ids.
struct TrainAbortError : Error {
    explicit TrainAbortError(const std::string& msg) : Error(msg) {}
};

}  // namespace speechlm
