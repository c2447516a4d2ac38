// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by every module. Each error carries a short
// machine-readable kind so the CLI can emit structured diagnostics.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace unison {

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what) : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

/// Operand shapes do not conform to an operation.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

/// Domain violation or a non-finite value escaping an operation.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

/// A precondition of a public operation was violated.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error("contract", what) {}
};

/// Sentence did not conform to the toy grammar; `position` is the token index.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error("parse", what + " (at token " + std::to_string(position) + ")"), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Malformed file or document. `location` is a line number or a JSON pointer.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::string location)
        : Error("format", location.empty() ? what : what + " at " + location), location_(std::move(location)) {}
    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

/// Bad command-line flag, unknown config key or ill-typed config value.
/// `location` is a JSON pointer into the config document, when known.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::string location = {})
        : Error("config", location.empty() ? what : what + " at " + location), location_(std::move(location)) {}
    const std::string& location() const noexcept { return location_; }

private:
    std::string location_;
};

/// Token missing from a vocabulary or embedding table.
class VocabularyError : public Error {
public:
    explicit VocabularyError(const std::string& token)
        : Error("vocabulary", "unknown token '" + token + "'"), token_(token) {}
    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

}  // namespace unison
