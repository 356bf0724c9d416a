#pragma once

#include <stdexcept>
#include <string>

namespace trustbench {

// Bad configuration (invalid parameter values, unknown surface ids, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A caller violated a state-machine or protocol contract.
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed serialized data (chain files, transaction payloads).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace trustbench
