#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace trustbench {

using Digest32 = std::array<std::uint8_t, 32>;

// SHA-256 (backed by OpenSSL's libcrypto).
Digest32 sha256(std::span<const std::uint8_t> data);
Digest32 sha256(std::string_view data);

std::string to_hex(const Digest32& d);

struct Digest32Hash {
  std::size_t operator()(const Digest32& d) const noexcept {
    std::size_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | d[i];
    return h;
  }
};

}  // namespace trustbench
