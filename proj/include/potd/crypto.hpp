#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace potd {

using Digest = std::array<std::uint8_t, 32>;

std::string to_hex(const Digest& d);
Digest digest_from_hex(std::string_view hex);

// Incremental SHA-256 over OpenSSL's EVP interface.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> bytes);
  Sha256& update(std::string_view text);
  Sha256& update(const Digest& d) { return update(std::span<const std::uint8_t>(d)); }
  Sha256& update_u32(std::uint32_t v);
  Sha256& update_u64(std::uint64_t v);
  Digest finish();

 private:
  void* ctx_;
};

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view text);

// Domain-separated child digest H(parent ∘ label).
Digest derive_digest(const Digest& parent, std::string_view label);
Digest derive_digest(const Digest& parent, std::uint64_t label);

// ChaCha20 (RFC 8439) keystream keyed by a 256-bit digest. The 96-bit nonce
// carries a 64-bit stream id so independent streams can share one key.
// Every draw consumes keystream bytes in a fixed order, so the sequence of
// values is a pure function of (key, stream id).
class ChaChaStream {
 public:
  explicit ChaChaStream(const Digest& key, std::uint64_t stream_id = 0);
  ~ChaChaStream();
  ChaChaStream(const ChaChaStream&) = delete;
  ChaChaStream& operator=(const ChaChaStream&) = delete;
  ChaChaStream(ChaChaStream&& other) noexcept;

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, bound), rejection-sampled (no modulo bias).
  std::uint64_t uniform_below(std::uint64_t bound);
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via Box-Muller; the spare value is cached.
  double gaussian();

 private:
  void refill();

  void* ctx_;
  std::array<std::uint8_t, 256> buf_{};
  std::size_t pos_ = 256;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace potd
