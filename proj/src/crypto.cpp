#include "potd/crypto.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace potd {

namespace {

EVP_MD_CTX* md(void* p) { return static_cast<EVP_MD_CTX*>(p); }
EVP_CIPHER_CTX* cipher(void* p) { return static_cast<EVP_CIPHER_CTX*>(p); }

void put_le(std::uint8_t* out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : d) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

Digest digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) throw std::invalid_argument("digest hex must have 64 characters");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  Digest d{};
  for (std::size_t i = 0; i < 32; ++i)
    d[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return d;
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(md(ctx_), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 init failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(md(ctx_)); }

Sha256& Sha256::update(std::span<const std::uint8_t> bytes) {
  if (!bytes.empty()) EVP_DigestUpdate(md(ctx_), bytes.data(), bytes.size());
  return *this;
}

Sha256& Sha256::update(std::string_view text) {
  return update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Sha256& Sha256::update_u32(std::uint32_t v) {
  std::uint8_t b[4];
  put_le(b, v, 4);
  return update(std::span<const std::uint8_t>(b, 4));
}

Sha256& Sha256::update_u64(std::uint64_t v) {
  std::uint8_t b[8];
  put_le(b, v, 8);
  return update(std::span<const std::uint8_t>(b, 8));
}

Digest Sha256::finish() {
  Digest d{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(md(ctx_), d.data(), &len);
  EVP_DigestInit_ex(md(ctx_), EVP_sha256(), nullptr);
  return d;
}

Digest sha256(std::span<const std::uint8_t> bytes) { return Sha256().update(bytes).finish(); }
Digest sha256(std::string_view text) { return Sha256().update(text).finish(); }

Digest derive_digest(const Digest& parent, std::string_view label) {
  return Sha256().update(parent).update(label).finish();
}

Digest derive_digest(const Digest& parent, std::uint64_t label) {
  return Sha256().update(parent).update_u64(label).finish();
}

ChaChaStream::ChaChaStream(const Digest& key, std::uint64_t stream_id)
    : ctx_(EVP_CIPHER_CTX_new()) {
  // OpenSSL's IV layout: 32-bit little-endian block counter, then 96-bit nonce.
  std::uint8_t iv[16] = {};
  put_le(iv + 8, stream_id, 8);
  if (!ctx_ || EVP_EncryptInit_ex(cipher(ctx_), EVP_chacha20(), nullptr, key.data(), iv) != 1)
    throw std::runtime_error("chacha20 init failed");
}

ChaChaStream::~ChaChaStream() {
  if (ctx_) EVP_CIPHER_CTX_free(cipher(ctx_));
}

ChaChaStream::ChaChaStream(ChaChaStream&& other) noexcept
    : ctx_(other.ctx_), buf_(other.buf_), pos_(other.pos_),
      has_spare_(other.has_spare_), spare_(other.spare_) {
  other.ctx_ = nullptr;
}

void ChaChaStream::refill() {
  static const std::array<std::uint8_t, 256> kZeros{};
  int out_len = 0;
  EVP_EncryptUpdate(cipher(ctx_), buf_.data(), &out_len, kZeros.data(),
                    static_cast<int>(kZeros.size()));
  pos_ = 0;
}

std::uint32_t ChaChaStream::next_u32() {
  if (pos_ + 4 > buf_.size()) refill();
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ChaChaStream::next_u64() {
  std::uint64_t lo = next_u32();
  std::uint64_t hi = next_u32();
  return lo | (hi << 32);
}

std::uint64_t ChaChaStream::uniform_below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Largest multiple of bound representable; draws at or above it are rejected.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  for (;;) {
    std::uint64_t x = next_u64();
    if (x <= limit) return x % bound;
  }
}

double ChaChaStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double ChaChaStream::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace potd
