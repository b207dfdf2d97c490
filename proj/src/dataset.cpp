#include "potd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "binio.hpp"
#include "potd/errors.hpp"

namespace potd {

namespace {

constexpr char kMagic[4] = {'P', 'O', 'T', 'D'};
constexpr std::uint32_t kVersion = 1;

using binio::read_le;
using binio::write_u32;
using binio::write_u64;

}  // namespace

std::vector<std::uint8_t> serialize_point(std::span<const Token> point) {
  std::vector<std::uint8_t> out(8 + 4 * point.size());
  const std::uint64_t len = point.size();
  for (int i = 0; i < 8; ++i) out[i] = std::uint8_t(len >> (8 * i));
  for (std::size_t t = 0; t < point.size(); ++t)
    for (int i = 0; i < 4; ++i) out[8 + 4 * t + i] = std::uint8_t(point[t] >> (8 * i));
  return out;
}

Digest hash_point(std::span<const Token> point) { return sha256(serialize_point(point)); }

Dataset::Dataset(std::uint32_t seq_len, std::uint32_t vocab, std::vector<Token> tokens)
    : seq_len_(seq_len), vocab_(vocab), tokens_(std::move(tokens)) {
  if (seq_len_ == 0 || tokens_.size() % seq_len_ != 0)
    throw ConfigError("dataset: token count is not a multiple of the sequence length");
  const std::size_t n = tokens_.size() / seq_len_;
  if (n < 2) throw ConfigError("dataset: need at least 2 points");
  for (Token t : tokens_)
    if (t >= vocab_) throw ConfigError("dataset: token out of vocabulary");
  hashes_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) hashes_.push_back(hash_point(point(i)));
}

std::span<const Token> Dataset::point(std::size_t i) const {
  return std::span<const Token>(tokens_).subspan(i * seq_len_, seq_len_);
}

Digest Dataset::digest() const {
  Sha256 h;
  for (const auto& d : hashes_) h.update(d);
  return h.finish();
}

Dataset Dataset::with_token(std::size_t p, std::size_t pos, Token value) const {
  auto tokens = tokens_;
  tokens.at(p * seq_len_ + pos) = value;
  return Dataset(seq_len_, vocab_, std::move(tokens));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<Token> tokens;
  tokens.reserve(indices.size() * seq_len_);
  for (auto i : indices) {
    auto p = point(i);
    tokens.insert(tokens.end(), p.begin(), p.end());
  }
  return Dataset(seq_len_, vocab_, std::move(tokens));
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write dataset: " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u64(os, d.size());
  write_u32(os, d.seq_len());
  write_u32(os, d.vocab());
  for (Token t : d.tokens()) write_u32(os, t);
  if (!os) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a dataset file (bad magic): " + path.string());
  const auto version = read_le(is, 4, path);
  if (version != kVersion) throw IoError("unsupported dataset version " + std::to_string(version));
  const auto n = read_le(is, 8, path);
  const auto seq_len = std::uint32_t(read_le(is, 4, path));
  const auto vocab = std::uint32_t(read_le(is, 4, path));
  std::vector<Token> tokens(n * seq_len);
  std::vector<unsigned char> raw(tokens.size() * 4);
  if (!is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
    throw IoError("truncated dataset: " + path.string());
  for (std::size_t k = 0; k < tokens.size(); ++k)
    tokens[k] = Token(raw[4 * k]) | Token(raw[4 * k + 1]) << 8 | Token(raw[4 * k + 2]) << 16 |
                Token(raw[4 * k + 3]) << 24;
  return Dataset(seq_len, vocab, std::move(tokens));
}

void save_hashes(const std::vector<Digest>& hashes, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write hashes: " + path.string());
  for (const auto& h : hashes) os.write(reinterpret_cast<const char*>(h.data()), 32);
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<Digest> load_hashes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open hashes: " + path.string());
  std::vector<Digest> out;
  Digest d;
  while (is.read(reinterpret_cast<char*>(d.data()), 32)) out.push_back(d);
  if (is.gcount() != 0) throw IoError("hashes file length is not a multiple of 32: " + path.string());
  return out;
}

Dataset generate_corpus(const CorpusSpec& spec, std::size_t n) {
  if (spec.vocab < 2 || spec.styles < 1 || spec.branching < 1 || spec.seq_len < 1)
    throw ConfigError("corpus: invalid spec");
  const std::uint32_t V = spec.vocab, B = std::min(spec.branching, spec.vocab);
  // successors[style][token] = B (next token, cumulative weight) pairs
  struct Edge {
    Token next;
    double cum;
  };
  std::vector<std::vector<Edge>> table(std::size_t(spec.styles) * V);
  ChaChaStream lang(Sha256().update("corpus-language").update_u64(spec.language_seed).finish());
  for (auto& row : table) {
    double total = 0.0;
    for (std::uint32_t b = 0; b < B; ++b) {
      const double w = std::exp(spec.skew * lang.gaussian());
      total += w;
      row.push_back({Token(lang.uniform_below(V)), total});
    }
    for (auto& e : row) e.cum /= total;
  }
  ChaChaStream rng(Sha256().update("corpus-sample").update_u64(spec.language_seed)
                       .update_u64(spec.sample_seed).finish());
  std::vector<Token> tokens;
  tokens.reserve(n * spec.seq_len);
  for (std::size_t i = 0; i < n; ++i) {
    const auto style = rng.uniform_below(spec.styles);
    Token cur = Token(rng.uniform_below(V));
    for (std::uint32_t t = 0; t < spec.seq_len; ++t) {
      tokens.push_back(cur);
      const auto& row = table[style * V + cur];
      const double u = rng.uniform();
      auto it = std::find_if(row.begin(), row.end(), [u](const Edge& e) { return u < e.cum; });
      cur = it == row.end() ? row.back().next : it->next;
    }
  }
  return Dataset(spec.seq_len, V, std::move(tokens));
}

}  // namespace potd
