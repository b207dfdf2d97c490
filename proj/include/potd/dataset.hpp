#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "potd/crypto.hpp"
#include "potd/tinylm.hpp"

namespace potd {

// Ordered list of fixed-length token sequences plus their content hashes.
class Dataset {
 public:
  Dataset() = default;
  // Hashes every point; throws ConfigError when n < 2, a row has the wrong
  // length, or a token is out of vocabulary.
  Dataset(std::uint32_t seq_len, std::uint32_t vocab, std::vector<Token> tokens);

  std::size_t size() const { return hashes_.size(); }
  std::uint32_t seq_len() const { return seq_len_; }
  std::uint32_t vocab() const { return vocab_; }
  std::span<const Token> point(std::size_t i) const;
  std::span<const Token> tokens() const { return tokens_; }
  const std::vector<Digest>& point_hashes() const { return hashes_; }

  // H(H(d_1) ∘ ... ∘ H(d_n)).
  Digest digest() const;
  // Returns a copy with a single token replaced (hashes recomputed).
  Dataset with_token(std::size_t point, std::size_t pos, Token value) const;
  // Rows `indices` of this dataset, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const Dataset& o) const {
    return seq_len_ == o.seq_len_ && vocab_ == o.vocab_ && tokens_ == o.tokens_;
  }

 private:
  std::uint32_t seq_len_ = 0;
  std::uint32_t vocab_ = 0;
  std::vector<Token> tokens_;
  std::vector<Digest> hashes_;
};

// Canonical point serialization: u64 LE length, then u32 LE token ids.
std::vector<std::uint8_t> serialize_point(std::span<const Token> point);
Digest hash_point(std::span<const Token> point);

// Dataset file: "POTD", u32 version, u64 n, u32 seq_len, u32 vocab, then
// n*seq_len u32 LE token ids. Hashes file: n raw 32-byte digests.
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
void save_hashes(const std::vector<Digest>& hashes, const std::filesystem::path& path);
std::vector<Digest> load_hashes(const std::filesystem::path& path);

// Synthetic corpus: a mixture of sparse first-order Markov "styles". Each
// sequence picks one style and walks its transition table. Two corpora with
// the same `language_seed` share a distribution; `sample_seed` selects the
// concrete sequences.
struct CorpusSpec {
  std::uint32_t vocab = 96;
  std::uint32_t seq_len = 64;
  std::uint32_t styles = 1;
  std::uint32_t branching = 6;
  // Log-normal spread of transition weights; 0 gives uniform successors.
  double skew = 0.0;
  std::uint64_t language_seed = 1;
  std::uint64_t sample_seed = 1;
};

Dataset generate_corpus(const CorpusSpec& spec, std::size_t n);

}  // namespace potd
