#pragma once

// Dataset commitment: seed derivation from point hashes, certified-random
// initialization, seeded data order and the validation holdout.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "potd/crypto.hpp"
#include "potd/dataset.hpp"
#include "potd/tinylm.hpp"

namespace potd::commitment {

struct SeedCommitment {
  Digest s{};
  std::uint32_t s_rand = 0;
  Digest dataset_digest{};
  // Seed of the previous stage when produced by extend_seed_online.
  std::optional<Digest> previous;

  bool operator==(const SeedCommitment&) const = default;
};

// s = H(H(d_1) ∘ ... ∘ H(d_n) ∘ s_rand), s_rand as 4 little-endian bytes.
// Throws ConfigError on an empty hash list.
Digest derive_seed(std::span<const Digest> point_hashes, std::uint32_t s_rand);

SeedCommitment commit(const Dataset& data, std::uint32_t s_rand);

// Starts a new stage of a batch-online run. The new seed depends only on the
// next dataset and its s_rand; `prev` is linked for the record.
SeedCommitment extend_seed_online(const SeedCommitment& prev,
                                  std::span<const Digest> next_hashes, std::uint32_t s_rand);

// Keyed Fisher-Yates shuffle of 0..n-1.
std::vector<std::uint32_t> seeded_permutation(const Digest& key, std::size_t n);

class DataOrder {
 public:
  DataOrder() = default;
  DataOrder(std::vector<std::uint32_t> order, std::size_t holdout, std::size_t k,
            std::uint32_t epochs, const Digest& s);

  const std::vector<std::uint32_t>& order() const { return order_; }
  std::size_t n() const { return order_.size(); }
  std::size_t holdout() const { return holdout_; }
  std::size_t k() const { return k_; }
  std::uint32_t epochs() const { return epochs_; }
  std::size_t n_train() const { return order_.size() - holdout_; }
  std::size_t segments_per_epoch() const { return (n_train() + k_ - 1) / k_; }
  std::size_t segment_count() const { return segments_per_epoch() * epochs_; }

  // Point ids of the validation holdout (last n_v positions of S).
  std::span<const std::uint32_t> validation() const;
  // Training point ids in epoch-0 order.
  std::span<const std::uint32_t> training() const;
  // Point ids of segment i, 1 <= i <= segment_count().
  std::vector<std::uint32_t> segment(std::size_t i) const;
  // Epoch of segment i.
  std::uint32_t epoch_of(std::size_t i) const;

  Digest digest() const;

 private:
  std::vector<std::uint32_t> order_;
  // Training ids per epoch; [0] is the prefix of order_.
  std::vector<std::vector<std::uint32_t>> epoch_orders_;
  std::size_t holdout_ = 0;
  std::size_t k_ = 1;
  std::uint32_t epochs_ = 1;
  Digest s_{};
};

// n_v default: 10% of n, at least 1, at most 2048.
std::size_t default_holdout(std::size_t n);

// S = G_p(s). Epoch 0 trains in S order; epoch e >= 1 reshuffles the training
// positions with the stream keyed by H(s ∘ e). Throws ConfigError unless
// 1 <= n_v < n, k >= 1 and k <= (n - n_v) / 2.
DataOrder gen_order(const Digest& s, std::size_t n, std::size_t n_v, std::size_t k,
                    std::uint32_t epochs = 1);

// W_0 = G_r(s), seeded with H(s ∘ "init").
tinylm::WeightVector gen_init(const Digest& s, const tinylm::ArchConfig& arch);

}  // namespace potd::commitment
