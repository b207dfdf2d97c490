#include "potd/commitment.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "potd/errors.hpp"

namespace potd::commitment {

Digest derive_seed(std::span<const Digest> point_hashes, std::uint32_t s_rand) {
  if (point_hashes.empty()) throw ConfigError("derive_seed: need at least one point hash");
  Sha256 h;
  for (const auto& d : point_hashes) h.update(d);
  h.update_u32(s_rand);
  return h.finish();
}

SeedCommitment commit(const Dataset& data, std::uint32_t s_rand) {
  SeedCommitment c;
  c.s = derive_seed(data.point_hashes(), s_rand);
  c.s_rand = s_rand;
  c.dataset_digest = data.digest();
  return c;
}

SeedCommitment extend_seed_online(const SeedCommitment& prev,
                                  std::span<const Digest> next_hashes, std::uint32_t s_rand) {
  SeedCommitment c;
  c.s = derive_seed(next_hashes, s_rand);
  c.s_rand = s_rand;
  Sha256 h;
  for (const auto& d : next_hashes) h.update(d);
  c.dataset_digest = h.finish();
  c.previous = prev.s;
  return c;
}

std::vector<std::uint32_t> seeded_permutation(const Digest& key, std::size_t n) {
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), 0u);
  ChaChaStream rng(key);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = rng.uniform_below(i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

DataOrder::DataOrder(std::vector<std::uint32_t> order, std::size_t holdout, std::size_t k,
                     std::uint32_t epochs, const Digest& s)
    : order_(std::move(order)), holdout_(holdout), k_(k), epochs_(epochs), s_(s) {
  const auto nt = n_train();
  epoch_orders_.emplace_back(order_.begin(), order_.begin() + std::ptrdiff_t(nt));
  for (std::uint32_t e = 1; e < epochs_; ++e) {
    const auto perm = seeded_permutation(derive_digest(s_, std::uint64_t(e)), nt);
    std::vector<std::uint32_t> ids(nt);
    for (std::size_t j = 0; j < nt; ++j) ids[j] = epoch_orders_[0][perm[j]];
    epoch_orders_.push_back(std::move(ids));
  }
}

std::span<const std::uint32_t> DataOrder::validation() const {
  return std::span<const std::uint32_t>(order_).subspan(n_train());
}

std::span<const std::uint32_t> DataOrder::training() const {
  return std::span<const std::uint32_t>(order_).first(n_train());
}

std::uint32_t DataOrder::epoch_of(std::size_t i) const {
  if (i < 1 || i > segment_count()) throw ContractError("segment index out of range");
  return std::uint32_t((i - 1) / segments_per_epoch());
}

std::vector<std::uint32_t> DataOrder::segment(std::size_t i) const {
  const auto e = epoch_of(i);
  const auto local = (i - 1) % segments_per_epoch();
  const auto& ids = epoch_orders_[e];
  const auto begin = local * k_;
  const auto end = std::min(ids.size(), begin + k_);
  return {ids.begin() + std::ptrdiff_t(begin), ids.begin() + std::ptrdiff_t(end)};
}

Digest DataOrder::digest() const {
  Sha256 h;
  h.update("potd-order").update_u64(n()).update_u64(holdout_).update_u64(k_).update_u32(epochs_);
  for (const auto& ids : epoch_orders_)
    for (auto v : ids) h.update_u32(v);
  for (auto v : validation()) h.update_u32(v);
  return h.finish();
}

std::size_t default_holdout(std::size_t n) {
  return std::clamp<std::size_t>(n / 10, 1, 2048);
}

DataOrder gen_order(const Digest& s, std::size_t n, std::size_t n_v, std::size_t k,
                    std::uint32_t epochs) {
  if (n_v < 1) throw ConfigError("gen_order: holdout size n_v must be at least 1");
  if (n_v >= n)
    throw ConfigError("gen_order: holdout n_v=" + std::to_string(n_v) +
                      " leaves no training points out of n=" + std::to_string(n));
  if (k < 1) throw ConfigError("gen_order: segment length k must be at least 1");
  if (2 * k > n - n_v)
    throw ConfigError("gen_order: segment length k=" + std::to_string(k) +
                      " exceeds half the training set (" + std::to_string(n - n_v) +
                      " points); at least two checkpoints per epoch are required");
  if (epochs < 1) throw ConfigError("gen_order: epochs must be at least 1");
  return DataOrder(seeded_permutation(s, n), n_v, k, epochs, s);
}

tinylm::WeightVector gen_init(const Digest& s, const tinylm::ArchConfig& arch) {
  return tinylm::init_weights(derive_digest(s, "init"), arch);
}

}  // namespace potd::commitment
