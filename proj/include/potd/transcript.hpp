#pragma once

// On-disk training transcript: dataset, hyperparameters and the checkpoint
// sequence W_0 ... W_m.
//
// Directory layout:
//   manifest.json     versioned manifest (hyperparameters, commitment, digests)
//   dataset.bin       the claimed dataset
//   hashes.bin        its per-point hashes
//   ckpt_NNNN.bin     weights of checkpoint N
//   opt_NNNN.bin      optimizer state of checkpoint N (when stored)

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "potd/commitment.hpp"
#include "potd/dataset.hpp"
#include "potd/tinylm.hpp"

namespace potd {

struct HyperParams {
  tinylm::ArchConfig arch;
  tinylm::OptimizerConfig optimizer;
  // Only `enabled` and `scale` are published; the prover's noise seed stands
  // in for irreproducible hardware state and is never written to disk.
  tinylm::NoiseConfig noise;
  std::uint32_t batch_size = 16;
  std::uint64_t k = 200;        // segment length
  std::uint64_t m = 0;          // checkpoint count; 0 = derive from n
  std::uint32_t epochs = 1;
  std::uint32_t s_rand = 0;
  std::uint64_t holdout = 0;    // n_v; 0 = default_holdout(n)
  bool store_optimizer_state = true;

  // Copy with m and holdout filled in for a dataset of n points. Throws
  // ConfigError if an explicit m does not tile the training set.
  HyperParams resolved(std::size_t n) const;
  // Optimizer steps of the whole run (sum over segments of ceil(|Π_i|/b)).
  std::uint64_t planned_steps(std::size_t n) const;

  bool operator==(const HyperParams&) const;
};

struct Checkpoint {
  std::uint64_t index = 0;
  tinylm::WeightVector weights;
  Digest optimizer_digest{};
  std::optional<tinylm::OptimizerState> optimizer;
};

struct Transcript {
  Dataset dataset;
  HyperParams hyper;
  commitment::SeedCommitment seed;
  Digest order_digest{};
  Digest final_digest{};  // claimed W*
  std::vector<Checkpoint> checkpoints;

  std::size_t m() const { return checkpoints.empty() ? 0 : checkpoints.size() - 1; }
  const tinylm::WeightVector& weights(std::size_t i) const { return checkpoints.at(i).weights; }
  // Order re-derived from the committed seed.
  commitment::DataOrder order() const;
  // Binds the audit RNG to this transcript.
  Digest digest() const;
};

// Throws IoError on filesystem problems.
void save_transcript(const Transcript& t, const std::filesystem::path& dir);
// Throws IoError for missing/unreadable files and IntegrityError (carrying the
// checkpoint index) when a payload does not match its manifest digest.
Transcript load_transcript(const std::filesystem::path& dir);

void save_checkpoint(const tinylm::WeightVector& w, const std::filesystem::path& path);
tinylm::WeightVector load_checkpoint(const std::filesystem::path& path);
void save_optimizer_state(const tinylm::OptimizerState& s, const std::filesystem::path& path);
tinylm::OptimizerState load_optimizer_state(const std::filesystem::path& path);

struct StructureCheck {
  bool pass = true;
  std::string failed_step;  // "final-weights", "seed", "init" or "order"
  std::string detail;
};

// Re-derives seed, W_0 and data order from the dataset alone and compares
// them with the transcript bitwise. Failures are results, not exceptions.
StructureCheck verify_structure(const Transcript& t);

}  // namespace potd
