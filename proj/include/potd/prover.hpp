#pragma once

// Honest prover: committed training over the seeded data order, one
// checkpoint per segment, plus segment re-execution for the verifier.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "potd/transcript.hpp"

namespace potd::prover {

using Sequences = std::vector<std::span<const Token>>;

// Replaces the sequences trained in segment i (ids are the committed point
// ids of Π_i). Returning nullopt keeps the committed data. Used by the attack
// generators; honest runs leave it empty.
using SegmentOverride =
    std::function<std::optional<Sequences>(std::size_t i, const std::vector<std::uint32_t>& ids)>;

struct RunHooks {
  SegmentOverride segment_override;
  // Called after each segment with its index and mean training loss.
  std::function<void(std::size_t, double)> on_segment;
};

// Trains `seqs` in order, in batches of hp.batch_size. Returns the mean batch
// loss. Throws TrainingError on divergence.
double train_sequences(const HyperParams& hp, const Sequences& seqs, tinylm::WeightVector& w,
                       tinylm::OptimizerState& state, const tinylm::NoiseConfig& noise);

Sequences committed_sequences(const Dataset& data, std::span<const std::uint32_t> ids);

// Optimizer steps and summed learning rate of each claimed segment 1..m.
struct SegmentSchedule {
  std::vector<std::uint64_t> steps;
  std::vector<double> lr_sum;
};
SegmentSchedule segment_schedule(const HyperParams& hp, const commitment::DataOrder& order);

// Throws ConfigError when dataset and hyperparameters are inconsistent and
// TrainingError (with segment index) on divergence.
Transcript train_run(const Dataset& data, const HyperParams& hyper, const RunHooks& hooks = {});

// Keeps checkpoints 0 .. from-1 of `base` and retrains segments from..m.
// Needs the full optimizer state at checkpoint from-1.
Transcript resume_run(const Transcript& base, std::size_t from, const RunHooks& hooks = {});

// Re-executes segment i from W_{i-1}. With the noise channel enabled the
// given seed replaces the prover's (unknown) one. Throws ConfigError when the
// transcript lacks the optimizer state at i-1 and ContractError for a bad i.
tinylm::WeightVector retrain_segment(const Transcript& t, std::size_t i,
                                     std::uint64_t noise_seed = 0);

}  // namespace potd::prover
