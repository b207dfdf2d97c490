#pragma once

// A small next-token model used as the training substrate:
//
//   context tokens -> embedding (concat) -> tanh hidden layers -> vocab logits
//
// Weights live in one flat float32 vector described by a shape table. All
// forward/backward arithmetic runs in double and is written as fixed-order
// loops, so a training step is a pure function of its inputs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "potd/crypto.hpp"

namespace potd {

using Token = std::uint32_t;

namespace tinylm {

enum class InitScheme { scaled_gaussian, gaussian, zeros };

std::string to_string(InitScheme s);
InitScheme init_scheme_from_string(const std::string& s);

struct ArchConfig {
  std::uint32_t vocab = 96;
  std::uint32_t seq_len = 64;
  std::uint32_t context = 8;
  std::uint32_t embed_dim = 16;
  std::vector<std::uint32_t> hidden = {192, 192};
  InitScheme init = InitScheme::scaled_gaussian;
  // Gaussian std for `gaussian`; multiplier on 1/sqrt(fan_in) for `scaled_gaussian`.
  double init_scale = 1.0;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

struct TensorShape {
  std::string name;
  std::vector<std::uint32_t> dims;

  std::size_t numel() const;
  bool operator==(const TensorShape&) const = default;
};

std::vector<TensorShape> shape_table(const ArchConfig& arch);
std::size_t param_count(const ArchConfig& arch);

class WeightVector {
 public:
  WeightVector() = default;
  WeightVector(std::vector<TensorShape> shapes, std::vector<float> flat);
  static WeightVector zeros(const ArchConfig& arch);

  std::size_t size() const { return flat_.size(); }
  const std::vector<TensorShape>& shapes() const { return shapes_; }
  std::span<float> flat() { return flat_; }
  std::span<const float> flat() const { return flat_; }

  std::span<float> tensor(std::size_t index);
  std::span<const float> tensor(std::size_t index) const;
  std::size_t offset(std::size_t index) const { return offsets_.at(index); }

  bool all_finite() const;
  // SHA-256 over the canonical little-endian payload.
  Digest digest() const;

  bool operator==(const WeightVector& o) const;

 private:
  void build_offsets();

  std::vector<TensorShape> shapes_;
  std::vector<float> flat_;
  std::vector<std::size_t> offsets_;
};

WeightVector init_weights(const Digest& seed, const ArchConfig& arch);

using Batch = std::vector<std::span<const Token>>;

// Mean next-token cross-entropy (nats/token) for every sequence in the batch.
std::vector<double> forward_loss(const ArchConfig& arch, const WeightVector& w, const Batch& batch);

enum class OptimizerKind { adam, sgd_momentum };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 3e-3;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double eps = 1e-8;
  double momentum = 0.9;  // sgd_momentum only
  double weight_decay = 0.0;
  std::uint64_t warmup_steps = 20;
  std::uint64_t total_steps = 0;  // cosine horizon; 0 means constant after warmup
  double min_lr_ratio = 0.1;

  double lr_at(std::uint64_t step) const;
  bool operator==(const OptimizerConfig&) const = default;
};

// Simulated hardware noise: after every update the weights receive
// scale * N(0, 1) drawn from a stream keyed by (seed, step).
struct NoiseConfig {
  bool enabled = false;
  double scale = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const NoiseConfig&) const = default;
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<float> m;  // first moment / momentum buffer
  std::vector<float> v;  // second moment (adam only; zeros otherwise)

  static OptimizerState fresh(std::size_t d);
  Digest digest() const;
  bool operator==(const OptimizerState&) const = default;
};

struct StepResult {
  double loss = 0.0;  // mean loss on the batch before the update
};

// One optimizer update in place. Throws TrainingError on a non-finite
// gradient (naming the tensor) and ContractError on shape mismatch.
StepResult train_step(const ArchConfig& arch, WeightVector& w, OptimizerState& state,
                      const Batch& batch, const OptimizerConfig& opt,
                      const NoiseConfig& noise = {});

// Full gradient of the mean batch loss, in flat layout. Exposed for
// finite-difference checks.
std::vector<double> gradient(const ArchConfig& arch, const WeightVector& w, const Batch& batch,
                             double* loss_out = nullptr);

// Mean batch loss evaluated in double from a double-precision parameter
// vector (used by the finite-difference oracle).
double batch_loss(const ArchConfig& arch, std::span<const double> params, const Batch& batch);

using HiddenPermutation = std::vector<std::vector<std::uint32_t>>;

// Reorders hidden units of every hidden layer. perm[l][j] is the old unit
// placed at new position j. The permuted model computes the same function.
WeightVector permute_hidden_units(const ArchConfig& arch, const WeightVector& w,
                                  const HiddenPermutation& perm);
// Same permutation applied to optimizer buffers so training commutes with it.
OptimizerState permute_hidden_units(const ArchConfig& arch, const OptimizerState& s,
                                    const HiddenPermutation& perm);

double weight_distance(const WeightVector& a, const WeightVector& b);
double weight_norm(const WeightVector& a);

}  // namespace tinylm
}  // namespace potd
