#pragma once

// Spoofed-transcript generators. Each returns the forged transcript plus a
// ground-truth record that is written next to it but never read by the
// verifier.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "potd/json_io.hpp"
#include "potd/transcript.hpp"

namespace potd::attacks {

struct Provenance {
  std::string kind;  // glue | interpolate | add | subtract | reinit
  Json params = Json::object();
  std::vector<std::size_t> tampered_segments;
  std::vector<std::uint32_t> dropped_ids;  // subtract only

  Json to_json() const;
};

struct AttackResult {
  Transcript transcript;
  Provenance provenance;
};

inline constexpr const char* kSidecarName = "attack.json";

void write_sidecar(const Provenance& p, const std::filesystem::path& dir);
Provenance read_sidecar(const std::filesystem::path& dir);

// Checkpoints (W^A_0..W^A_i, W^B_{j+1}..W^B_{m_B}) under tA's manifest, so
// i = j = 0 with tA = tB reproduces tA. Throws ContractError when the weight
// dimensions differ or i > m_A, j >= m_B.
AttackResult glue(const Transcript& a, const Transcript& b, std::size_t i, std::size_t j);

// Continues tA from W^A_i on `undisclosed` data for m - i segments with the
// same schedule. Needs tA's optimizer state at i.
tinylm::WeightVector continuation_target(const Transcript& a, std::size_t i,
                                         const Dataset& undisclosed);

// Replaces W^A_{i+1}..W^A_{i+steps} by convex combinations a_s*target +
// (1-a_s)*W^A_i with a_steps = 1. Without calibration a_s = s/steps; with it
// the a_s are chosen by bisection so the validation loss of the claimed
// holdout continues the honest trend geometrically. Throws ContractError
// unless steps >= 1 and i + steps <= m.
AttackResult interpolate(const Transcript& a, std::size_t i, const tinylm::WeightVector& target,
                         std::size_t steps, bool calibrate_val_loss);

// Retrains segment i with ceil(fraction*|Π_i|) points of `extra` interleaved
// into the committed sequence; later segments are trained honestly from the
// altered W_i. fraction = 0 reproduces tA.
AttackResult add_data(const Transcript& a, std::size_t i, const Dataset& extra, double fraction);

// Retrains segment i on a uniformly chosen (1 - kappa) share of Π_i (committed
// order kept) while the manifest still claims all of Π_i. kappa = 0
// reproduces tA. Throws ContractError unless 0 <= kappa <= 1.
AttackResult subtract_data(const Transcript& a, std::size_t i, double kappa, std::uint64_t seed);

// W_0 swapped for an initialization from another seed.
AttackResult replace_init(const Transcript& a, std::uint64_t seed);

}  // namespace potd::attacks
