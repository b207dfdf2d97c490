#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "potd/dataset.hpp"
#include "potd/transcript.hpp"

namespace potd::testkit {

// Reference desk configuration: ~82K parameters, n = 2200, n_v = 200, k = 200,
// m = 10, batch 16, cosine schedule over the whole run.
inline constexpr std::size_t kDeskN = 2200;
HyperParams desk_hyper(std::uint32_t s_rand);
Dataset desk_dataset(std::uint64_t sample_seed, std::size_t n = kDeskN);

// Honest desk transcript for (sample seed, s_rand) = (seed, seed). Trained once
// and cached on disk under the test cache directory, so separate test
// processes share it.
const Transcript& desk_transcript(std::uint32_t seed);

// Same distribution as desk_dataset, disjoint sample stream.
Dataset undisclosed_dataset(std::uint64_t sample_seed, std::size_t n);
// Different language (transition tables).
Dataset off_distribution_dataset(std::uint64_t sample_seed, std::size_t n);

// Small architecture for fast structural tests: vocab 16, seq 12, m = 4.
tinylm::ArchConfig tiny_arch();
HyperParams tiny_hyper(std::uint32_t s_rand);
Dataset tiny_dataset(std::uint64_t sample_seed, std::size_t n = 60);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p);

}  // namespace potd::testkit
