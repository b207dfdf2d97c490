#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "potd/errors.hpp"
#include "potd/prover.hpp"

#include <unistd.h>

namespace potd::testkit {

HyperParams desk_hyper(std::uint32_t s_rand) {
  HyperParams h;
  h.k = 200;
  h.holdout = 200;
  h.s_rand = s_rand;
  h.optimizer.total_steps = h.planned_steps(kDeskN);
  return h;
}

Dataset desk_dataset(std::uint64_t sample_seed, std::size_t n) {
  CorpusSpec spec;
  spec.sample_seed = sample_seed;
  return generate_corpus(spec, n);
}

const Transcript& desk_transcript(std::uint32_t seed) {
  static std::map<std::uint32_t, std::unique_ptr<Transcript>> memo;
  auto& slot = memo[seed];
  if (slot) return *slot;
  const std::filesystem::path dir =
      std::filesystem::path(POTD_TEST_CACHE) / ("desk_" + std::to_string(seed));
  const auto hyper = desk_hyper(seed);
  if (std::filesystem::exists(dir / "manifest.json")) {
    try {
      auto t = load_transcript(dir);
      if (t.hyper == hyper.resolved(kDeskN) && t.dataset.digest() == desk_dataset(seed).digest()) {
        slot = std::make_unique<Transcript>(std::move(t));
        return *slot;
      }
    } catch (const std::exception&) {
    }
  }
  slot = std::make_unique<Transcript>(prover::train_run(desk_dataset(seed), hyper));
  const auto tmp = dir.string() + ".tmp" + std::to_string(::getpid());
  std::filesystem::remove_all(tmp);
  save_transcript(*slot, tmp);
  std::filesystem::remove_all(dir);
  std::filesystem::rename(tmp, dir);
  return *slot;
}

Dataset undisclosed_dataset(std::uint64_t sample_seed, std::size_t n) {
  CorpusSpec spec;
  spec.sample_seed = 1'000'000 + sample_seed;
  return generate_corpus(spec, n);
}

Dataset off_distribution_dataset(std::uint64_t sample_seed, std::size_t n) {
  CorpusSpec spec;
  spec.language_seed = 777;
  spec.sample_seed = sample_seed;
  return generate_corpus(spec, n);
}

tinylm::ArchConfig tiny_arch() {
  tinylm::ArchConfig a;
  a.vocab = 16;
  a.seq_len = 12;
  a.context = 3;
  a.embed_dim = 4;
  a.hidden = {8, 8};
  return a;
}

HyperParams tiny_hyper(std::uint32_t s_rand) {
  HyperParams h;
  h.arch = tiny_arch();
  h.k = 12;
  h.holdout = 12;
  h.batch_size = 4;
  h.s_rand = s_rand;
  h.optimizer.lr = 1e-2;
  h.optimizer.warmup_steps = 2;
  h.optimizer.total_steps = 12;
  return h;
}

Dataset tiny_dataset(std::uint64_t sample_seed, std::size_t n) {
  CorpusSpec spec;
  spec.vocab = 16;
  spec.seq_len = 12;
  spec.branching = 3;
  spec.sample_seed = sample_seed;
  return generate_corpus(spec, n);
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("potd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace potd::testkit
