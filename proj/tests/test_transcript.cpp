#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "potd/attacks.hpp"
#include "potd/errors.hpp"
#include "potd/json_io.hpp"
#include "potd/prover.hpp"

using namespace potd;
using potd::testkit::TempDir;
using potd::testkit::read_file;

namespace {

Transcript tiny_run(std::uint32_t seed = 1) {
  return prover::train_run(testkit::tiny_dataset(seed), testkit::tiny_hyper(seed));
}

void flip_byte(const std::filesystem::path& p, std::size_t offset_from_end) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(-std::streamoff(offset_from_end), std::ios::end);
  char c = 0;
  f.read(&c, 1);
  c ^= 0x10;
  f.seekp(-std::streamoff(offset_from_end), std::ios::end);
  f.write(&c, 1);
}

}  // namespace

TEST(HyperParams, ResolveFillsHoldoutAndM) {
  HyperParams h;
  h.k = 200;
  const auto r = h.resolved(2200);
  EXPECT_EQ(r.holdout, 220u);
  EXPECT_EQ(r.m, 10u);  // ceil(1980 / 200)
  h.m = 7;
  EXPECT_THROW(h.resolved(2200), ConfigError);
}

TEST(HyperParams, PlannedStepsCountsPartialBatches) {
  HyperParams h;
  h.k = 200;
  h.holdout = 200;
  h.batch_size = 16;
  EXPECT_EQ(h.planned_steps(2200), 10u * 13u);
}

TEST(HyperParams, JsonRoundTrip) {
  auto h = testkit::tiny_hyper(5);
  h.noise.enabled = true;
  h.noise.scale = 1e-5;
  h.epochs = 2;
  const auto back = hyper_from_json(to_json(h));
  EXPECT_EQ(back, h);
  EXPECT_EQ(to_json(back), to_json(h));
  EXPECT_FALSE(to_json(h).at("noise").contains("seed"));
}

TEST(HyperParams, UnknownKeyIsConfigError) {
  auto j = to_json(testkit::tiny_hyper(1));
  j["learning_rate"] = 1.0;
  EXPECT_THROW(hyper_from_json(j), ConfigError);
}

TEST(TranscriptIo, SaveLoadSaveIsByteIdentical) {
  const auto t = tiny_run();
  TempDir a("rt_a"), b("rt_b");
  save_transcript(t, a.path());
  const auto back = load_transcript(a.path());
  save_transcript(back, b.path());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(a.path())) {
    const auto name = e.path().filename().string();
    EXPECT_EQ(read_file(e.path()), read_file(b / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 3u + 2u * (t.m() + 1));
  EXPECT_EQ(back.digest(), t.digest());
  EXPECT_EQ(back.dataset, t.dataset);
  EXPECT_EQ(back.hyper, t.hyper);
  EXPECT_EQ(back.seed, t.seed);
  for (std::size_t i = 0; i <= t.m(); ++i) {
    EXPECT_EQ(back.weights(i), t.weights(i));
    EXPECT_EQ(back.checkpoints[i].optimizer, t.checkpoints[i].optimizer);
  }
}

TEST(TranscriptIo, CorruptCheckpointNamesIndex) {
  const auto t = tiny_run();
  TempDir d("corrupt");
  save_transcript(t, d.path());
  flip_byte(d / "ckpt_0002.bin", 5);
  try {
    load_transcript(d.path());
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.index(), 2);
  }
}

TEST(TranscriptIo, MissingFileIsIoError) {
  const auto t = tiny_run();
  TempDir d("missing");
  save_transcript(t, d.path());
  std::filesystem::remove(d / "ckpt_0001.bin");
  EXPECT_THROW(load_transcript(d.path()), IoError);
  EXPECT_THROW(load_transcript(d / "nowhere"), IoError);
}

TEST(TranscriptIo, MinimalTranscriptRoundTrips) {
  auto t = tiny_run();
  t.checkpoints.resize(2);
  t.final_digest = t.checkpoints.back().weights.digest();
  t.checkpoints[1].optimizer.reset();
  TempDir d("minimal");
  save_transcript(t, d.path());
  const auto back = load_transcript(d.path());
  EXPECT_EQ(back.m(), 1u);
  EXPECT_EQ(back.weights(1), t.weights(1));
  EXPECT_FALSE(back.checkpoints[1].optimizer.has_value());
  EXPECT_EQ(back.checkpoints[1].optimizer_digest, t.checkpoints[1].optimizer_digest);
}

TEST(TranscriptIo, CheckpointFileRoundTrip) {
  const auto w = tinylm::init_weights(sha256("ck"), testkit::tiny_arch());
  TempDir d("ck");
  save_checkpoint(w, d / "w.bin");
  EXPECT_EQ(load_checkpoint(d / "w.bin"), w);
  auto st = tinylm::OptimizerState::fresh(w.size());
  st.step = 17;
  st.m[3] = 0.5f;
  save_optimizer_state(st, d / "o.bin");
  EXPECT_EQ(load_optimizer_state(d / "o.bin"), st);
}

TEST(VerifyStructure, HonestPasses) {
  for (std::uint32_t s = 1; s <= 5; ++s) {
    const auto r = verify_structure(tiny_run(s));
    EXPECT_TRUE(r.pass) << r.failed_step << ": " << r.detail;
  }
}

TEST(VerifyStructure, ReplacedInitFailsAtInit) {
  const auto forged = attacks::replace_init(tiny_run(), 99).transcript;
  const auto r = verify_structure(forged);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.failed_step, "init");
}

TEST(VerifyStructure, EditedTokenFailsAtSeed) {
  auto t = tiny_run();
  t.dataset = t.dataset.with_token(7, 3, (t.dataset.point(7)[3] + 1) % t.dataset.vocab());
  const auto r = verify_structure(t);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.failed_step, "seed");
}

TEST(VerifyStructure, WrongFinalDigestFails) {
  auto t = tiny_run();
  t.final_digest = t.weights(0).digest();
  const auto r = verify_structure(t);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.failed_step, "final-weights");
}

TEST(VerifyStructure, ClaimedSrandMismatchFailsAtSeed) {
  auto t = tiny_run();
  t.hyper.s_rand += 1;
  EXPECT_EQ(verify_structure(t).failed_step, "seed");
}
