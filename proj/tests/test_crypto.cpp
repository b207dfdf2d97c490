#include <gtest/gtest.h>

#include <array>
#include <set>

#include "potd/crypto.hpp"
#include "potd/dataset.hpp"

using namespace potd;

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(to_hex(sha256("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::array<std::uint8_t, 8> zeros{};
  EXPECT_EQ(to_hex(sha256(zeros)),
            "af5570f5a1810b7af78caf4bc70a660f0df51e42baf91d4de5b2328de0e83dfc");
}

TEST(Sha256, IncrementalMatchesOneShot) {
  Sha256 h;
  h.update("a").update("bc");
  EXPECT_EQ(h.finish(), sha256("abc"));
}

TEST(Sha256, HexRoundTrip) {
  const auto d = sha256("round trip");
  EXPECT_EQ(digest_from_hex(to_hex(d)), d);
}

TEST(Sha256, DeriveSeparatesLabels) {
  const auto root = sha256("root");
  EXPECT_NE(derive_digest(root, "a"), derive_digest(root, "b"));
  EXPECT_NE(derive_digest(root, std::uint64_t(1)), derive_digest(root, std::uint64_t(2)));
  EXPECT_EQ(derive_digest(root, "a"), derive_digest(root, "a"));
}

TEST(HashPoint, CanonicalSerialization) {
  // 8-byte length header then 4-byte little-endian tokens.
  const std::vector<Token> p{1, 2, 3};
  EXPECT_EQ(to_hex(hash_point(p)),
            "62464da5afe5d016e96fc02cdb43c0125755e4ee7cdb9fc03c1fe1d544f5c768");
  EXPECT_EQ(to_hex(hash_point(std::span<const Token>())),
            "af5570f5a1810b7af78caf4bc70a660f0df51e42baf91d4de5b2328de0e83dfc");
}

TEST(ChaChaStream, DeterministicPerKeyAndStream) {
  const auto key = sha256("key");
  ChaChaStream a(key), b(key), c(key, 1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(ChaChaStream, UniformBelowCoversRangeEvenly) {
  ChaChaStream s(sha256("uniform"));
  std::array<int, 7> counts{};
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) {
    const auto v = s.uniform_below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - draws / 7.0) * (c - draws / 7.0) / (draws / 7.0);
  EXPECT_LT(chi2, 22.5);  // 6 dof, p = 0.001
}

TEST(ChaChaStream, GaussianMoments) {
  ChaChaStream s(sha256("gauss"));
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = s.gaussian();
    sum += g;
    sq += g * g;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(ChaChaStream, UniformInUnitInterval) {
  ChaChaStream s(sha256("unit"));
  std::set<double> seen;
  for (int i = 0; i < 1000; ++i) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    seen.insert(u);
  }
  EXPECT_EQ(seen.size(), 1000u);
}
