#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "fixtures.hpp"
#include "potd/commitment.hpp"
#include "potd/errors.hpp"
#include "potd/tinylm.hpp"

using namespace potd;
using namespace potd::tinylm;

namespace {

Batch rows(const Dataset& d, std::size_t from, std::size_t count) {
  Batch b;
  for (std::size_t i = from; i < from + count; ++i) b.push_back(d.point(i));
  return b;
}

HiddenPermutation random_perm(const ArchConfig& arch, std::uint64_t seed) {
  HiddenPermutation p;
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    const auto v = commitment::seeded_permutation(
        derive_digest(sha256("perm"), seed * 16 + l), arch.hidden[l]);
    p.push_back(v);
  }
  return p;
}

double cosine(const WeightVector& a, const WeightVector& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a.flat()[i]) * b.flat()[i];
    aa += double(a.flat()[i]) * a.flat()[i];
    bb += double(b.flat()[i]) * b.flat()[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Arch, DefaultSizeAndValidation) {
  ArchConfig a;
  EXPECT_GT(param_count(a), 50000u);
  EXPECT_LT(param_count(a), 150000u);
  std::size_t total = 0;
  for (const auto& s : shape_table(a)) total += s.numel();
  EXPECT_EQ(total, param_count(a));
  a.vocab = 1;
  EXPECT_THROW(a.validate(), ConfigError);
  a = ArchConfig{};
  a.hidden.clear();
  EXPECT_THROW(a.validate(), ConfigError);
}

TEST(InitWeights, ZeroSchemeIsZero) {
  auto a = testkit::tiny_arch();
  a.init = InitScheme::zeros;
  const auto w = init_weights(Digest{}, a);
  for (float x : w.flat()) EXPECT_EQ(x, 0.0f);
}

TEST(InitWeights, Deterministic) {
  const ArchConfig a;
  const auto s = sha256("init");
  EXPECT_EQ(init_weights(s, a), init_weights(s, a));
  EXPECT_EQ(weight_distance(init_weights(s, a), init_weights(s, a)), 0.0);
}

TEST(InitWeights, IndependentSeedsNearlyOrthogonal) {
  ArchConfig a;
  a.init = InitScheme::gaussian;
  a.init_scale = 0.1;
  a.hidden = {64, 64};
  const auto w1 = init_weights(sha256(std::string(1, '\1')), a);
  const auto w2 = init_weights(sha256(std::string(1, '\2')), a);
  ASSERT_GE(w1.size(), 10000u);
  EXPECT_LT(std::abs(cosine(w1, w2)), 0.05);
}

TEST(ForwardLoss, ZeroWeightsGiveLogVocab) {
  const auto a = testkit::tiny_arch();
  const auto d = testkit::tiny_dataset(3, 8);
  const auto losses = forward_loss(a, WeightVector::zeros(a), rows(d, 0, 8));
  for (double l : losses) EXPECT_NEAR(l, std::log(double(a.vocab)), 1e-12);
}

TEST(ForwardLoss, IdenticalRowsIdenticalLosses) {
  const ArchConfig a;
  const auto d = testkit::desk_dataset(1, 4);
  const auto w = init_weights(sha256("w"), a);
  Batch b{d.point(2), d.point(2), d.point(2)};
  const auto l = forward_loss(a, w, b);
  EXPECT_EQ(l[0], l[1]);
  EXPECT_EQ(l[1], l[2]);
}

TEST(ForwardLoss, FiniteNonnegativeWithinEnvelope) {
  const ArchConfig a;
  const auto d = testkit::desk_dataset(5, 64);
  for (int s = 0; s < 3; ++s) {
    const auto w = init_weights(derive_digest(sha256("env"), std::uint64_t(s)), a);
    for (double l : forward_loss(a, w, rows(d, 0, 64))) {
      ASSERT_TRUE(std::isfinite(l));
      EXPECT_GE(l, 0.0);
      EXPECT_LE(l, 2.0 * std::log(double(a.vocab)));
    }
  }
}

TEST(ForwardLoss, ShapeMismatchIsContractError) {
  const auto w = WeightVector::zeros(testkit::tiny_arch());
  const auto d = testkit::desk_dataset(1, 2);
  EXPECT_THROW(forward_loss(ArchConfig{}, w, rows(d, 0, 2)), ContractError);
}

TEST(Gradient, MatchesCentralDifferences) {
  const auto a = testkit::tiny_arch();
  ASSERT_LE(param_count(a), 500u);
  const auto d = testkit::tiny_dataset(9, 4);
  const auto batch = rows(d, 0, 4);
  const auto w = init_weights(sha256("fd"), a);
  const auto g = gradient(a, w, batch);
  std::vector<double> p(w.flat().begin(), w.flat().end());
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = batch_loss(a, p, batch);
    p[i] = keep - h;
    const double down = batch_loss(a, p, batch);
    p[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainStep, ZeroLearningRateKeepsWeights) {
  const auto a = testkit::tiny_arch();
  const auto d = testkit::tiny_dataset(2, 4);
  auto w = init_weights(sha256("lr0"), a);
  const auto before = w;
  auto st = OptimizerState::fresh(w.size());
  OptimizerConfig opt;
  opt.lr = 0.0;
  train_step(a, w, st, rows(d, 0, 4), opt);
  EXPECT_EQ(w, before);
  EXPECT_EQ(st.step, 1u);
  EXPECT_TRUE(std::any_of(st.m.begin(), st.m.end(), [](float x) { return x != 0.0f; }));
}

TEST(TrainStep, BitIdenticalFromSnapshot) {
  const ArchConfig a;
  const auto d = testkit::desk_dataset(4, 16);
  auto w1 = init_weights(sha256("snap"), a);
  auto s1 = OptimizerState::fresh(w1.size());
  OptimizerConfig opt;
  train_step(a, w1, s1, rows(d, 0, 16), opt);
  auto w2 = w1;
  auto s2 = s1;
  train_step(a, w1, s1, rows(d, 0, 16), opt);
  train_step(a, w2, s2, rows(d, 0, 16), opt);
  EXPECT_EQ(w1, w2);
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(s1.step, 2u);
}

TEST(TrainStep, SgdMomentumMovesWeights) {
  const auto a = testkit::tiny_arch();
  const auto d = testkit::tiny_dataset(2, 4);
  auto w = init_weights(sha256("sgd"), a);
  const auto before = w;
  auto st = OptimizerState::fresh(w.size());
  OptimizerConfig opt;
  opt.kind = OptimizerKind::sgd_momentum;
  opt.warmup_steps = 0;
  opt.lr = 0.1;
  train_step(a, w, st, rows(d, 0, 4), opt);
  EXPECT_GT(weight_distance(w, before), 0.0);
}

TEST(TrainStep, NonFiniteWeightsAreTrainingError) {
  const auto a = testkit::tiny_arch();
  const auto d = testkit::tiny_dataset(2, 4);
  auto w = init_weights(sha256("nan"), a);
  w.flat()[3] = std::numeric_limits<float>::quiet_NaN();
  auto st = OptimizerState::fresh(w.size());
  EXPECT_THROW(train_step(a, w, st, rows(d, 0, 4), OptimizerConfig{}), TrainingError);
}

TEST(Schedule, WarmupThenCosine) {
  OptimizerConfig o;
  o.lr = 1.0;
  o.warmup_steps = 10;
  o.total_steps = 110;
  o.min_lr_ratio = 0.1;
  EXPECT_LT(o.lr_at(0), o.lr_at(5));
  EXPECT_NEAR(o.lr_at(10), 1.0, 1e-12);
  EXPECT_NEAR(o.lr_at(110), 0.1, 1e-9);
  for (std::uint64_t s = 10; s < 110; ++s) EXPECT_GE(o.lr_at(s), o.lr_at(s + 1));
}

TEST(Permutation, IdentityIsNoOp) {
  const ArchConfig a;
  const auto w = init_weights(sha256("id"), a);
  HiddenPermutation id;
  for (auto h : a.hidden) {
    std::vector<std::uint32_t> p(h);
    std::iota(p.begin(), p.end(), 0u);
    id.push_back(p);
  }
  EXPECT_EQ(permute_hidden_units(a, w, id), w);
}

TEST(Permutation, PreservesLosses) {
  const ArchConfig a;
  const auto d = testkit::desk_dataset(6, 8);
  const auto w = init_weights(sha256("perm-loss"), a);
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto pw = permute_hidden_units(a, w, random_perm(a, s));
    const auto l0 = forward_loss(a, w, rows(d, 0, 8));
    const auto l1 = forward_loss(a, pw, rows(d, 0, 8));
    for (std::size_t i = 0; i < l0.size(); ++i) EXPECT_NEAR(l1[i], l0[i], 1e-10 * l0[i]);
  }
}

TEST(Permutation, TrainingIsEquivariant) {
  const ArchConfig a;
  const auto d = testkit::desk_dataset(7, 48);
  const auto w0 = init_weights(sha256("equi"), a);
  const auto perm = random_perm(a, 11);
  OptimizerConfig opt;
  opt.warmup_steps = 0;
  auto w = w0;
  auto st = OptimizerState::fresh(w.size());
  auto pw = permute_hidden_units(a, w0, perm);
  auto pst = permute_hidden_units(a, OptimizerState::fresh(w.size()), perm);
  for (std::size_t b = 0; b < 3; ++b) {
    train_step(a, w, st, rows(d, b * 16, 16), opt);
    train_step(a, pw, pst, rows(d, b * 16, 16), opt);
  }
  const auto expect = permute_hidden_units(a, w, perm);
  double linf = 0.0;
  for (std::size_t i = 0; i < pw.size(); ++i)
    linf = std::max(linf, std::abs(double(pw.flat()[i]) - double(expect.flat()[i])));
  EXPECT_LT(linf, 1e-8);
}

TEST(Permutation, WrongLengthIsContractError) {
  const ArchConfig a;
  const auto w = WeightVector::zeros(a);
  HiddenPermutation bad{{0, 1, 2}, {0, 1, 2}};
  EXPECT_THROW(permute_hidden_units(a, w, bad), ContractError);
}

TEST(WeightDistance, BasicCases) {
  const auto a = testkit::tiny_arch();
  const auto z = WeightVector::zeros(a);
  auto e = z;
  e.flat()[7] = 1.0f;
  EXPECT_EQ(weight_distance(z, z), 0.0);
  EXPECT_EQ(weight_distance(z, e), 1.0);
  EXPECT_EQ(weight_distance(e, z), 1.0);
  EXPECT_THROW(weight_distance(z, WeightVector::zeros(ArchConfig{})), ContractError);
}

TEST(WeightDistance, TriangleInequality) {
  const auto a = testkit::tiny_arch();
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto x = init_weights(derive_digest(sha256("tri"), 3 * s), a);
    const auto y = init_weights(derive_digest(sha256("tri"), 3 * s + 1), a);
    const auto z = init_weights(derive_digest(sha256("tri"), 3 * s + 2), a);
    EXPECT_LE(weight_distance(x, z), weight_distance(x, y) + weight_distance(y, z) + 1e-12);
  }
}
