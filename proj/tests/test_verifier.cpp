#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "potd/attacks.hpp"
#include "potd/errors.hpp"
#include "potd/prover.hpp"
#include "potd/verifier.hpp"

using namespace potd;
using namespace potd::verifier;

namespace {

bool has(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

const Transcript& glued_desk() {
  static const Transcript t =
      attacks::glue(testkit::desk_transcript(1), testkit::desk_transcript(2), 5, 5).transcript;
  return t;
}

}  // namespace

TEST(ReproductionError, Cases) {
  const auto a = testkit::tiny_arch();
  const auto prev = tinylm::init_weights(sha256("p"), a);
  const auto cur = tinylm::init_weights(sha256("c"), a);
  EXPECT_EQ(reproduction_error(cur, cur, prev), 0.0);
  EXPECT_DOUBLE_EQ(reproduction_error(cur, prev, prev), 2.0);
  EXPECT_EQ(reproduction_error(prev, prev, prev), 0.0);
  auto other = prev;
  other.flat()[0] += 1.0f;
  EXPECT_DOUBLE_EQ(reproduction_error(prev, other, prev), 2.0);
}

TEST(CostModel, Examples) {
  const auto c = cost_model(1e6, 0.01, 0, 10, 1e-3, 1.0);
  EXPECT_NEAR(c.inference_ratio, 0.04 / 3.0, 1e-12);
  EXPECT_EQ(c.retrain, 0.0);
  const auto z = cost_model(1e6, 0.0, 3, 10, 1e-3, 1.0);
  EXPECT_EQ(z.inference, 0.0);
  EXPECT_GT(z.hash, 0.0);
  EXPECT_GT(z.retrain, 0.0);
  EXPECT_DOUBLE_EQ(cost_model(1e6, 0.25, 10, 10, 1e-3, 1.0).retrain_ratio, 1.0);
  EXPECT_THROW(cost_model(0, 0.1, 0, 10, 1, 1), ContractError);
}

TEST(Config, ValidationAndJson) {
  VerifierConfig c;
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.p = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sigma = 5;
  c.trend_threshold = 2.5;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(back.sigma, 5u);
  EXPECT_EQ(back.trend_threshold, 2.5);
  EXPECT_THROW(config_from_json(Json{{"alpha", 0.2}, {"bogus", 1}}), ConfigError);
  EXPECT_EQ(c.effective_epsilon(HyperParams{}), 1e-6);
  HyperParams noisy;
  noisy.noise.enabled = true;
  EXPECT_EQ(c.effective_epsilon(noisy), 1e-3);
}

TEST(Verify, HonestDeskAccepted) {
  const auto& t = testkit::desk_transcript(1);
  const VerifierConfig cfg;
  const auto r = verify(t, cfg, 11);
  EXPECT_EQ(r.verdict, Verdict::accept) << r.summary();
  EXPECT_EQ(r.queue.size(), cfg.sigma) << r.summary();
  for (const auto& e : r.retrained) EXPECT_EQ(e.error, 0.0);
  EXPECT_EQ(r.segments.size(), t.m());
  EXPECT_LT(r.order_combined.p_value, 1e-20);
  for (const auto& s : r.segments) EXPECT_LT(s.order.p_value, cfg.order_significance);
}

TEST(Verify, DeterministicGivenAuditSeed) {
  const auto& t = testkit::desk_transcript(1);
  auto a = verify(t, {}, 21).to_json(), b = verify(t, {}, 21).to_json();
  a.erase("seconds");
  b.erase("seconds");
  EXPECT_EQ(a, b);
}

TEST(Verify, StructuralFailureRejects) {
  const auto forged = attacks::replace_init(testkit::desk_transcript(1), 3).transcript;
  const auto r = verify(forged, {}, 1);
  EXPECT_EQ(r.verdict, Verdict::reject);
  EXPECT_EQ(r.reason, "structure:init");
  EXPECT_TRUE(r.queue.empty());
}

TEST(Verify, GlueRejectedWithWeightAndLongRangeEvidence) {
  const auto r = verify(glued_desk(), {}, 1);
  EXPECT_EQ(r.verdict, Verdict::reject);
  EXPECT_NE(r.reason.find("delta-outlier"), std::string::npos) << r.reason;
  EXPECT_NE(r.reason.find("retrain-mismatch"), std::string::npos) << r.reason;
  const auto& s6 = r.segments[5];
  EXPECT_GT(s6.delta_score, 4.0);
  EXPECT_TRUE(has(s6.flags, kDeltaOutlier));
  EXPECT_TRUE(has(s6.flags, kLongRange));
  for (const auto& s : r.segments)
    if (s.segment != 6) EXPECT_LT(std::abs(s.delta_score), 4.0) << s.segment;
}

TEST(Verify, BudgetZeroWithFlagsIsSuspicious) {
  VerifierConfig cfg;
  cfg.budget = 0;
  const auto r = verify(glued_desk(), cfg, 1);
  EXPECT_EQ(r.verdict, Verdict::suspicious);
  EXPECT_EQ(r.reason, "unretrained-queue");
  EXPECT_FALSE(r.unretrained.empty());
  EXPECT_TRUE(r.retrained.empty());
}

TEST(Verify, MissingOptimizerStateIsSuspicious) {
  auto h = testkit::tiny_hyper(4);
  h.store_optimizer_state = false;
  const auto t = prover::train_run(testkit::tiny_dataset(4), h);
  VerifierConfig cfg;
  cfg.alpha = 1.0;
  const auto r = verify(t, cfg, 2);
  EXPECT_EQ(r.verdict, Verdict::suspicious);
  EXPECT_EQ(r.unretrained.size(), r.queue.size());
}

TEST(Verify, SubtractionRejected) {
  const auto forged = attacks::subtract_data(testkit::desk_transcript(1), 5, 0.5, 1).transcript;
  const auto r = verify(forged, {}, 1);
  EXPECT_EQ(r.verdict, Verdict::reject) << r.summary();
  ASSERT_TRUE(r.queued(5));
  bool mismatch = false;
  for (const auto& e : r.retrained) mismatch |= e.segment == 5 && !e.pass;
  EXPECT_TRUE(mismatch);
}

TEST(Verify, MonotoneSeverity) {
  const VerifierConfig base;
  const auto r = verify(glued_desk(), base, 3);
  ASSERT_EQ(r.verdict, Verdict::reject);
  VerifierConfig strict = base;
  strict.alpha = 0.5;
  strict.lambda_threshold = 0.1;
  strict.delta_threshold = 3.0;
  strict.trend_threshold = 2.0;
  strict.smoothness_threshold = 1.0;
  strict.order_significance = 1e-6;
  EXPECT_EQ(verify(glued_desk(), strict, 3).verdict, Verdict::reject);
}

TEST(Verify, NoisyHonestRunAcceptedAtNoiseTolerance) {
  auto h = testkit::tiny_hyper(6);
  h.noise.enabled = true;
  h.noise.scale = 1e-7;
  h.noise.seed = 99;
  const auto t = prover::train_run(testkit::tiny_dataset(6), h);
  VerifierConfig cfg;
  cfg.alpha = 1.0;
  cfg.sigma = 4;
  const auto r = verify(t, cfg, 5);
  EXPECT_EQ(r.epsilon, 1e-3);
  EXPECT_EQ(r.verdict, Verdict::accept) << r.summary();
  for (const auto& e : r.retrained) EXPECT_GT(e.error, 0.0);
}

TEST(Verify, ReportJsonHasEveryCheck) {
  const auto r = verify(testkit::desk_transcript(1), {}, 11);
  const auto j = r.to_json();
  EXPECT_EQ(j.at("verdict"), "accept");
  ASSERT_EQ(j.at("segments").size(), 10u);
  for (const char* k : {"order_p", "lambda", "smoothness", "delta_score", "trend_score"})
    EXPECT_TRUE(j.at("segments")[0].contains(k)) << k;
  EXPECT_NE(r.summary().find("verdict: accept"), std::string::npos);
}
