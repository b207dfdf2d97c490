#pragma once

// The combined verification protocol: structural re-derivation, per-segment
// screening, a retraining queue and segment reproduction checks.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "potd/json_io.hpp"
#include "potd/stats.hpp"
#include "potd/transcript.hpp"

namespace potd::verifier {

struct VerifierConfig {
  double alpha = 0.25;             // fraction of each segment sampled
  double p = 0.1;                  // FBQ percentile
  double lambda_threshold = 0.25;  // queue when λ exceeds this
  double order_significance = 1e-4;
  double order_escalation = 2.0;   // α multiplier for the second order test
  std::size_t train_sample = 128;  // |D_t|
  double delta_threshold = 4.0;
  double trend_threshold = 3.0;    // delta against the learning-rate schedule
  double smoothness_threshold = 1.5;
  double smoothness_tau = 0.01;
  double long_range_p = 0.05;      // on weight outliers: Π_{i-1} at W_i looks like validation
  std::size_t sigma = 2;           // random extra segments
  double epsilon = 0.0;            // 0 = 1e-6 with noise off, 1e-3 with noise on
  std::size_t budget = 8;          // max retrained segments

  // Throws ConfigError.
  void validate() const;
  double effective_epsilon(const HyperParams& h) const;
};

VerifierConfig config_from_json(const Json& j);
Json to_json(const VerifierConfig& c);

// Check names used in queue reasons.
inline constexpr const char* kOrderTest = "order-test";
inline constexpr const char* kLambda = "lambda";
inline constexpr const char* kSmoothness = "smoothness";
inline constexpr const char* kDeltaOutlier = "delta-outlier";
inline constexpr const char* kLongRange = "long-range";
inline constexpr const char* kRandomAudit = "random-audit";

struct SegmentScreen {
  std::size_t segment = 0;
  stats::OrderTestResult order;
  bool order_escalated = false;
  double fbq_train = 0.0;
  double fbq_val = 0.0;
  std::optional<double> lambda;
  double smoothness = 0.0;  // score at checkpoint i
  double delta = 0.0;       // ||W_i - W_{i-1}||
  double delta_score = 0.0;
  double trend_score = 0.0;  // delta against the learning-rate schedule
  std::optional<double> long_range_p;
  std::vector<std::string> flags;
};

struct QueueEntry {
  std::size_t segment = 0;
  std::vector<std::string> reasons;
};

struct RetrainResult {
  std::size_t segment = 0;
  double error = 0.0;  // infinity when undefined
  bool pass = false;
};

enum class Verdict { accept, suspicious, reject };
std::string to_string(Verdict v);

struct VerdictReport {
  StructureCheck structure;
  std::vector<SegmentScreen> segments;
  stats::FisherResult order_combined;
  std::vector<double> val_loss;  // per checkpoint, validation sample mean
  std::vector<QueueEntry> queue;
  std::vector<RetrainResult> retrained;
  std::vector<std::size_t> unretrained;
  Verdict verdict = Verdict::accept;
  std::string reason;  // checks joined with '+', empty on accept
  double epsilon = 0.0;
  bool sample_warning = false;  // some segment sample below 5 points
  std::size_t loss_evaluations = 0;
  double seconds = 0.0;

  bool queued(std::size_t segment) const;
  const QueueEntry* entry(std::size_t segment) const;
  Json to_json() const;
  std::string summary() const;
};

// ||Ŵ - W|| / ((||Ŵ - W_prev|| + ||W - W_prev||) / 2). When both
// displacements vanish: 0 if Ŵ == W, +infinity otherwise.
double reproduction_error(const tinylm::WeightVector& reported,
                          const tinylm::WeightVector& retrained,
                          const tinylm::WeightVector& previous);

// Deterministic given (transcript, cfg, audit_seed).
VerdictReport verify(const Transcript& t, const VerifierConfig& cfg, std::uint64_t audit_seed);

struct CostBreakdown {
  double hash = 0.0;
  double inference = 0.0;
  double retrain = 0.0;
  double training = 0.0;  // s * n
  double hash_ratio = 0.0;
  double inference_ratio = 0.0;
  double retrain_ratio = 0.0;
  double total_ratio = 0.0;
};

// hash h*n, inference 4*alpha*(s/3)*n, retrain s*n*|Q|/m, all relative to a
// training cost of s*n. Throws ContractError for non-positive units or m.
CostBreakdown cost_model(double n, double alpha, double queue, double m, double h, double s);

}  // namespace potd::verifier
