#pragma once

// Per-point memorization M(d, W) = mean validation loss - L(d, W), its
// per-segment delta, heatmaps over checkpoints, the fraction-below-quantile
// statistic and the subtraction bound.

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "potd/transcript.hpp"

namespace potd::memorization {

struct ValSummary {
  double mean = 0.0;
  std::size_t count = 0;
};

// Throws ContractError on an empty sample.
ValSummary summarize(std::span<const double> val_losses);

double memorization(double point_loss, const ValSummary& val);
double memorization(const tinylm::ArchConfig& arch, std::span<const Token> point,
                    const tinylm::WeightVector& w, const ValSummary& val);
// M(d, W_i) - M(d, W_{i-1}).
double memorization_delta(const tinylm::ArchConfig& arch, std::span<const Token> point,
                          const tinylm::WeightVector& w_i, const tinylm::WeightVector& w_prev,
                          const ValSummary& val_i, const ValSummary& val_prev);

// Memoized per-point losses at transcript checkpoints. Missing entries are
// evaluated in chunks; with more than one hardware thread the chunks run
// concurrently (each result depends only on its own point).
class LossCache {
 public:
  explicit LossCache(const Transcript& t);

  std::vector<double> losses(std::size_t checkpoint, std::span<const std::uint32_t> ids);
  // Mean validation loss at `checkpoint` over `val_ids`.
  ValSummary val_summary(std::size_t checkpoint, std::span<const std::uint32_t> val_ids);
  // M(d, W_j) for each id, using val_ids for the validation summary.
  std::vector<double> memorizations(std::size_t checkpoint, std::span<const std::uint32_t> ids,
                                    std::span<const std::uint32_t> val_ids);
  // ΔM between checkpoint j-1 and j, j >= 1.
  std::vector<double> deltas(std::size_t checkpoint, std::span<const std::uint32_t> ids,
                             std::span<const std::uint32_t> val_ids);

  std::size_t evaluations() const { return evaluations_; }
  const Transcript& transcript() const { return t_; }

 private:
  const Transcript& t_;
  std::vector<std::unordered_map<std::uint32_t, double>> cache_;
  std::size_t evaluations_ = 0;
};

// `count` distinct entries of `ids`, chosen by a keyed partial Fisher-Yates.
std::vector<std::uint32_t> sample_ids(const Digest& key, std::span<const std::uint32_t> ids,
                                      std::size_t count);

// ceil(alpha * size), clamped to [1, size].
std::size_t sample_size(double alpha, std::size_t size);

// Validation sample used across all checkpoints: ceil(alpha * n_v) points but
// never fewer than min(n_v, 32).
std::vector<std::uint32_t> validation_sample(const Digest& key,
                                             std::span<const std::uint32_t> validation,
                                             double alpha);

// Sample of segment i's point ids; a larger alpha yields a superset.
std::vector<std::uint32_t> segment_sample(const Digest& key, std::size_t i,
                                          std::span<const std::uint32_t> segment, double alpha);

// Root of all audit randomness for one (transcript, seed) pair.
Digest audit_key(const Transcript& t, std::uint64_t seed);

struct HeatmapCell {
  long checkpoint = -1;  // -1 when the window runs past 0..m
  double mean_m = 0.0;
  double mean_dm = 0.0;  // NaN at checkpoint 0
  std::vector<double> m;
  std::vector<double> dm;
};

struct HeatmapRow {
  std::size_t segment = 0;
  std::vector<std::uint32_t> ids;
  std::vector<HeatmapCell> cells;  // offsets -beta .. +beta
};

struct MemorizationMatrix {
  double alpha = 0.0;
  std::size_t beta = 0;
  std::size_t m = 0;
  bool unreliable = false;  // some segment sample has fewer than 5 points
  std::vector<std::uint32_t> val_ids;
  std::vector<double> val_mean;  // per checkpoint 0..m
  std::vector<HeatmapRow> rows;  // segments 1..m

  const HeatmapCell& cell(std::size_t segment, long offset) const;
  // Checkpoint with the largest mean M in the row window.
  std::size_t row_argmax(std::size_t segment) const;
  // Fraction of rows whose argmax is their own checkpoint.
  double diagonal_fraction() const;
};

// Throws ContractError unless 0 < alpha <= 1.
MemorizationMatrix heatmap(LossCache& cache, double alpha, std::size_t beta,
                           std::uint64_t report_seed);
MemorizationMatrix heatmap(const Transcript& t, double alpha, std::size_t beta,
                           std::uint64_t report_seed);

// Fraction of points_dm at or below the interpolated p-quantile of val_dm.
// Throws ContractError when val_dm is empty.
double fbq(std::span<const double> points_dm, std::span<const double> val_dm, double p);

// λ = fbq_train / fbq_val; nullopt when fbq_val = 0 (widen p).
std::optional<double> subtraction_bound(double fbq_train, double fbq_val);

struct SegmentQuantile {
  std::size_t segment = 0;
  double fbq_train = 0.0;
  double fbq_val = 0.0;
  std::optional<double> lambda;
};

struct QuantileReport {
  double p = 0.1;
  std::vector<SegmentQuantile> segments;
};

QuantileReport quantile_report(LossCache& cache, double alpha, double p,
                               std::uint64_t report_seed);

struct LongRange {
  std::vector<double> mean_m;                // offsets 1..depth
  std::vector<std::vector<double>> samples;  // M values per offset
  std::vector<double> val_m;                 // validation M at W_i
};

// M of Π_{i-1}, ..., Π_{i-depth} evaluated at W_i. Throws ContractError
// unless depth < i <= m.
LongRange long_range_memorization(LossCache& cache, std::size_t i, std::size_t depth,
                                  double alpha, std::uint64_t report_seed);

}  // namespace potd::memorization
