#pragma once

// Order test, robust outlier scores, validation-loss smoothness and the rank
// tests used by the verifier.

#include <cstdint>
#include <span>
#include <vector>

namespace potd::stats {

// P(T >= t) for T ~ Binomial(n, c). Terms are formed in extended precision
// and summed directly; t > n gives 0.
double binom_sf(std::uint64_t t, std::uint64_t n, double c);

// Order statistic at 0-based rank ceil(q * (size - 1)), found by selection.
// For q = 0.5 and an even count this is the upper of the two middle values,
// which keeps the order test conservative. Throws ContractError when empty.
double order_statistic(std::span<const double> xs, double q);

// Empirical quantile with linear interpolation between order statistics.
double quantile(std::span<const double> xs, double q);

double median(std::span<const double> xs);

struct OrderTestResult {
  std::uint64_t t = 0;    // segment points strictly above z
  std::uint64_t n_t = 0;  // segment sample size
  double p_value = 1.0;
  double z = 0.0;         // threshold from the training-distribution sample
};

// z = order statistic of train_dm at `q` (median by default); under the null
// a segment point exceeds z with probability 1 - q. Throws ContractError when
// either sample has fewer than 10 points.
OrderTestResult order_test(std::span<const double> segment_dm, std::span<const double> train_dm,
                           double q = 0.5);

// Fisher's method: X = -2 Σ ln p_i, chi-square with 2k degrees of freedom.
struct FisherResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};
FisherResult fisher_combine(std::span<const double> p_values);

// Upper tail of the chi-square distribution with even degrees of freedom.
double chi2_sf_even(double x, std::size_t dof);

// (x - median) / (1.4826 * MAD). With MAD = 0, entries equal to the median
// score 0 and the rest score ±infinity. Throws ContractError for fewer than 4
// values.
std::vector<double> robust_z(std::span<const double> xs);

// |L_{j+1} - 2 L_j + L_{j-1}| / (mean(|L_j - L_{j-1}|, |L_{j+1} - L_j|) + tau * |L_j|)
// at interior checkpoints; endpoints score 0. Throws ContractError for fewer
// than 3 points.
std::vector<double> smoothness_scores(std::span<const double> series, double tau = 0.01);

struct OutlierReport {
  std::vector<double> scores;
  std::vector<bool> flagged;  // |score| > threshold
};
OutlierReport delta_outliers(std::span<const double> deltas, double threshold = 4.0);

// Weight-change trend relative to the learning-rate schedule: for interior
// segments, log(delta_i / lr_i) minus the mean of the same quantity at i-1 and
// i+1 (lr_i = summed learning rate of segment i). Endpoints score 0, as do all
// entries when any delta or lr sum is zero or fewer than 4 interior segments
// exist. Scores are robust z-scores of the residuals with the MAD scale
// floored at `min_scale` (log units).
OutlierReport trend_outliers(std::span<const double> deltas, std::span<const double> lr_sums,
                             double threshold = 4.0, double min_scale = 0.01);

struct SmoothnessReport {
  std::vector<double> scores;
  std::vector<bool> flagged;  // score > threshold
};
SmoothnessReport loss_smoothness(std::span<const double> series, double threshold = 1.5,
                                 double tau = 0.01);

// Two-sided Mann-Whitney U test (normal approximation with tie correction and
// continuity correction). Returns the p-value.
struct RankTestResult {
  double u = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};
RankTestResult mann_whitney(std::span<const double> a, std::span<const double> b);

// Spearman rank correlation of two equally long samples.
double spearman(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> xs);

// Least-squares line y = a + b x with coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

}  // namespace potd::stats
