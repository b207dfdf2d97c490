#include "potd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "potd/errors.hpp"

namespace potd::stats {

double binom_sf(std::uint64_t t, std::uint64_t n, double c) {
  if (t == 0) return 1.0;
  if (t > n) return 0.0;
  if (c <= 0.0) return 0.0;
  if (c >= 1.0) return 1.0;
  const long double lc = std::log(static_cast<long double>(c));
  const long double l1c = std::log1p(-static_cast<long double>(c));
  const long double lgn = std::lgamma(static_cast<long double>(n) + 1);
  long double sum = 0.0L;
  // Summed from k = n downward so that above the mode the smallest terms
  // enter first.
  for (std::uint64_t k = n + 1; k-- > t;) {
    const long double lk = static_cast<long double>(k);
    const long double lt = lgn - std::lgamma(lk + 1) -
                           std::lgamma(static_cast<long double>(n - k) + 1) + lk * lc +
                           static_cast<long double>(n - k) * l1c;
    sum += std::exp(lt);
  }
  return static_cast<double>(std::min(sum, 1.0L));
}

double order_statistic(std::span<const double> xs, double q) {
  if (xs.empty()) throw ContractError("order_statistic: empty sample");
  std::vector<double> v(xs.begin(), xs.end());
  const auto r = static_cast<std::size_t>(std::ceil(std::clamp(q, 0.0, 1.0) * double(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(r), v.end());
  return v[r];
}

double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) throw ContractError("quantile: empty sample");
  std::vector<double> v(xs.begin(), xs.end());
  const double h = std::clamp(q, 0.0, 1.0) * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + std::ptrdiff_t(lo) + 1, v.end());
  return a + (h - double(lo)) * (b - a);
}

double median(std::span<const double> xs) { return quantile(xs, 0.5); }

double mean(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : xs) s += x;
  return s / double(xs.size());
}

OrderTestResult order_test(std::span<const double> segment_dm, std::span<const double> train_dm,
                           double q) {
  if (segment_dm.size() < 10 || train_dm.size() < 10)
    throw ContractError("order_test: both samples need at least 10 points");
  OrderTestResult r;
  r.z = order_statistic(train_dm, q);
  r.n_t = segment_dm.size();
  r.t = std::uint64_t(std::count_if(segment_dm.begin(), segment_dm.end(),
                                    [&](double d) { return d > r.z; }));
  r.p_value = binom_sf(r.t, r.n_t, 1.0 - q);
  return r;
}

double chi2_sf_even(double x, std::size_t dof) {
  if (dof == 0 || dof % 2 != 0) throw ContractError("chi2_sf_even: dof must be positive and even");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  // e^{-x/2} Σ_{i<k} (x/2)^i / i!, accumulated in log space.
  const double h = x / 2.0;
  const std::size_t k = dof / 2;
  double log_term = -h, total = 0.0;
  double max_log = log_term;
  std::vector<double> logs;
  logs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (i > 0) log_term += std::log(h) - std::log(double(i));
    logs.push_back(log_term);
    max_log = std::max(max_log, log_term);
  }
  for (double l : logs) total += std::exp(l - max_log);
  return std::min(1.0, std::exp(max_log + std::log(total)));
}

FisherResult fisher_combine(std::span<const double> p_values) {
  FisherResult r;
  if (p_values.empty()) return r;
  for (double p : p_values) r.statistic += -2.0 * std::log(std::max(p, 1e-300));
  r.dof = 2 * p_values.size();
  r.p_value = chi2_sf_even(r.statistic, r.dof);
  return r;
}

std::vector<double> robust_z(std::span<const double> xs) {
  if (xs.size() < 4) throw ContractError("robust_z: need at least 4 values");
  const double med = median(xs);
  std::vector<double> dev(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) dev[i] = std::abs(xs[i] - med);
  const double scale = 1.4826 * median(dev);
  std::vector<double> z(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d = xs[i] - med;
    if (scale > 0.0)
      z[i] = d / scale;
    else
      z[i] = d == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d);
  }
  return z;
}

OutlierReport delta_outliers(std::span<const double> deltas, double threshold) {
  OutlierReport r;
  r.scores = robust_z(deltas);
  for (double s : r.scores) r.flagged.push_back(std::abs(s) > threshold);
  return r;
}

OutlierReport trend_outliers(std::span<const double> deltas, std::span<const double> lr_sums,
                             double threshold, double min_scale) {
  if (deltas.size() != lr_sums.size()) throw ContractError("trend_outliers: length mismatch");
  OutlierReport r;
  r.scores.assign(deltas.size(), 0.0);
  r.flagged.assign(deltas.size(), false);
  if (deltas.size() < 6) return r;
  std::vector<double> level(deltas.size());
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0 && lr_sums[i] > 0.0)) return r;
    level[i] = std::log(deltas[i] / lr_sums[i]);
  }
  std::vector<double> resid;
  for (std::size_t i = 1; i + 1 < level.size(); ++i)
    resid.push_back(level[i] - 0.5 * (level[i - 1] + level[i + 1]));
  const double med = median(resid);
  std::vector<double> dev(resid.size());
  for (std::size_t k = 0; k < resid.size(); ++k) dev[k] = std::abs(resid[k] - med);
  const double scale = std::max(1.4826 * median(dev), min_scale);
  for (std::size_t k = 0; k < resid.size(); ++k) {
    r.scores[k + 1] = (resid[k] - med) / scale;
    r.flagged[k + 1] = std::abs(r.scores[k + 1]) > threshold;
  }
  return r;
}

std::vector<double> smoothness_scores(std::span<const double> L, double tau) {
  if (L.size() < 3) throw ContractError("smoothness: need at least 3 checkpoints");
  std::vector<double> s(L.size(), 0.0);
  for (std::size_t j = 1; j + 1 < L.size(); ++j) {
    const double d2 = std::abs(L[j + 1] - 2.0 * L[j] + L[j - 1]);
    const double scale =
        0.5 * (std::abs(L[j] - L[j - 1]) + std::abs(L[j + 1] - L[j])) + tau * std::abs(L[j]);
    if (scale > 0.0)
      s[j] = d2 / scale;
    else
      s[j] = d2 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return s;
}

SmoothnessReport loss_smoothness(std::span<const double> series, double threshold, double tau) {
  SmoothnessReport r;
  r.scores = smoothness_scores(series, tau);
  for (double s : r.scores) r.flagged.push_back(s > threshold);
  return r;
}

namespace {

// Average ranks (1-based) with ties sharing the mean rank. Also returns
// Σ (t^3 - t) over tie groups.
std::vector<double> ranks(std::span<const double> xs, double* tie_term = nullptr) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  double ties = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    const double t = double(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  if (tie_term) *tie_term = ties;
  return r;
}

}  // namespace

RankTestResult mann_whitney(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ContractError("mann_whitney: empty sample");
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  double ties = 0.0;
  const auto r = ranks(all, &ties);
  const double n1 = double(a.size()), n2 = double(b.size()), n = n1 + n2;
  double r1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += r[i];
  RankTestResult out;
  out.u = r1 - n1 * (n1 + 1.0) / 2.0;
  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (var <= 0.0) return out;
  const double diff = std::abs(out.u - mu);
  out.z = std::copysign(std::max(0.0, diff - 0.5) / std::sqrt(var), out.u - mu);
  out.p_value = std::min(1.0, std::erfc(std::abs(out.z) / std::sqrt(2.0)));
  return out;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractError("spearman: need equal sizes >= 2");
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("linear_fit: need >= 2 pairs");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = (sxx > 0.0 && syy > 0.0) ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

}  // namespace potd::stats
