#include "potd/memorization.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <thread>
#include <unordered_set>

#include "potd/errors.hpp"
#include "potd/stats.hpp"

namespace potd::memorization {

namespace {

constexpr std::size_t kChunk = 32;
constexpr std::size_t kMinValSample = 32;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Digest segment_key(const Digest& audit, std::size_t i) {
  return derive_digest(derive_digest(audit, "segment"), std::uint64_t(i));
}

}  // namespace

ValSummary summarize(std::span<const double> val_losses) {
  if (val_losses.empty()) throw ContractError("validation summary needs at least one loss");
  return {stats::mean(val_losses), val_losses.size()};
}

double memorization(double point_loss, const ValSummary& val) { return val.mean - point_loss; }

double memorization(const tinylm::ArchConfig& arch, std::span<const Token> point,
                    const tinylm::WeightVector& w, const ValSummary& val) {
  return memorization(tinylm::forward_loss(arch, w, {point})[0], val);
}

double memorization_delta(const tinylm::ArchConfig& arch, std::span<const Token> point,
                          const tinylm::WeightVector& w_i, const tinylm::WeightVector& w_prev,
                          const ValSummary& val_i, const ValSummary& val_prev) {
  return memorization(arch, point, w_i, val_i) - memorization(arch, point, w_prev, val_prev);
}

LossCache::LossCache(const Transcript& t) : t_(t), cache_(t.checkpoints.size()) {}

std::vector<double> LossCache::losses(std::size_t j, std::span<const std::uint32_t> ids) {
  auto& memo = cache_.at(j);
  std::vector<std::uint32_t> missing;
  std::unordered_set<std::uint32_t> queued;
  for (auto id : ids)
    if (!memo.count(id) && queued.insert(id).second) missing.push_back(id);

  if (!missing.empty()) {
    const auto& arch = t_.hyper.arch;
    const auto& w = t_.weights(j);
    auto eval = [&](std::size_t begin, std::size_t end) {
      std::vector<double> out;
      out.reserve(end - begin);
      for (std::size_t c = begin; c < end; c += kChunk) {
        tinylm::Batch batch;
        for (std::size_t k = c; k < std::min(end, c + kChunk); ++k)
          batch.push_back(t_.dataset.point(missing[k]));
        const auto l = tinylm::forward_loss(arch, w, batch);
        out.insert(out.end(), l.begin(), l.end());
      }
      return out;
    };
    const std::size_t threads =
        std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()),
                              (missing.size() + kChunk - 1) / kChunk);
    std::vector<double> values;
    if (threads <= 1) {
      values = eval(0, missing.size());
    } else {
      const std::size_t per = (missing.size() + threads - 1) / threads;
      std::vector<std::future<std::vector<double>>> parts;
      for (std::size_t b = 0; b < missing.size(); b += per)
        parts.push_back(std::async(std::launch::async, eval, b, std::min(missing.size(), b + per)));
      for (auto& p : parts) {
        auto v = p.get();
        values.insert(values.end(), v.begin(), v.end());
      }
    }
    for (std::size_t k = 0; k < missing.size(); ++k) memo.emplace(missing[k], values[k]);
    evaluations_ += missing.size();
  }

  std::vector<double> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(memo.at(id));
  return out;
}

ValSummary LossCache::val_summary(std::size_t j, std::span<const std::uint32_t> val_ids) {
  return summarize(losses(j, val_ids));
}

std::vector<double> LossCache::memorizations(std::size_t j, std::span<const std::uint32_t> ids,
                                             std::span<const std::uint32_t> val_ids) {
  const auto val = val_summary(j, val_ids);
  auto l = losses(j, ids);
  for (auto& x : l) x = memorization(x, val);
  return l;
}

std::vector<double> LossCache::deltas(std::size_t j, std::span<const std::uint32_t> ids,
                                      std::span<const std::uint32_t> val_ids) {
  if (j < 1) throw ContractError("memorization delta needs a previous checkpoint");
  auto now = memorizations(j, ids, val_ids);
  const auto before = memorizations(j - 1, ids, val_ids);
  for (std::size_t k = 0; k < now.size(); ++k) now[k] -= before[k];
  return now;
}

std::vector<std::uint32_t> sample_ids(const Digest& key, std::span<const std::uint32_t> ids,
                                      std::size_t count) {
  std::vector<std::uint32_t> pool(ids.begin(), ids.end());
  count = std::min(count, pool.size());
  ChaChaStream rng(key);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + rng.uniform_below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

std::size_t sample_size(double alpha, std::size_t size) {
  if (size == 0) return 0;
  const auto c = static_cast<std::size_t>(std::ceil(alpha * double(size) - 1e-9));
  return std::clamp<std::size_t>(c, 1, size);
}

std::vector<std::uint32_t> validation_sample(const Digest& key,
                                             std::span<const std::uint32_t> validation,
                                             double alpha) {
  const auto count = std::max(sample_size(alpha, validation.size()),
                              std::min(validation.size(), kMinValSample));
  return sample_ids(derive_digest(key, "validation"), validation, count);
}

std::vector<std::uint32_t> segment_sample(const Digest& key, std::size_t i,
                                          std::span<const std::uint32_t> segment, double alpha) {
  return sample_ids(segment_key(key, i), segment, sample_size(alpha, segment.size()));
}

Digest audit_key(const Transcript& t, std::uint64_t seed) {
  return derive_digest(derive_digest(t.digest(), "audit"), seed);
}

const HeatmapCell& MemorizationMatrix::cell(std::size_t segment, long offset) const {
  return rows.at(segment - 1).cells.at(std::size_t(offset + long(beta)));
}

std::size_t MemorizationMatrix::row_argmax(std::size_t segment) const {
  const auto& row = rows.at(segment - 1);
  long best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& c : row.cells)
    if (c.checkpoint >= 0 && c.mean_m > best_value) {
      best_value = c.mean_m;
      best = c.checkpoint;
    }
  return std::size_t(best);
}

double MemorizationMatrix::diagonal_fraction() const {
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : rows) hits += row_argmax(r.segment) == r.segment;
  return double(hits) / double(rows.size());
}

MemorizationMatrix heatmap(LossCache& cache, double alpha, std::size_t beta,
                           std::uint64_t report_seed) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("heatmap: alpha must lie in (0, 1]");
  const auto& t = cache.transcript();
  const auto order = t.order();
  const auto key = audit_key(t, report_seed);
  MemorizationMatrix mm;
  mm.alpha = alpha;
  mm.beta = beta;
  mm.m = t.m();
  mm.val_ids = validation_sample(key, order.validation(), alpha);
  for (std::size_t j = 0; j <= mm.m; ++j) mm.val_mean.push_back(cache.val_summary(j, mm.val_ids).mean);

  for (std::size_t i = 1; i <= mm.m; ++i) {
    HeatmapRow row;
    row.segment = i;
    const auto seg = order.segment(i);
    row.ids = segment_sample(key, i, seg, alpha);
    if (row.ids.size() < 5) mm.unreliable = true;
    std::vector<std::vector<double>> m_at(mm.m + 1);
    auto m_of = [&](std::size_t j) -> const std::vector<double>& {
      if (m_at[j].empty()) m_at[j] = cache.memorizations(j, row.ids, mm.val_ids);
      return m_at[j];
    };
    for (long o = -long(beta); o <= long(beta); ++o) {
      HeatmapCell c;
      const long j = long(i) + o;
      if (j >= 0 && j <= long(mm.m)) {
        c.checkpoint = j;
        c.m = m_of(std::size_t(j));
        c.mean_m = stats::mean(c.m);
        if (j >= 1) {
          const auto& prev = m_of(std::size_t(j - 1));
          c.dm.resize(c.m.size());
          for (std::size_t k = 0; k < c.m.size(); ++k) c.dm[k] = c.m[k] - prev[k];
          c.mean_dm = stats::mean(c.dm);
        } else {
          c.mean_dm = kNaN;
        }
      } else {
        c.mean_m = c.mean_dm = kNaN;
      }
      row.cells.push_back(std::move(c));
    }
    mm.rows.push_back(std::move(row));
  }
  return mm;
}

MemorizationMatrix heatmap(const Transcript& t, double alpha, std::size_t beta,
                           std::uint64_t report_seed) {
  LossCache cache(t);
  return heatmap(cache, alpha, beta, report_seed);
}

double fbq(std::span<const double> points_dm, std::span<const double> val_dm, double p) {
  if (val_dm.empty()) throw ContractError("fbq: empty validation sample");
  if (points_dm.empty()) return 0.0;
  const double q = stats::quantile(val_dm, p);
  const auto below = std::count_if(points_dm.begin(), points_dm.end(), [&](double d) { return d <= q; });
  return double(below) / double(points_dm.size());
}

std::optional<double> subtraction_bound(double fbq_train, double fbq_val) {
  if (!(fbq_val > 0.0)) return std::nullopt;
  return fbq_train / fbq_val;
}

QuantileReport quantile_report(LossCache& cache, double alpha, double p,
                               std::uint64_t report_seed) {
  const auto& t = cache.transcript();
  const auto order = t.order();
  const auto key = audit_key(t, report_seed);
  const auto val_ids = validation_sample(key, order.validation(), alpha);
  QuantileReport r;
  r.p = p;
  for (std::size_t i = 1; i <= t.m(); ++i) {
    const auto seg = order.segment(i);
    const auto ids = segment_sample(key, i, seg, alpha);
    const auto seg_dm = cache.deltas(i, ids, val_ids);
    const auto val_dm = cache.deltas(i, val_ids, val_ids);
    SegmentQuantile s;
    s.segment = i;
    s.fbq_train = fbq(seg_dm, val_dm, p);
    s.fbq_val = fbq(val_dm, val_dm, p);
    s.lambda = subtraction_bound(s.fbq_train, s.fbq_val);
    r.segments.push_back(s);
  }
  return r;
}

LongRange long_range_memorization(LossCache& cache, std::size_t i, std::size_t depth,
                                  double alpha, std::uint64_t report_seed) {
  const auto& t = cache.transcript();
  if (i < 1 || i > t.m() || depth >= i)
    throw ContractError("long_range_memorization: need depth < i <= m");
  const auto order = t.order();
  const auto key = audit_key(t, report_seed);
  const auto val_ids = validation_sample(key, order.validation(), alpha);
  LongRange r;
  r.val_m = cache.memorizations(i, val_ids, val_ids);
  for (std::size_t o = 1; o <= depth; ++o) {
    const auto seg = order.segment(i - o);
    const auto ids = segment_sample(key, i - o, seg, alpha);
    auto m = cache.memorizations(i, ids, val_ids);
    r.mean_m.push_back(stats::mean(m));
    r.samples.push_back(std::move(m));
  }
  return r;
}

}  // namespace potd::memorization
