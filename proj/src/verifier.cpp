#include "potd/verifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "potd/errors.hpp"
#include "potd/memorization.hpp"
#include "potd/prover.hpp"

namespace potd::verifier {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fixed order of check names in queue reasons and verdicts.
constexpr const char* kCheckOrder[] = {kOrderTest,   kLambda,    kSmoothness,
                                       kDeltaOutlier, kLongRange, kRandomAudit};

void add_flag(std::vector<std::string>& flags, const char* name) {
  if (std::find(flags.begin(), flags.end(), name) == flags.end()) flags.emplace_back(name);
}

void sort_flags(std::vector<std::string>& flags) {
  auto rank = [](const std::string& f) {
    for (std::size_t r = 0; r < std::size(kCheckOrder); ++r)
      if (f == kCheckOrder[r]) return r;
    return std::size(kCheckOrder);
  };
  std::stable_sort(flags.begin(), flags.end(),
                   [&](const auto& a, const auto& b) { return rank(a) < rank(b); });
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
  return out;
}

std::uint64_t digest_u64(const Digest& d) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(d[i]) << (8 * i);
  return v;
}

Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

void VerifierConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("verifier: alpha must lie in (0, 1]");
  if (!(p > 0.0 && p < 0.5)) throw ConfigError("verifier: p must lie in (0, 0.5)");
  if (!(lambda_threshold >= 0.0)) throw ConfigError("verifier: lambda_threshold must be >= 0");
  if (!(order_significance > 0.0 && order_significance < 1.0))
    throw ConfigError("verifier: order_significance must lie in (0, 1)");
  if (!(order_escalation >= 1.0)) throw ConfigError("verifier: order_escalation must be >= 1");
  if (train_sample < 10) throw ConfigError("verifier: train_sample must be at least 10");
  if (!(delta_threshold > 0.0)) throw ConfigError("verifier: delta_threshold must be positive");
  if (!(trend_threshold > 0.0)) throw ConfigError("verifier: trend_threshold must be positive");
  if (!(smoothness_threshold > 0.0))
    throw ConfigError("verifier: smoothness_threshold must be positive");
  if (!(smoothness_tau >= 0.0)) throw ConfigError("verifier: smoothness_tau must be >= 0");
  if (!(long_range_p > 0.0 && long_range_p < 1.0))
    throw ConfigError("verifier: long_range_p must lie in (0, 1)");
  if (epsilon < 0.0) throw ConfigError("verifier: epsilon must be positive (0 selects the default)");
}

double VerifierConfig::effective_epsilon(const HyperParams& h) const {
  if (epsilon > 0.0) return epsilon;
  return h.noise.enabled ? 1e-3 : 1e-6;
}

VerifierConfig config_from_json(const Json& j) {
  check_keys(j,
             {"alpha", "p", "lambda_threshold", "order_significance", "order_escalation",
              "train_sample", "delta_threshold", "trend_threshold", "smoothness_threshold",
              "smoothness_tau", "long_range_p", "sigma", "epsilon", "budget"},
             "verifier");
  VerifierConfig c;
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<std::remove_reference_t<decltype(out)>>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("verifier.") + key + ": " + e.what());
    }
  };
  get("alpha", c.alpha);
  get("p", c.p);
  get("lambda_threshold", c.lambda_threshold);
  get("order_significance", c.order_significance);
  get("order_escalation", c.order_escalation);
  get("train_sample", c.train_sample);
  get("delta_threshold", c.delta_threshold);
  get("trend_threshold", c.trend_threshold);
  get("smoothness_threshold", c.smoothness_threshold);
  get("smoothness_tau", c.smoothness_tau);
  get("long_range_p", c.long_range_p);
  get("sigma", c.sigma);
  get("epsilon", c.epsilon);
  get("budget", c.budget);
  c.validate();
  return c;
}

Json to_json(const VerifierConfig& c) {
  return Json{{"alpha", c.alpha},
              {"p", c.p},
              {"lambda_threshold", c.lambda_threshold},
              {"order_significance", c.order_significance},
              {"order_escalation", c.order_escalation},
              {"train_sample", c.train_sample},
              {"delta_threshold", c.delta_threshold},
              {"trend_threshold", c.trend_threshold},
              {"smoothness_threshold", c.smoothness_threshold},
              {"smoothness_tau", c.smoothness_tau},
              {"long_range_p", c.long_range_p},
              {"sigma", c.sigma},
              {"epsilon", c.epsilon},
              {"budget", c.budget}};
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::suspicious: return "suspicious";
    case Verdict::reject: return "reject";
  }
  return "?";
}

bool VerdictReport::queued(std::size_t segment) const { return entry(segment) != nullptr; }

const QueueEntry* VerdictReport::entry(std::size_t segment) const {
  for (const auto& q : queue)
    if (q.segment == segment) return &q;
  return nullptr;
}

Json VerdictReport::to_json() const {
  Json segs = Json::array();
  for (const auto& s : segments) {
    segs.push_back({{"segment", s.segment},
                    {"order_t", s.order.t},
                    {"order_n", s.order.n_t},
                    {"order_p", s.order.p_value},
                    {"order_z", s.order.z},
                    {"order_escalated", s.order_escalated},
                    {"fbq_train", s.fbq_train},
                    {"fbq_val", s.fbq_val},
                    {"lambda", s.lambda ? Json(*s.lambda) : Json(nullptr)},
                    {"smoothness", number_or_null(s.smoothness)},
                    {"delta", s.delta},
                    {"delta_score", number_or_null(s.delta_score)},
                    {"trend_score", number_or_null(s.trend_score)},
                    {"long_range_p", s.long_range_p ? Json(*s.long_range_p) : Json(nullptr)},
                    {"flags", s.flags}});
  }
  Json q = Json::array();
  for (const auto& e : queue) q.push_back({{"segment", e.segment}, {"reasons", e.reasons}});
  Json r = Json::array();
  for (const auto& e : retrained)
    r.push_back({{"segment", e.segment}, {"error", number_or_null(e.error)}, {"pass", e.pass}});
  return Json{{"verdict", to_string(verdict)},
              {"reason", reason},
              {"structure",
               {{"pass", structure.pass},
                {"failed_step", structure.failed_step},
                {"detail", structure.detail}}},
              {"segments", segs},
              {"order_combined",
               {{"statistic", order_combined.statistic},
                {"dof", order_combined.dof},
                {"p_value", order_combined.p_value}}},
              {"val_loss", val_loss},
              {"queue", q},
              {"retrained", r},
              {"unretrained", unretrained},
              {"epsilon", epsilon},
              {"sample_warning", sample_warning},
              {"loss_evaluations", loss_evaluations},
              {"seconds", seconds}};
}

std::string VerdictReport::summary() const {
  std::ostringstream os;
  os << "verdict: " << to_string(verdict);
  if (!reason.empty()) os << " (" << reason << ")";
  os << '\n';
  if (!structure.pass) {
    os << "structure: failed at " << structure.failed_step << ": " << structure.detail << '\n';
    return os.str();
  }
  os << "structure: pass\n";
  os << "segments screened: " << segments.size()
     << ", combined order-test p = " << order_combined.p_value << '\n';
  for (const auto& s : segments) {
    if (s.flags.empty()) continue;
    os << "  segment " << s.segment << ": " << join(s.flags) << " (order p=" << s.order.p_value
       << ", lambda=" << (s.lambda ? std::to_string(*s.lambda) : std::string("n/a"))
       << ", delta z=" << s.delta_score << ", trend z=" << s.trend_score << ")\n";
  }
  os << "queue:";
  for (const auto& e : queue) os << ' ' << e.segment << '[' << join(e.reasons) << ']';
  os << '\n';
  for (const auto& r : retrained)
    os << "  retrained segment " << r.segment << ": error " << r.error << (r.pass ? " ok" : " MISMATCH")
       << '\n';
  if (!unretrained.empty()) {
    os << "unretrained:";
    for (auto i : unretrained) os << ' ' << i;
    os << '\n';
  }
  if (sample_warning) os << "warning: segment samples below 5 points; statistics unreliable\n";
  return os.str();
}

double reproduction_error(const tinylm::WeightVector& reported,
                          const tinylm::WeightVector& retrained,
                          const tinylm::WeightVector& previous) {
  const double num = tinylm::weight_distance(retrained, reported);
  const double den = 0.5 * (tinylm::weight_distance(retrained, previous) +
                            tinylm::weight_distance(reported, previous));
  if (den == 0.0) return num == 0.0 ? 0.0 : kInf;
  return num / den;
}

VerdictReport verify(const Transcript& t, const VerifierConfig& cfg, std::uint64_t audit_seed) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  VerdictReport rep;
  rep.epsilon = cfg.effective_epsilon(t.hyper);
  auto finish = [&]() -> VerdictReport& {
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
  };

  // Steps 1-3.
  rep.structure = verify_structure(t);
  if (!rep.structure.pass) {
    rep.verdict = Verdict::reject;
    rep.reason = "structure:" + rep.structure.failed_step;
    return finish();
  }

  const std::size_t m = t.m();
  const auto order = t.order();
  const auto key = memorization::audit_key(t, audit_seed);
  memorization::LossCache cache(t);
  const auto val_ids = memorization::validation_sample(key, order.validation(), cfg.alpha);
  const auto train_ids =
      memorization::sample_ids(derive_digest(key, "train"), order.training(), cfg.train_sample);

  for (std::size_t j = 0; j <= m; ++j) rep.val_loss.push_back(cache.val_summary(j, val_ids).mean);

  // Step 4d and 4e inputs.
  std::vector<double> deltas;
  for (std::size_t i = 1; i <= m; ++i) deltas.push_back(tinylm::weight_distance(t.weights(i), t.weights(i - 1)));
  std::optional<stats::OutlierReport> outliers;
  if (deltas.size() >= 4) outliers = stats::delta_outliers(deltas, cfg.delta_threshold);
  const auto schedule = prover::segment_schedule(t.hyper, order);
  const auto trend = stats::trend_outliers(deltas, schedule.lr_sum, cfg.trend_threshold);
  std::optional<stats::SmoothnessReport> smooth;
  if (rep.val_loss.size() >= 3)
    smooth = stats::loss_smoothness(rep.val_loss, cfg.smoothness_threshold, cfg.smoothness_tau);

  std::vector<double> order_p;
  for (std::size_t i = 1; i <= m; ++i) {
    SegmentScreen s;
    s.segment = i;
    const auto seg = order.segment(i);

    // 4a/4b: sampled memorization deltas and the order test.
    auto ids = memorization::segment_sample(key, i, seg, cfg.alpha);
    if (ids.size() < 5) rep.sample_warning = true;
    const auto val_dm = cache.deltas(i, val_ids, val_ids);
    const auto train_dm = cache.deltas(i, train_ids, val_ids);
    auto seg_dm = cache.deltas(i, ids, val_ids);
    if (seg_dm.size() >= 10) {
      s.order = stats::order_test(seg_dm, train_dm);
      if (s.order.p_value > cfg.order_significance && cfg.order_escalation > 1.0 &&
          ids.size() < seg.size()) {
        const auto more = memorization::segment_sample(
            key, i, seg, std::min(1.0, cfg.alpha * cfg.order_escalation));
        s.order = stats::order_test(cache.deltas(i, more, val_ids), train_dm);
        s.order_escalated = true;
      }
      if (s.order.p_value > cfg.order_significance) add_flag(s.flags, kOrderTest);
    } else {
      rep.sample_warning = true;
      s.order.n_t = seg_dm.size();
    }
    order_p.push_back(s.order.p_value);

    // 4c: subtraction bound.
    s.fbq_train = memorization::fbq(seg_dm, val_dm, cfg.p);
    s.fbq_val = memorization::fbq(val_dm, val_dm, cfg.p);
    s.lambda = memorization::subtraction_bound(s.fbq_train, s.fbq_val);
    if (s.lambda && *s.lambda > cfg.lambda_threshold) add_flag(s.flags, kLambda);

    // 4d: a kink at checkpoint j implicates the segments on both sides.
    if (smooth) {
      s.smoothness = smooth->scores[i];
      if (smooth->flagged[i] || smooth->flagged[i - 1]) add_flag(s.flags, kSmoothness);
    }

    // 4e: weight-space outliers.
    s.delta = deltas[i - 1];
    if (outliers) {
      s.delta_score = outliers->scores[i - 1];
      if (outliers->flagged[i - 1]) add_flag(s.flags, kDeltaOutlier);
    }
    s.trend_score = trend.scores[i - 1];
    if (trend.flagged[i - 1]) add_flag(s.flags, kDeltaOutlier);
    const bool weight_outlier =
        std::find(s.flags.begin(), s.flags.end(), kDeltaOutlier) != s.flags.end();

    // Memory of the previous segment must persist past a weight-space outlier.
    if (i >= 2) {
      const auto prev_ids = memorization::segment_sample(key, i - 1, order.segment(i - 1), cfg.alpha);
      const auto prev_m = cache.memorizations(i, prev_ids, val_ids);
      const auto val_m = cache.memorizations(i, val_ids, val_ids);
      const auto mw = stats::mann_whitney(prev_m, val_m);
      s.long_range_p = mw.p_value;
      if (weight_outlier && (mw.z <= 0.0 || mw.p_value > cfg.long_range_p))
        add_flag(s.flags, kLongRange);
    }
    rep.segments.push_back(std::move(s));
  }
  rep.order_combined = stats::fisher_combine(order_p);

  // Step 5: flagged segments plus sigma random ones.
  std::vector<std::uint32_t> all(m);
  std::iota(all.begin(), all.end(), 1u);
  const auto random = memorization::sample_ids(derive_digest(key, "random"), all, cfg.sigma);
  for (std::size_t i = 1; i <= m; ++i) {
    QueueEntry e;
    e.segment = i;
    e.reasons = rep.segments[i - 1].flags;
    if (std::find(random.begin(), random.end(), i) != random.end()) add_flag(e.reasons, kRandomAudit);
    sort_flags(e.reasons);
    if (!e.reasons.empty()) rep.queue.push_back(std::move(e));
  }

  // Step 6: retrain within budget, screening-flagged entries first.
  std::vector<const QueueEntry*> plan;
  for (const auto& e : rep.queue)
    if (!(e.reasons.size() == 1 && e.reasons[0] == kRandomAudit)) plan.push_back(&e);
  for (const auto& e : rep.queue)
    if (e.reasons.size() == 1 && e.reasons[0] == kRandomAudit) plan.push_back(&e);

  const auto noise_seed = digest_u64(derive_digest(key, "retrain-noise"));
  std::vector<std::string> mismatch_reasons;
  for (const auto* e : plan) {
    if (rep.retrained.size() >= cfg.budget) {
      rep.unretrained.push_back(e->segment);
      continue;
    }
    tinylm::WeightVector w_hat;
    try {
      w_hat = prover::retrain_segment(t, e->segment, noise_seed);
    } catch (const ConfigError&) {
      rep.unretrained.push_back(e->segment);
      continue;
    } catch (const IntegrityError&) {
      rep.unretrained.push_back(e->segment);
      continue;
    } catch (const TrainingError&) {
      RetrainResult r{e->segment, kInf, false};
      rep.retrained.push_back(r);
      for (const auto& f : e->reasons) add_flag(mismatch_reasons, f.c_str());
      continue;
    }
    RetrainResult r;
    r.segment = e->segment;
    r.error = reproduction_error(t.weights(e->segment), w_hat, t.weights(e->segment - 1));
    r.pass = r.error <= rep.epsilon;
    if (!r.pass)
      for (const auto& f : e->reasons) add_flag(mismatch_reasons, f.c_str());
    rep.retrained.push_back(r);
  }
  std::sort(rep.unretrained.begin(), rep.unretrained.end());

  if (std::any_of(rep.retrained.begin(), rep.retrained.end(), [](const auto& r) { return !r.pass; })) {
    rep.verdict = Verdict::reject;
    sort_flags(mismatch_reasons);
    mismatch_reasons.emplace_back("retrain-mismatch");
    rep.reason = join(mismatch_reasons);
  } else if (!rep.unretrained.empty()) {
    rep.verdict = Verdict::suspicious;
    rep.reason = "unretrained-queue";
  } else {
    rep.verdict = Verdict::accept;
  }
  rep.loss_evaluations = cache.evaluations();
  return finish();
}

CostBreakdown cost_model(double n, double alpha, double queue, double m, double h, double s) {
  if (!(n > 0.0 && m > 0.0 && h > 0.0 && s > 0.0) || alpha < 0.0 || queue < 0.0)
    throw ContractError("cost_model: units, n and m must be positive");
  CostBreakdown c;
  c.hash = h * n;
  c.inference = 4.0 * alpha * (s / 3.0) * n;
  c.retrain = s * n * queue / m;
  c.training = s * n;
  c.hash_ratio = c.hash / c.training;
  c.inference_ratio = c.inference / c.training;
  c.retrain_ratio = c.retrain / c.training;
  c.total_ratio = c.hash_ratio + c.inference_ratio + c.retrain_ratio;
  return c;
}

}  // namespace potd::verifier
