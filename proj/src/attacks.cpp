#include "potd/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "potd/commitment.hpp"
#include "potd/errors.hpp"
#include "potd/memorization.hpp"
#include "potd/prover.hpp"

namespace potd::attacks {

namespace {

tinylm::WeightVector mix(const tinylm::WeightVector& from, const tinylm::WeightVector& to,
                         double a) {
  auto out = from;
  auto f = out.flat();
  const auto t = to.flat();
  for (std::size_t k = 0; k < f.size(); ++k)
    f[k] = static_cast<float>((1.0 - a) * double(f[k]) + a * double(t[k]));
  return out;
}

double mean_loss(const tinylm::ArchConfig& arch, const tinylm::WeightVector& w,
                 const Dataset& data, std::span<const std::uint32_t> ids) {
  double total = 0.0;
  for (std::size_t c = 0; c < ids.size(); c += 32) {
    tinylm::Batch batch;
    for (std::size_t k = c; k < std::min(ids.size(), c + 32); ++k) batch.push_back(data.point(ids[k]));
    for (double l : tinylm::forward_loss(arch, w, batch)) total += l;
  }
  return total / double(ids.size());
}

}  // namespace

Json Provenance::to_json() const {
  return Json{{"kind", kind},
              {"params", params},
              {"tampered_segments", tampered_segments},
              {"dropped_ids", dropped_ids}};
}

void write_sidecar(const Provenance& p, const std::filesystem::path& dir) {
  std::ofstream os(dir / kSidecarName, std::ios::trunc);
  if (!os) throw IoError("cannot write attack sidecar in " + dir.string());
  os << p.to_json().dump(2) << '\n';
}

Provenance read_sidecar(const std::filesystem::path& dir) {
  std::ifstream is(dir / kSidecarName);
  if (!is) throw IoError("no attack sidecar in " + dir.string());
  Json j;
  try {
    is >> j;
    Provenance p;
    p.kind = j.at("kind").get<std::string>();
    p.params = j.at("params");
    p.tampered_segments = j.at("tampered_segments").get<std::vector<std::size_t>>();
    p.dropped_ids = j.at("dropped_ids").get<std::vector<std::uint32_t>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed attack sidecar: " + std::string(e.what()));
  }
}

AttackResult glue(const Transcript& a, const Transcript& b, std::size_t i, std::size_t j) {
  if (a.checkpoints.empty() || b.checkpoints.empty()) throw ContractError("glue: empty transcript");
  if (a.weights(0).size() != b.weights(0).size() || a.weights(0).shapes() != b.weights(0).shapes())
    throw ContractError("glue: weight dimensions differ");
  if (i > a.m() || j >= b.m()) throw ContractError("glue: cut or resume index out of range");
  AttackResult r;
  r.transcript = a;
  auto& ck = r.transcript.checkpoints;
  ck.resize(i + 1);
  for (std::size_t k = j + 1; k <= b.m(); ++k) {
    Checkpoint c = b.checkpoints[k];
    c.index = ck.size();
    ck.push_back(std::move(c));
  }
  r.transcript.final_digest = ck.back().weights.digest();
  r.provenance.kind = "glue";
  r.provenance.params = {{"i", i}, {"j", j}};
  if (!(&a == &b && i == j))
    for (std::size_t k = i + 1; k < ck.size(); ++k) r.provenance.tampered_segments.push_back(k);
  return r;
}

tinylm::WeightVector continuation_target(const Transcript& a, std::size_t i,
                                         const Dataset& undisclosed) {
  if (i > a.m()) throw ContractError("continuation_target: index out of range");
  const auto& start = a.checkpoints[i];
  if (!start.optimizer)
    throw ConfigError("continuation_target: optimizer state at checkpoint " + std::to_string(i) +
                      " is not stored");
  auto w = start.weights;
  auto st = *start.optimizer;
  const std::size_t total = (a.m() - i) * a.hyper.k;
  prover::Sequences seqs;
  for (std::size_t n = 0; n < total; ++n) seqs.push_back(undisclosed.point(n % undisclosed.size()));
  prover::train_sequences(a.hyper, seqs, w, st, a.hyper.noise);
  return w;
}

AttackResult interpolate(const Transcript& a, std::size_t i, const tinylm::WeightVector& target,
                         std::size_t steps, bool calibrate_val_loss) {
  if (steps < 1 || i + steps > a.m()) throw ContractError("interpolate: need 1 <= steps, i + steps <= m");
  if (target.size() != a.weights(i).size()) throw ContractError("interpolate: target dimension differs");
  const auto& base = a.weights(i);
  std::vector<double> alphas(steps);
  for (std::size_t s = 1; s <= steps; ++s) alphas[s - 1] = double(s) / double(steps);

  if (calibrate_val_loss && steps > 1) {
    const auto order = a.order();
    const auto val = order.validation();
    auto f = [&](double x) { return mean_loss(a.hyper.arch, mix(base, target, x), a.dataset, val); };
    const double l0 = f(0.0), l1 = f(1.0);
    // Honest trend: ratio of the last two loss decrements.
    double r = 0.6;
    if (i >= 2) {
      const double d1 = mean_loss(a.hyper.arch, a.weights(i - 1), a.dataset, val) - l0;
      const double d2 = mean_loss(a.hyper.arch, a.weights(i - 2), a.dataset, val) -
                        mean_loss(a.hyper.arch, a.weights(i - 1), a.dataset, val);
      if (d1 > 0.0 && d2 > 0.0) r = std::clamp(d1 / d2, 0.3, 0.95);
    }
    if (l1 < l0) {
      const double span = l0 - l1;
      double lo = 0.0;
      for (std::size_t s = 1; s < steps; ++s) {
        const double want =
            l0 - span * (1.0 - std::pow(r, double(s))) / (1.0 - std::pow(r, double(steps)));
        double left = lo, right = 1.0;
        for (int it = 0; it < 14; ++it) {
          const double mid = 0.5 * (left + right);
          (f(mid) > want ? left : right) = mid;
        }
        alphas[s - 1] = lo = 0.5 * (left + right);
      }
    }
  }

  AttackResult res;
  res.transcript = a;
  auto& ck = res.transcript.checkpoints;
  const auto opt = a.checkpoints[i].optimizer;
  const auto opt_digest = a.checkpoints[i].optimizer_digest;
  for (std::size_t s = 1; s <= steps; ++s) {
    auto& c = ck[i + s];
    c.weights = s == steps ? target : mix(base, target, alphas[s - 1]);
    c.optimizer = opt;
    c.optimizer_digest = opt ? opt->digest() : opt_digest;
    res.provenance.tampered_segments.push_back(i + s);
  }
  ck.resize(i + steps + 1);
  res.transcript.final_digest = ck.back().weights.digest();
  res.provenance.kind = "interpolate";
  res.provenance.params = {{"i", i}, {"steps", steps}, {"calibrated", calibrate_val_loss},
                           {"a", alphas}};
  return res;
}

AttackResult add_data(const Transcript& a, std::size_t i, const Dataset& extra, double fraction) {
  if (fraction < 0.0) throw ContractError("add_data: fraction must be non-negative");
  AttackResult res;
  res.provenance.kind = "add";
  res.provenance.params = {{"i", i}, {"fraction", fraction}};
  if (fraction == 0.0) {
    res.transcript = a;
    return res;
  }
  prover::RunHooks hooks;
  std::size_t used = 0;
  hooks.segment_override = [&](std::size_t seg, const std::vector<std::uint32_t>& ids)
      -> std::optional<prover::Sequences> {
    if (seg != i) return std::nullopt;
    const std::size_t n = ids.size();
    const auto e = static_cast<std::size_t>(std::ceil(fraction * double(n) - 1e-9));
    prover::Sequences out;
    for (std::size_t k = 0; k < n; ++k) {
      out.push_back(a.dataset.point(ids[k]));
      while (used < e && (used + 1) * n <= (k + 1) * e)
        out.push_back(extra.point(used++ % extra.size()));
    }
    return out;
  };
  res.transcript = prover::resume_run(a, i, hooks);
  res.provenance.params["extra_points"] = used;
  res.provenance.tampered_segments.push_back(i);
  return res;
}

AttackResult subtract_data(const Transcript& a, std::size_t i, double kappa, std::uint64_t seed) {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw ContractError("subtract_data: kappa must lie in [0, 1]");
  AttackResult res;
  res.provenance.kind = "subtract";
  res.provenance.params = {{"i", i}, {"kappa", kappa}, {"seed", seed}};
  if (kappa == 0.0) {
    res.transcript = a;
    return res;
  }
  const auto seg = a.order().segment(i);
  const auto drop_count = static_cast<std::size_t>(std::llround(kappa * double(seg.size())));
  const auto key = derive_digest(Sha256().update("subtract").update_u64(seed).finish(), std::uint64_t(i));
  const auto dropped = memorization::sample_ids(key, seg, drop_count);
  prover::RunHooks hooks;
  hooks.segment_override = [&](std::size_t s, const std::vector<std::uint32_t>& ids)
      -> std::optional<prover::Sequences> {
    if (s != i) return std::nullopt;
    prover::Sequences out;
    for (auto id : ids)
      if (std::find(dropped.begin(), dropped.end(), id) == dropped.end())
        out.push_back(a.dataset.point(id));
    return out;
  };
  res.transcript = prover::resume_run(a, i, hooks);
  res.provenance.dropped_ids = dropped;
  res.provenance.tampered_segments.push_back(i);
  return res;
}

AttackResult replace_init(const Transcript& a, std::uint64_t seed) {
  AttackResult res;
  res.transcript = a;
  res.transcript.checkpoints.at(0).weights =
      tinylm::init_weights(Sha256().update("forged-init").update_u64(seed).finish(), a.hyper.arch);
  res.provenance.kind = "reinit";
  res.provenance.params = {{"seed", seed}};
  res.provenance.tampered_segments.push_back(1);
  return res;
}

}  // namespace potd::attacks
