#include "potd/prover.hpp"

#include <algorithm>
#include <string>

#include "potd/errors.hpp"

namespace potd::prover {

namespace {

void check_consistent(const Dataset& data, const HyperParams& hp) {
  hp.arch.validate();
  if (data.seq_len() != hp.arch.seq_len)
    throw ConfigError("dataset sequence length " + std::to_string(data.seq_len()) +
                      " differs from architecture seq_len " + std::to_string(hp.arch.seq_len));
  if (data.vocab() > hp.arch.vocab)
    throw ConfigError("dataset vocabulary " + std::to_string(data.vocab()) +
                      " exceeds architecture vocab " + std::to_string(hp.arch.vocab));
}

Checkpoint make_checkpoint(std::size_t index, const tinylm::WeightVector& w,
                           const tinylm::OptimizerState& st, bool store) {
  Checkpoint c;
  c.index = index;
  c.weights = w;
  c.optimizer_digest = st.digest();
  if (store) c.optimizer = st;
  return c;
}

// Runs segments from..m of `t` (whose checkpoints already end at from-1).
void run_segments(Transcript& t, std::size_t from, tinylm::WeightVector w,
                  tinylm::OptimizerState st, const RunHooks& hooks) {
  const auto order = t.order();
  for (std::size_t i = from; i <= t.hyper.m; ++i) {
    const auto ids = order.segment(i);
    std::optional<Sequences> seqs;
    if (hooks.segment_override) seqs = hooks.segment_override(i, ids);
    if (!seqs) seqs = committed_sequences(t.dataset, ids);
    double loss = 0.0;
    try {
      loss = train_sequences(t.hyper, *seqs, w, st, t.hyper.noise);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " (segment " + std::to_string(i) + ")",
                          e.tensor(), long(i));
    }
    t.checkpoints.push_back(make_checkpoint(i, w, st, t.hyper.store_optimizer_state));
    if (hooks.on_segment) hooks.on_segment(i, loss);
  }
  t.final_digest = t.checkpoints.back().weights.digest();
}

}  // namespace

Sequences committed_sequences(const Dataset& data, std::span<const std::uint32_t> ids) {
  Sequences out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(data.point(id));
  return out;
}

SegmentSchedule segment_schedule(const HyperParams& hp, const commitment::DataOrder& order) {
  SegmentSchedule s;
  std::uint64_t step = 0;
  for (std::size_t i = 1; i <= order.segment_count(); ++i) {
    const std::uint64_t n = order.segment(i).size();
    const std::uint64_t steps = (n + hp.batch_size - 1) / hp.batch_size;
    double sum = 0.0;
    for (std::uint64_t k = 0; k < steps; ++k) sum += hp.optimizer.lr_at(step + k);
    step += steps;
    s.steps.push_back(steps);
    s.lr_sum.push_back(sum);
  }
  return s;
}

double train_sequences(const HyperParams& hp, const Sequences& seqs, tinylm::WeightVector& w,
                       tinylm::OptimizerState& state, const tinylm::NoiseConfig& noise) {
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t b = 0; b < seqs.size(); b += hp.batch_size) {
    const auto end = std::min(seqs.size(), b + hp.batch_size);
    tinylm::Batch batch(seqs.begin() + std::ptrdiff_t(b), seqs.begin() + std::ptrdiff_t(end));
    total += tinylm::train_step(hp.arch, w, state, batch, hp.optimizer, noise).loss;
    ++batches;
  }
  return batches ? total / double(batches) : 0.0;
}

Transcript train_run(const Dataset& data, const HyperParams& hyper, const RunHooks& hooks) {
  Transcript t;
  t.dataset = data;
  t.hyper = hyper.resolved(data.size());
  check_consistent(data, t.hyper);
  t.seed = commitment::commit(data, t.hyper.s_rand);
  const auto order = t.order();
  t.order_digest = order.digest();
  auto w = commitment::gen_init(t.seed.s, t.hyper.arch);
  auto st = tinylm::OptimizerState::fresh(w.size());
  t.checkpoints.push_back(make_checkpoint(0, w, st, t.hyper.store_optimizer_state));
  run_segments(t, 1, std::move(w), std::move(st), hooks);
  return t;
}

Transcript resume_run(const Transcript& base, std::size_t from, const RunHooks& hooks) {
  if (from < 1 || from > base.m()) throw ContractError("resume_run: segment index out of range");
  const auto& prev = base.checkpoints.at(from - 1);
  if (!prev.optimizer)
    throw ConfigError("resume_run: transcript lacks optimizer state at checkpoint " +
                      std::to_string(from - 1));
  Transcript t = base;
  t.checkpoints.resize(from);
  run_segments(t, from, prev.weights, *prev.optimizer, hooks);
  return t;
}

tinylm::WeightVector retrain_segment(const Transcript& t, std::size_t i,
                                     std::uint64_t noise_seed) {
  if (i < 1 || i > t.m()) throw ContractError("retrain_segment: segment index out of range");
  const auto& prev = t.checkpoints[i - 1];
  if (!prev.optimizer)
    throw ConfigError("segment " + std::to_string(i) +
                      " is not retrainable: optimizer state at checkpoint " +
                      std::to_string(i - 1) + " was not stored");
  if (prev.optimizer->digest() != prev.optimizer_digest)
    throw IntegrityError("optimizer state does not match its digest", long(i - 1));
  auto w = prev.weights;
  auto st = *prev.optimizer;
  auto noise = t.hyper.noise;
  noise.seed = noise_seed;
  const auto ids = t.order().segment(i);
  try {
    train_sequences(t.hyper, committed_sequences(t.dataset, ids), w, st, noise);
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(e.what()) + " (segment " + std::to_string(i) + ")",
                        e.tensor(), long(i));
  }
  return w;
}

}  // namespace potd::prover
