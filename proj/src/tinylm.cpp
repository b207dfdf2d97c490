#include "potd/tinylm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "potd/errors.hpp"

namespace potd::tinylm {

namespace {

constexpr std::size_t kEvalChunk = 32;

// Dense layer l of the network: hidden layers first, output projection last.
struct DenseDims {
  std::size_t in;
  std::size_t out;
};

std::vector<DenseDims> dense_dims(const ArchConfig& a) {
  std::vector<DenseDims> dims;
  std::size_t in = std::size_t(a.context) * a.embed_dim;
  for (auto h : a.hidden) {
    dims.push_back({in, h});
    in = h;
  }
  dims.push_back({in, a.vocab});
  return dims;
}

// Tensor indices: 0 = embedding, then (w, b) per dense layer.
constexpr std::size_t weight_index(std::size_t layer) { return 1 + 2 * layer; }
constexpr std::size_t bias_index(std::size_t layer) { return 2 + 2 * layer; }

std::vector<std::size_t> offsets_of(const std::vector<TensorShape>& shapes) {
  std::vector<std::size_t> off;
  std::size_t acc = 0;
  for (const auto& s : shapes) {
    off.push_back(acc);
    acc += s.numel();
  }
  off.push_back(acc);
  return off;
}

// y[0..n) += a * x[0..n)
inline void axpy(double a, const double* __restrict x, double* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

struct Activations {
  std::size_t rows = 0;
  std::vector<std::uint32_t> context;  // rows * C token ids (pad = vocab)
  std::vector<std::uint32_t> target;   // rows
  std::vector<std::vector<double>> act;  // act[0] = embedded input, act[l+1] = output of dense l
};

void gather_positions(const ArchConfig& a, const Batch& batch, Activations& out) {
  const std::size_t T = a.seq_len, C = a.context;
  out.rows = batch.size() * T;
  out.context.assign(out.rows * C, a.vocab);
  out.target.resize(out.rows);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& seq = batch[b];
    if (seq.size() != T) throw ContractError("sequence length does not match architecture");
    for (std::size_t t = 0; t < T; ++t) {
      if (seq[t] >= a.vocab) throw ContractError("token index out of vocabulary");
      const std::size_t r = b * T + t;
      out.target[r] = seq[t];
      for (std::size_t j = 0; j < C; ++j) {
        // Oldest context token first; positions before the start stay pad.
        const long src = long(t) - long(C) + long(j);
        if (src >= 0) out.context[r * C + j] = seq[std::size_t(src)];
      }
    }
  }
}

// Runs the forward pass and returns per-row losses. When dlogits is non-null
// it receives d(mean loss)/d(logits) for the backward pass.
std::vector<double> forward(const ArchConfig& a, std::span<const double> p,
                            const std::vector<std::size_t>& off, Activations& s,
                            std::vector<double>* dlogits) {
  const auto dims = dense_dims(a);
  const std::size_t C = a.context, E = a.embed_dim, rows = s.rows;
  s.act.assign(dims.size() + 1, {});
  auto& x0 = s.act[0];
  x0.resize(rows * C * E);
  const double* emb = p.data() + off[0];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < C; ++j)
      std::memcpy(&x0[(r * C + j) * E], emb + std::size_t(s.context[r * C + j]) * E,
                  E * sizeof(double));

  for (std::size_t l = 0; l < dims.size(); ++l) {
    const auto [in, out] = dims[l];
    const double* W = p.data() + off[weight_index(l)];
    const double* bias = p.data() + off[bias_index(l)];
    const auto& X = s.act[l];
    auto& Y = s.act[l + 1];
    Y.resize(rows * out);
    for (std::size_t r = 0; r < rows; ++r) {
      double* y = &Y[r * out];
      std::memcpy(y, bias, out * sizeof(double));
      const double* x = &X[r * in];
      for (std::size_t i = 0; i < in; ++i) axpy(x[i], W + i * out, y, out);
      if (l + 1 < dims.size())
        for (std::size_t o = 0; o < out; ++o) y[o] = std::tanh(y[o]);
    }
  }

  const std::size_t V = a.vocab;
  auto& logits = s.act.back();
  std::vector<double> loss(rows);
  if (dlogits) dlogits->resize(rows * V);
  const double inv_rows = 1.0 / double(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = &logits[r * V];
    double mx = z[0];
    for (std::size_t o = 1; o < V; ++o) mx = std::max(mx, z[o]);
    double sum = 0.0;
    for (std::size_t o = 0; o < V; ++o) sum += std::exp(z[o] - mx);
    const double lse = mx + std::log(sum);
    loss[r] = lse - z[s.target[r]];
    if (dlogits) {
      double* d = &(*dlogits)[r * V];
      for (std::size_t o = 0; o < V; ++o) d[o] = std::exp(z[o] - lse) * inv_rows;
      d[s.target[r]] -= inv_rows;
    }
  }
  return loss;
}

void backward(const ArchConfig& a, std::span<const double> p, const std::vector<std::size_t>& off,
              const Activations& s, std::vector<double> dy, std::span<double> grad) {
  const auto dims = dense_dims(a);
  const std::size_t rows = s.rows, C = a.context, E = a.embed_dim;
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> wt, dx;
  for (std::size_t l = dims.size(); l-- > 0;) {
    const auto [in, out] = dims[l];
    const double* W = p.data() + off[weight_index(l)];
    double* gW = grad.data() + off[weight_index(l)];
    double* gb = grad.data() + off[bias_index(l)];
    const auto& X = s.act[l];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* d = &dy[r * out];
      const double* x = &X[r * in];
      for (std::size_t i = 0; i < in; ++i) axpy(x[i], d, gW + i * out, out);
      axpy(1.0, d, gb, out);
    }
    // Transposed copy so dX = dY W^T is also a contiguous axpy.
    wt.resize(in * out);
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t o = 0; o < out; ++o) wt[o * in + i] = W[i * out + o];
    dx.assign(rows * in, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* d = &dy[r * out];
      double* g = &dx[r * in];
      for (std::size_t o = 0; o < out; ++o) axpy(d[o], &wt[o * in], g, in);
    }
    if (l > 0) {
      // Through the tanh that produced X.
      for (std::size_t k = 0; k < dx.size(); ++k) dx[k] *= 1.0 - X[k] * X[k];
    }
    dy.swap(dx);
  }
  double* gE = grad.data() + off[0];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < C; ++j)
      axpy(1.0, &dy[(r * C + j) * E], gE + std::size_t(s.context[r * C + j]) * E, E);
}

std::vector<double> to_double(std::span<const float> f) { return {f.begin(), f.end()}; }

void check_shapes(const ArchConfig& a, const WeightVector& w) {
  if (w.shapes() != shape_table(a)) throw ContractError("weight shape table does not match architecture");
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

}  // namespace

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::scaled_gaussian: return "scaled_gaussian";
    case InitScheme::gaussian: return "gaussian";
    case InitScheme::zeros: return "zeros";
  }
  return "?";
}

InitScheme init_scheme_from_string(const std::string& s) {
  if (s == "scaled_gaussian") return InitScheme::scaled_gaussian;
  if (s == "gaussian") return InitScheme::gaussian;
  if (s == "zeros") return InitScheme::zeros;
  throw ConfigError("unknown init scheme: " + s);
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer: " + s);
}

void ArchConfig::validate() const {
  if (vocab < 2) throw ConfigError("architecture: vocab must be >= 2");
  if (hidden.empty()) throw ConfigError("architecture: need at least one hidden layer");
  if (seq_len < 1 || context < 1 || embed_dim < 1)
    throw ConfigError("architecture: seq_len, context and embed_dim must be positive");
  for (auto h : hidden)
    if (h < 1) throw ConfigError("architecture: hidden widths must be positive");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale))
    throw ConfigError("architecture: init_scale must be finite and non-negative");
}

std::size_t TensorShape::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<TensorShape> shape_table(const ArchConfig& a) {
  a.validate();
  std::vector<TensorShape> t;
  t.push_back({"embed", {a.vocab + 1, a.embed_dim}});
  const auto dims = dense_dims(a);
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const std::string base = l + 1 < dims.size() ? "hidden" + std::to_string(l) : "out";
    t.push_back({base + ".w", {std::uint32_t(dims[l].in), std::uint32_t(dims[l].out)}});
    t.push_back({base + ".b", {std::uint32_t(dims[l].out)}});
  }
  return t;
}

std::size_t param_count(const ArchConfig& a) {
  std::size_t n = 0;
  for (const auto& s : shape_table(a)) n += s.numel();
  return n;
}

WeightVector::WeightVector(std::vector<TensorShape> shapes, std::vector<float> flat)
    : shapes_(std::move(shapes)), flat_(std::move(flat)) {
  build_offsets();
  if (offsets_.back() != flat_.size())
    throw ContractError("flat weight length does not match shape table");
}

WeightVector WeightVector::zeros(const ArchConfig& arch) {
  auto shapes = shape_table(arch);
  std::size_t n = 0;
  for (const auto& s : shapes) n += s.numel();
  return WeightVector(std::move(shapes), std::vector<float>(n, 0.0f));
}

void WeightVector::build_offsets() { offsets_ = offsets_of(shapes_); }

std::span<float> WeightVector::tensor(std::size_t index) {
  return std::span<float>(flat_).subspan(offsets_.at(index), shapes_.at(index).numel());
}

std::span<const float> WeightVector::tensor(std::size_t index) const {
  return std::span<const float>(flat_).subspan(offsets_.at(index), shapes_.at(index).numel());
}

bool WeightVector::all_finite() const {
  return std::all_of(flat_.begin(), flat_.end(), [](float x) { return std::isfinite(x); });
}

Digest WeightVector::digest() const {
  Sha256 h;
  for (float x : flat_) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    h.update_u32(bits);
  }
  return h.finish();
}

bool WeightVector::operator==(const WeightVector& o) const {
  return shapes_ == o.shapes_ && flat_.size() == o.flat_.size() &&
         std::memcmp(flat_.data(), o.flat_.data(), flat_.size() * sizeof(float)) == 0;
}

WeightVector init_weights(const Digest& seed, const ArchConfig& arch) {
  WeightVector w = WeightVector::zeros(arch);
  if (arch.init == InitScheme::zeros) return w;
  for (std::size_t t = 0; t < w.shapes().size(); ++t) {
    const auto& shape = w.shapes()[t];
    const bool is_bias = shape.dims.size() == 1;
    double std_dev = arch.init_scale;
    if (arch.init == InitScheme::scaled_gaussian) {
      if (is_bias) continue;
      // Embedding rows feed the first layer directly; dense layers scale by fan-in.
      if (t > 0) std_dev /= std::sqrt(double(shape.dims[0]));
    }
    ChaChaStream stream(seed, t);
    for (float& x : w.tensor(t)) x = static_cast<float>(std_dev * stream.gaussian());
  }
  return w;
}

std::vector<double> forward_loss(const ArchConfig& arch, const WeightVector& w, const Batch& batch) {
  check_shapes(arch, w);
  const auto p = to_double(w.flat());
  const auto off = offsets_of(w.shapes());
  std::vector<double> out;
  out.reserve(batch.size());
  Activations s;
  for (std::size_t start = 0; start < batch.size(); start += kEvalChunk) {
    const std::size_t end = std::min(batch.size(), start + kEvalChunk);
    Batch chunk(batch.begin() + long(start), batch.begin() + long(end));
    gather_positions(arch, chunk, s);
    const auto row_loss = forward(arch, p, off, s, nullptr);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      double sum = 0.0;
      for (std::size_t t = 0; t < arch.seq_len; ++t) sum += row_loss[b * arch.seq_len + t];
      out.push_back(sum / double(arch.seq_len));
    }
  }
  return out;
}

double batch_loss(const ArchConfig& arch, std::span<const double> params, const Batch& batch) {
  const auto off = offsets_of(shape_table(arch));
  if (params.size() != off.back()) throw ContractError("parameter length mismatch");
  Activations s;
  gather_positions(arch, batch, s);
  return mean(forward(arch, params, off, s, nullptr));
}

namespace {

std::vector<double> gradient_impl(const ArchConfig& arch, std::span<const double> p,
                                  const std::vector<std::size_t>& off, const Batch& batch,
                                  double* loss_out) {
  if (batch.empty()) throw ContractError("empty batch");
  Activations s;
  gather_positions(arch, batch, s);
  std::vector<double> dlogits;
  const auto loss = forward(arch, p, off, s, &dlogits);
  if (loss_out) *loss_out = mean(loss);
  std::vector<double> grad(off.back());
  backward(arch, p, off, s, std::move(dlogits), grad);
  return grad;
}

}  // namespace

std::vector<double> gradient(const ArchConfig& arch, const WeightVector& w, const Batch& batch,
                             double* loss_out) {
  check_shapes(arch, w);
  return gradient_impl(arch, to_double(w.flat()), offsets_of(w.shapes()), batch, loss_out);
}

double OptimizerConfig::lr_at(std::uint64_t step) const {
  if (warmup_steps > 0 && step < warmup_steps)
    return lr * double(step + 1) / double(warmup_steps);
  if (total_steps <= warmup_steps) return lr;
  const double progress =
      std::min(1.0, double(step - warmup_steps) / double(total_steps - warmup_steps));
  return lr * (min_lr_ratio + (1.0 - min_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

OptimizerState OptimizerState::fresh(std::size_t d) {
  return OptimizerState{0, std::vector<float>(d, 0.0f), std::vector<float>(d, 0.0f)};
}

Digest OptimizerState::digest() const {
  Sha256 h;
  h.update_u64(step);
  for (const auto* buf : {&m, &v}) {
    h.update_u64(buf->size());
    for (float x : *buf) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      h.update_u32(bits);
    }
  }
  return h.finish();
}

StepResult train_step(const ArchConfig& arch, WeightVector& w, OptimizerState& state,
                      const Batch& batch, const OptimizerConfig& opt, const NoiseConfig& noise) {
  check_shapes(arch, w);
  const std::size_t d = w.size();
  if (state.m.size() != d || state.v.size() != d)
    throw ContractError("optimizer buffers do not match weight dimension");
  if (!w.all_finite()) throw TrainingError("non-finite weights before step", "weights");

  const auto off = offsets_of(w.shapes());
  StepResult result;
  const auto grad = gradient_impl(arch, to_double(w.flat()), off, batch, &result.loss);
  for (std::size_t t = 0; t < w.shapes().size(); ++t) {
    for (std::size_t k = off[t]; k < off[t + 1]; ++k) {
      if (!std::isfinite(grad[k]))
        throw TrainingError("non-finite gradient in tensor " + w.shapes()[t].name,
                            w.shapes()[t].name);
    }
  }

  const double lr = opt.lr_at(state.step);
  auto flat = w.flat();
  if (opt.kind == OptimizerKind::adam) {
    const double t = double(state.step + 1);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t k = 0; k < d; ++k) {
      const double wk = flat[k];
      const double g = grad[k] + opt.weight_decay * wk;
      const double m = opt.beta1 * state.m[k] + (1.0 - opt.beta1) * g;
      const double v = opt.beta2 * state.v[k] + (1.0 - opt.beta2) * g * g;
      state.m[k] = static_cast<float>(m);
      state.v[k] = static_cast<float>(v);
      const double update = (m / bc1) / (std::sqrt(v / bc2) + opt.eps);
      flat[k] = static_cast<float>(wk - lr * update);
    }
  } else {
    for (std::size_t k = 0; k < d; ++k) {
      const double wk = flat[k];
      const double g = grad[k] + opt.weight_decay * wk;
      const double m = opt.momentum * state.m[k] + g;
      state.m[k] = static_cast<float>(m);
      flat[k] = static_cast<float>(wk - lr * m);
    }
  }

  if (noise.enabled && noise.scale > 0.0) {
    const Digest key = derive_digest(Sha256().update("noise").update_u64(noise.seed).finish(), state.step);
    ChaChaStream stream(key);
    for (std::size_t k = 0; k < d; ++k)
      flat[k] = static_cast<float>(double(flat[k]) + noise.scale * stream.gaussian());
  }
  ++state.step;

  for (std::size_t t = 0; t < w.shapes().size(); ++t) {
    for (float x : w.tensor(t))
      if (!std::isfinite(x))
        throw TrainingError("non-finite weights after step in tensor " + w.shapes()[t].name,
                            w.shapes()[t].name);
  }
  return result;
}

namespace {

// Applies a hidden-unit permutation to any buffer laid out like the weights.
template <typename T>
void permute_buffer(const ArchConfig& arch, std::span<const T> src, std::span<T> dst,
                    const HiddenPermutation& perm) {
  const auto shapes = shape_table(arch);
  const auto off = offsets_of(shapes);
  const auto dims = dense_dims(arch);
  if (perm.size() != arch.hidden.size())
    throw ContractError("need one permutation per hidden layer");
  for (std::size_t l = 0; l < perm.size(); ++l) {
    if (perm[l].size() != arch.hidden[l])
      throw ContractError("permutation length does not match hidden width of layer " +
                          std::to_string(l));
    std::vector<bool> seen(perm[l].size(), false);
    for (auto p : perm[l]) {
      if (p >= perm[l].size() || seen[p]) throw ContractError("not a permutation");
      seen[p] = true;
    }
  }
  std::copy(src.begin(), src.end(), dst.begin());
  for (std::size_t l = 0; l < perm.size(); ++l) {
    const auto& P = perm[l];
    // Output side of dense layer l: columns of W and entries of b.
    const auto [in, out] = dims[l];
    const std::size_t wo = off[weight_index(l)], bo = off[bias_index(l)];
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t j = 0; j < out; ++j) dst[wo + i * out + j] = src[wo + i * out + P[j]];
    for (std::size_t j = 0; j < out; ++j) dst[bo + j] = src[bo + P[j]];
  }
  for (std::size_t l = 0; l < perm.size(); ++l) {
    // Input side of dense layer l+1: rows of its weight. Its columns may have
    // been permuted already, so read from dst.
    const auto& P = perm[l];
    const auto [in, out] = dims[l + 1];
    const std::size_t wo = off[weight_index(l + 1)];
    std::vector<T> tmp(dst.begin() + long(wo), dst.begin() + long(wo + in * out));
    for (std::size_t j = 0; j < in; ++j)
      for (std::size_t o = 0; o < out; ++o) dst[wo + j * out + o] = tmp[P[j] * out + o];
  }
}

}  // namespace

WeightVector permute_hidden_units(const ArchConfig& arch, const WeightVector& w,
                                  const HiddenPermutation& perm) {
  check_shapes(arch, w);
  std::vector<float> out(w.size());
  permute_buffer<float>(arch, w.flat(), out, perm);
  return WeightVector(w.shapes(), std::move(out));
}

OptimizerState permute_hidden_units(const ArchConfig& arch, const OptimizerState& s,
                                    const HiddenPermutation& perm) {
  OptimizerState r = s;
  permute_buffer<float>(arch, s.m, r.m, perm);
  permute_buffer<float>(arch, s.v, r.v, perm);
  return r;
}

double weight_distance(const WeightVector& a, const WeightVector& b) {
  if (a.size() != b.size()) throw ContractError("weight_distance: dimension mismatch");
  const auto fa = a.flat();
  const auto fb = b.flat();
  double s = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) {
    const double d = double(fa[k]) - double(fb[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

double weight_norm(const WeightVector& a) {
  double s = 0.0;
  for (float x : a.flat()) s += double(x) * double(x);
  return std::sqrt(s);
}

}  // namespace potd::tinylm
