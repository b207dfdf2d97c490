#include "potd/transcript.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "potd/errors.hpp"
#include "potd/json_io.hpp"

namespace potd {

namespace fs = std::filesystem;
using binio::read_le;
using binio::write_u32;
using binio::write_u64;

namespace {

constexpr char kWeightMagic[4] = {'P', 'O', 'T', 'W'};
constexpr char kOptMagic[4] = {'P', 'O', 'T', 'O'};
constexpr std::uint32_t kFileVersion = 1;
constexpr int kManifestVersion = 1;

std::string indexed_name(const char* prefix, std::uint64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04llu.bin", prefix, static_cast<unsigned long long>(i));
  return buf;
}

void write_floats(std::ostream& os, std::span<const float> xs) {
  std::vector<char> buf(xs.size() * 4);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &xs[i], 4);
    for (int b = 0; b < 4; ++b) buf[4 * i + b] = char(bits >> (8 * b));
  }
  os.write(buf.data(), std::streamsize(buf.size()));
}

std::vector<float> read_floats(std::istream& is, std::size_t count, const fs::path& path) {
  std::vector<unsigned char> raw(count * 4);
  if (!is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
    throw IoError("truncated float payload: " + path.string());
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = std::uint32_t(raw[4 * i]) | std::uint32_t(raw[4 * i + 1]) << 8 |
                               std::uint32_t(raw[4 * i + 2]) << 16 |
                               std::uint32_t(raw[4 * i + 3]) << 24;
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

void expect_magic(std::istream& is, const char (&magic)[4], const fs::path& path) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw IoError("bad magic in " + path.string());
  if (read_le(is, 4, path) != kFileVersion) throw IoError("unsupported version in " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

Digest hex_field(const Json& j, const char* key) {
  try {
    return digest_from_hex(j.at(key).get<std::string>());
  } catch (const std::exception& e) {
    throw IoError(std::string("manifest: bad digest field \"") + key + "\": " + e.what());
  }
}

}  // namespace

HyperParams HyperParams::resolved(std::size_t n) const {
  HyperParams h = *this;
  if (h.holdout == 0) h.holdout = commitment::default_holdout(n);
  if (h.holdout >= n) throw ConfigError("holdout must leave training points");
  if (h.k == 0) throw ConfigError("segment length k must be positive");
  if (h.epochs == 0) throw ConfigError("epochs must be positive");
  const std::uint64_t per_epoch = (n - h.holdout + h.k - 1) / h.k;
  const std::uint64_t segments = per_epoch * h.epochs;
  if (h.m == 0) h.m = segments;
  if (h.m != segments)
    throw ConfigError("checkpoint count m=" + std::to_string(h.m) + " does not tile " +
                      std::to_string(h.epochs) + " epoch(s) of " + std::to_string(n - h.holdout) +
                      " training points with k=" + std::to_string(h.k) + " (expected " +
                      std::to_string(segments) + ")");
  return h;
}

std::uint64_t HyperParams::planned_steps(std::size_t n) const {
  const auto h = resolved(n);
  const std::uint64_t nt = n - h.holdout;
  const std::uint64_t full = nt / h.k, rem = nt % h.k;
  const auto steps = [&](std::uint64_t pts) { return (pts + h.batch_size - 1) / h.batch_size; };
  return h.epochs * (full * steps(h.k) + steps(rem));
}

bool HyperParams::operator==(const HyperParams& o) const {
  return arch == o.arch && optimizer == o.optimizer && noise.enabled == o.noise.enabled &&
         noise.scale == o.noise.scale && batch_size == o.batch_size && k == o.k && m == o.m &&
         epochs == o.epochs && s_rand == o.s_rand && holdout == o.holdout &&
         store_optimizer_state == o.store_optimizer_state;
}

commitment::DataOrder Transcript::order() const {
  return commitment::gen_order(seed.s, dataset.size(), hyper.holdout, hyper.k, hyper.epochs);
}

Digest Transcript::digest() const {
  Sha256 h;
  h.update("potd-transcript").update(seed.s).update(seed.dataset_digest).update(order_digest);
  for (const auto& c : checkpoints) h.update_u64(c.index).update(c.weights.digest());
  h.update(final_digest);
  return h.finish();
}

void save_checkpoint(const tinylm::WeightVector& w, const fs::path& path) {
  auto os = open_out(path);
  os.write(kWeightMagic, 4);
  write_u32(os, kFileVersion);
  write_u32(os, std::uint32_t(w.shapes().size()));
  for (const auto& s : w.shapes()) {
    write_u32(os, std::uint32_t(s.name.size()));
    os.write(s.name.data(), std::streamsize(s.name.size()));
    write_u32(os, std::uint32_t(s.dims.size()));
    for (auto d : s.dims) write_u32(os, d);
  }
  write_u64(os, w.size());
  write_floats(os, w.flat());
  if (!os) throw IoError("write failed: " + path.string());
}

tinylm::WeightVector load_checkpoint(const fs::path& path) {
  auto is = open_in(path);
  expect_magic(is, kWeightMagic, path);
  const auto count = read_le(is, 4, path);
  if (count > 4096) throw IoError("implausible tensor count in " + path.string());
  std::vector<tinylm::TensorShape> shapes(count);
  for (auto& s : shapes) {
    const auto len = read_le(is, 4, path);
    if (len > 256) throw IoError("implausible tensor name length in " + path.string());
    s.name.resize(len);
    if (!is.read(s.name.data(), std::streamsize(len))) throw IoError("truncated " + path.string());
    const auto nd = read_le(is, 4, path);
    if (nd > 8) throw IoError("implausible tensor rank in " + path.string());
    s.dims.resize(nd);
    for (auto& d : s.dims) d = std::uint32_t(read_le(is, 4, path));
  }
  const auto d = read_le(is, 8, path);
  std::size_t expect = 0;
  for (const auto& s : shapes) expect += s.numel();
  if (d != expect) throw IoError("payload length disagrees with shape table in " + path.string());
  auto flat = read_floats(is, d, path);
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path.string());
  return tinylm::WeightVector(std::move(shapes), std::move(flat));
}

void save_optimizer_state(const tinylm::OptimizerState& s, const fs::path& path) {
  auto os = open_out(path);
  os.write(kOptMagic, 4);
  write_u32(os, kFileVersion);
  write_u64(os, s.step);
  write_u64(os, s.m.size());
  write_floats(os, s.m);
  write_floats(os, s.v);
  if (!os) throw IoError("write failed: " + path.string());
}

tinylm::OptimizerState load_optimizer_state(const fs::path& path) {
  auto is = open_in(path);
  expect_magic(is, kOptMagic, path);
  tinylm::OptimizerState s;
  s.step = read_le(is, 8, path);
  const auto d = read_le(is, 8, path);
  if (d > (std::uint64_t(1) << 32)) throw IoError("implausible dimension in " + path.string());
  s.m = read_floats(is, d, path);
  s.v = read_floats(is, d, path);
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path.string());
  return s;
}

void save_transcript(const Transcript& t, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_dataset(t.dataset, dir / "dataset.bin");
  save_hashes(t.dataset.point_hashes(), dir / "hashes.bin");

  Json ckpts = Json::array();
  for (const auto& c : t.checkpoints) {
    const auto name = indexed_name("ckpt", c.index);
    save_checkpoint(c.weights, dir / name);
    Json entry{{"index", c.index},
               {"file", name},
               {"weights_digest", to_hex(c.weights.digest())},
               {"optimizer_digest", to_hex(c.optimizer_digest)}};
    if (c.optimizer) {
      const auto oname = indexed_name("opt", c.index);
      save_optimizer_state(*c.optimizer, dir / oname);
      entry["optimizer_file"] = oname;
    } else {
      entry["optimizer_file"] = nullptr;
    }
    ckpts.push_back(std::move(entry));
  }

  Json seed{{"s", to_hex(t.seed.s)},
            {"s_rand", t.seed.s_rand},
            {"dataset_digest", to_hex(t.seed.dataset_digest)}};
  if (t.seed.previous) seed["previous"] = to_hex(*t.seed.previous);

  Json manifest{{"format", "potd-transcript"},
                {"version", kManifestVersion},
                {"dataset",
                 {{"file", "dataset.bin"},
                  {"hashes_file", "hashes.bin"},
                  {"n", t.dataset.size()},
                  {"digest", to_hex(t.dataset.digest())}}},
                {"hyperparams", to_json(t.hyper)},
                {"seed_commitment", seed},
                {"order_digest", to_hex(t.order_digest)},
                {"final_weights_digest", to_hex(t.final_digest)},
                {"checkpoints", ckpts}};
  auto os = open_out(dir / "manifest.json");
  os << manifest.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + (dir / "manifest.json").string());
}

Transcript load_transcript(const fs::path& dir) {
  const auto mpath = dir / "manifest.json";
  auto is = open_in(mpath);
  Json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest is not valid JSON: " + std::string(e.what()));
  }
  Transcript t;
  try {
    if (manifest.at("format") != "potd-transcript") throw IoError("not a transcript manifest");
    if (manifest.at("version") != kManifestVersion)
      throw IoError("unsupported manifest version " + manifest.at("version").dump());
    const auto& ds = manifest.at("dataset");
    t.dataset = load_dataset(dir / ds.at("file").get<std::string>());
    t.hyper = hyper_from_json(manifest.at("hyperparams"));
    const auto& seed = manifest.at("seed_commitment");
    t.seed.s = hex_field(seed, "s");
    t.seed.s_rand = seed.at("s_rand").get<std::uint32_t>();
    t.seed.dataset_digest = hex_field(seed, "dataset_digest");
    if (seed.contains("previous")) t.seed.previous = hex_field(seed, "previous");
    t.order_digest = hex_field(manifest, "order_digest");
    t.final_digest = hex_field(manifest, "final_weights_digest");
    for (const auto& entry : manifest.at("checkpoints")) {
      Checkpoint c;
      c.index = entry.at("index").get<std::uint64_t>();
      const auto wpath = dir / entry.at("file").get<std::string>();
      if (!fs::exists(wpath)) throw IoError("missing checkpoint file " + wpath.string());
      const auto want = hex_field(entry, "weights_digest");
      try {
        c.weights = load_checkpoint(wpath);
      } catch (const IoError& e) {
        throw IntegrityError("checkpoint " + std::to_string(c.index) + " unreadable: " + e.what(),
                             long(c.index));
      } catch (const ContractError& e) {
        throw IntegrityError("checkpoint " + std::to_string(c.index) + " malformed: " + e.what(),
                             long(c.index));
      }
      if (c.weights.digest() != want)
        throw IntegrityError("checkpoint " + std::to_string(c.index) +
                                 " does not match its manifest digest",
                             long(c.index));
      c.optimizer_digest = hex_field(entry, "optimizer_digest");
      if (entry.contains("optimizer_file") && !entry.at("optimizer_file").is_null()) {
        const auto opath = dir / entry.at("optimizer_file").get<std::string>();
        if (!fs::exists(opath)) throw IoError("missing optimizer file " + opath.string());
        try {
          c.optimizer = load_optimizer_state(opath);
        } catch (const IoError& e) {
          throw IntegrityError("optimizer state " + std::to_string(c.index) +
                                   " unreadable: " + e.what(),
                               long(c.index));
        }
        if (c.optimizer->digest() != c.optimizer_digest)
          throw IntegrityError("optimizer state " + std::to_string(c.index) +
                                   " does not match its manifest digest",
                               long(c.index));
      }
      t.checkpoints.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest field error: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw IoError("manifest hyperparameters invalid: " + std::string(e.what()));
  }
  return t;
}

StructureCheck verify_structure(const Transcript& t) {
  auto fail = [](std::string step, std::string detail) {
    return StructureCheck{false, std::move(step), std::move(detail)};
  };
  // Step 1: the witness ends in the claimed final weights and is well formed.
  if (t.checkpoints.size() < 2) return fail("final-weights", "fewer than two checkpoints");
  for (std::size_t i = 0; i < t.checkpoints.size(); ++i) {
    if (t.checkpoints[i].index != i)
      return fail("final-weights", "checkpoint indices are not 0..m in order");
    if (!t.checkpoints[i].weights.all_finite())
      return fail("final-weights", "checkpoint " + std::to_string(i) + " has non-finite weights");
  }
  if (t.m() != t.hyper.m)
    return fail("final-weights", "checkpoint count " + std::to_string(t.m()) +
                                     " differs from declared m=" + std::to_string(t.hyper.m));
  if (t.checkpoints.back().weights.digest() != t.final_digest)
    return fail("final-weights", "last checkpoint is not the claimed final weights");

  // Step 2: seed re-derivation from the shipped data.
  if (t.dataset.digest() != t.seed.dataset_digest)
    return fail("seed", "dataset hashes do not match the committed dataset digest");
  if (t.hyper.s_rand != t.seed.s_rand)
    return fail("seed", "declared s_rand differs from the seed commitment");
  if (commitment::derive_seed(t.dataset.point_hashes(), t.seed.s_rand) != t.seed.s)
    return fail("seed", "seed does not re-derive from dataset hashes and s_rand");

  // Step 3: initialization and data order.
  try {
    if (t.weights(0).shapes() != tinylm::shape_table(t.hyper.arch))
      return fail("init", "W0 shape table does not match the declared architecture");
    if (!(commitment::gen_init(t.seed.s, t.hyper.arch) == t.weights(0)))
      return fail("init", "W0 differs from G_r(s)");
  } catch (const ConfigError& e) {
    return fail("init", e.what());
  }
  try {
    const auto order = t.order();
    if (order.digest() != t.order_digest) return fail("order", "data order differs from G_p(s)");
    if (order.segment_count() != t.hyper.m)
      return fail("order", "segments do not tile the training set");
  } catch (const ConfigError& e) {
    return fail("order", e.what());
  }
  return {};
}

}  // namespace potd
