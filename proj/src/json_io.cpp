#include "potd/json_io.hpp"

#include <string>

#include "potd/errors.hpp"

namespace potd {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key \"" + key + "\"");
  }
}

namespace {

template <class T>
void read(const Json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace

Json to_json(const tinylm::ArchConfig& a) {
  return Json{{"vocab", a.vocab},         {"seq_len", a.seq_len},
              {"context", a.context},     {"embed_dim", a.embed_dim},
              {"hidden", a.hidden},       {"init", tinylm::to_string(a.init)},
              {"init_scale", a.init_scale}};
}

Json to_json(const tinylm::OptimizerConfig& o) {
  return Json{{"kind", tinylm::to_string(o.kind)},
              {"lr", o.lr},
              {"beta1", o.beta1},
              {"beta2", o.beta2},
              {"eps", o.eps},
              {"momentum", o.momentum},
              {"weight_decay", o.weight_decay},
              {"warmup_steps", o.warmup_steps},
              {"total_steps", o.total_steps},
              {"min_lr_ratio", o.min_lr_ratio}};
}

Json to_json(const HyperParams& h) {
  return Json{{"arch", to_json(h.arch)},
              {"optimizer", to_json(h.optimizer)},
              {"noise", {{"enabled", h.noise.enabled}, {"scale", h.noise.scale}}},
              {"batch_size", h.batch_size},
              {"k", h.k},
              {"m", h.m},
              {"epochs", h.epochs},
              {"s_rand", h.s_rand},
              {"holdout", h.holdout},
              {"store_optimizer_state", h.store_optimizer_state}};
}

tinylm::ArchConfig arch_from_json(const Json& j) {
  constexpr const char* w = "arch";
  check_keys(j, {"vocab", "seq_len", "context", "embed_dim", "hidden", "init", "init_scale"}, w);
  tinylm::ArchConfig a;
  read(j, "vocab", a.vocab, w);
  read(j, "seq_len", a.seq_len, w);
  read(j, "context", a.context, w);
  read(j, "embed_dim", a.embed_dim, w);
  read(j, "hidden", a.hidden, w);
  std::string init = tinylm::to_string(a.init);
  read(j, "init", init, w);
  a.init = tinylm::init_scheme_from_string(init);
  read(j, "init_scale", a.init_scale, w);
  a.validate();
  return a;
}

tinylm::OptimizerConfig optimizer_from_json(const Json& j) {
  constexpr const char* w = "optimizer";
  check_keys(j,
             {"kind", "lr", "beta1", "beta2", "eps", "momentum", "weight_decay", "warmup_steps",
              "total_steps", "min_lr_ratio"},
             w);
  tinylm::OptimizerConfig o;
  std::string kind = tinylm::to_string(o.kind);
  read(j, "kind", kind, w);
  o.kind = tinylm::optimizer_kind_from_string(kind);
  read(j, "lr", o.lr, w);
  read(j, "beta1", o.beta1, w);
  read(j, "beta2", o.beta2, w);
  read(j, "eps", o.eps, w);
  read(j, "momentum", o.momentum, w);
  read(j, "weight_decay", o.weight_decay, w);
  read(j, "warmup_steps", o.warmup_steps, w);
  read(j, "total_steps", o.total_steps, w);
  read(j, "min_lr_ratio", o.min_lr_ratio, w);
  if (!(o.lr >= 0.0) || !(o.eps > 0.0) || o.beta1 < 0.0 || o.beta1 >= 1.0 || o.beta2 < 0.0 ||
      o.beta2 >= 1.0)
    throw ConfigError("optimizer: lr >= 0, eps > 0 and betas in [0, 1) required");
  return o;
}

HyperParams hyper_from_json(const Json& j) {
  constexpr const char* w = "hyperparams";
  check_keys(j,
             {"arch", "optimizer", "noise", "batch_size", "k", "m", "epochs", "s_rand", "holdout",
              "store_optimizer_state"},
             w);
  HyperParams h;
  if (j.contains("arch")) h.arch = arch_from_json(j.at("arch"));
  if (j.contains("optimizer")) h.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    check_keys(n, {"enabled", "scale", "seed"}, "noise");
    read(n, "enabled", h.noise.enabled, "noise");
    read(n, "scale", h.noise.scale, "noise");
    read(n, "seed", h.noise.seed, "noise");
  }
  read(j, "batch_size", h.batch_size, w);
  read(j, "k", h.k, w);
  read(j, "m", h.m, w);
  read(j, "epochs", h.epochs, w);
  read(j, "s_rand", h.s_rand, w);
  read(j, "holdout", h.holdout, w);
  read(j, "store_optimizer_state", h.store_optimizer_state, w);
  if (h.batch_size < 1) throw ConfigError("hyperparams: batch_size must be positive");
  return h;
}

}  // namespace potd
