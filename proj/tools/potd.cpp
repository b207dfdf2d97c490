// potd: train, verify, attack and report on training transcripts.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "potd/attacks.hpp"
#include "potd/crypto.hpp"
#include "potd/errors.hpp"
#include "potd/json_io.hpp"
#include "potd/memorization.hpp"
#include "potd/prover.hpp"
#include "potd/verifier.hpp"

namespace fs = std::filesystem;
using namespace potd;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitUsage = 64;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path work_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("POTD_WORKDIR"); env && *env) return env;
  return fs::current_path();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

// Shortest round-trip formatting keeps CSV output byte-reproducible.
std::string num(double x) {
  if (!std::isfinite(x)) return "";
  return Json(x).dump();
}

CorpusSpec corpus_from_json(const Json& j) {
  check_keys(j, {"n", "vocab", "seq_len", "styles", "branching", "skew", "language_seed",
                 "sample_seed"},
             "data.generate");
  CorpusSpec c;
  try {
    c.vocab = j.value("vocab", c.vocab);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.styles = j.value("styles", c.styles);
    c.branching = j.value("branching", c.branching);
    c.skew = j.value("skew", c.skew);
    c.language_seed = j.value("language_seed", c.language_seed);
    c.sample_seed = j.value("sample_seed", c.sample_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("data.generate: ") + e.what());
  }
  return c;
}

Dataset dataset_from_config(const Json& data, const fs::path& base) {
  check_keys(data, {"path", "generate"}, "data");
  if (data.contains("path")) return load_dataset(resolve(base, data.at("path").get<std::string>()));
  if (!data.contains("generate")) throw ConfigError("data: need either \"path\" or \"generate\"");
  const auto& g = data.at("generate");
  if (!g.contains("n")) throw ConfigError("data.generate: \"n\" is required");
  return generate_corpus(corpus_from_json(g), g.at("n").get<std::size_t>());
}

HyperParams training_from_config(Json training, std::size_t n) {
  bool auto_steps = false;
  if (training.contains("optimizer")) {
    auto& o = training["optimizer"];
    if (o.contains("total_steps") && o["total_steps"].is_string()) {
      if (o["total_steps"] != "auto") throw ConfigError("optimizer.total_steps: number or \"auto\"");
      auto_steps = true;
      o.erase("total_steps");
    }
  }
  auto h = hyper_from_json(training);
  if (auto_steps) h.optimizer.total_steps = h.planned_steps(n);
  return h;
}

verifier::VerifierConfig verifier_from_file(const std::string& path) {
  if (path.empty()) return {};
  const auto j = read_json(path);
  return verifier::config_from_json(j.contains("verifier") ? j.at("verifier") : j);
}

Transcript load(const fs::path& dir) { return load_transcript(dir); }

// ---- train ---------------------------------------------------------------

int cmd_train(const fs::path& wd, const std::string& config, const std::string& out_flag) {
  const auto doc = read_json(resolve(wd, config));
  check_keys(doc, {"data", "training", "verifier", "output"}, "config");
  if (!doc.contains("data")) throw ConfigError("config: missing \"data\" section");
  const auto data = dataset_from_config(doc.at("data"), wd);
  const auto hyper = training_from_config(doc.value("training", Json::object()), data.size());
  if (doc.contains("verifier")) verifier::config_from_json(doc.at("verifier"));

  fs::path out = !out_flag.empty()        ? resolve(wd, out_flag)
                 : doc.contains("output") ? resolve(wd, doc.at("output").get<std::string>())
                                          : wd / "transcript";
  prover::RunHooks hooks;
  hooks.on_segment = [&](std::size_t i, double loss) {
    std::cerr << "segment " << i << "/" << hyper.resolved(data.size()).m << " loss " << loss << '\n';
  };
  const auto t = prover::train_run(data, hyper, hooks);
  save_transcript(t, out);
  std::cout << "transcript: " << out.string() << '\n'
            << "transcript digest: " << to_hex(t.digest()) << '\n'
            << "final weights digest: " << to_hex(t.final_digest) << '\n';
  return 0;
}

// ---- reports -------------------------------------------------------------

std::string heatmap_csv(const memorization::MemorizationMatrix& h) {
  std::string s = "segment";
  for (long o = -long(h.beta); o <= long(h.beta); ++o) s += "," + std::to_string(o);
  s += '\n';
  for (const auto& row : h.rows) {
    s += std::to_string(row.segment);
    for (const auto& c : row.cells) s += "," + (c.checkpoint < 0 ? std::string() : num(c.mean_m));
    s += '\n';
  }
  return s;
}

Json heatmap_json(const memorization::MemorizationMatrix& h) {
  Json rows = Json::array();
  for (const auto& row : h.rows) {
    Json cells = Json::array();
    for (const auto& c : row.cells)
      cells.push_back({{"checkpoint", c.checkpoint},
                       {"mean_m", c.checkpoint < 0 ? Json(nullptr) : Json(c.mean_m)},
                       {"mean_dm", std::isfinite(c.mean_dm) ? Json(c.mean_dm) : Json(nullptr)}});
    rows.push_back({{"segment", row.segment},
                    {"ids", row.ids},
                    {"argmax", h.row_argmax(row.segment)},
                    {"cells", cells}});
  }
  return {{"alpha", h.alpha},        {"beta", h.beta},
          {"m", h.m},                {"unreliable", h.unreliable},
          {"val_mean", h.val_mean},  {"diagonal_fraction", h.diagonal_fraction()},
          {"rows", rows}};
}

struct ReportOptions {
  std::string kind;
  double alpha = 0.25;
  long beta = -1;
  double p = 0.1;
  std::size_t depth = 3;
  std::uint64_t seed = 0;
  std::string format = "csv";
  std::string out;
};

int cmd_report(const fs::path& wd, const std::string& dir, const ReportOptions& o) {
  const auto t = load(resolve(wd, dir));
  memorization::LossCache cache(t);
  const bool json = o.format == "json";
  std::string text;
  if (o.kind == "heatmap") {
    const std::size_t beta = o.beta < 0 ? t.m() : std::size_t(o.beta);
    const auto h = memorization::heatmap(cache, o.alpha, beta, o.seed);
    text = json ? heatmap_json(h).dump(2) + "\n" : heatmap_csv(h);
  } else if (o.kind == "deltas") {
    Json rows = Json::array();
    text = "segment,delta\n";
    for (std::size_t i = 1; i <= t.m(); ++i) {
      const double d = tinylm::weight_distance(t.weights(i), t.weights(i - 1));
      text += std::to_string(i) + "," + num(d) + "\n";
      rows.push_back({{"segment", i}, {"delta", d}});
    }
    if (json) text = rows.dump(2) + "\n";
  } else if (o.kind == "val-loss") {
    const auto key = memorization::audit_key(t, o.seed);
    const auto val = memorization::validation_sample(key, t.order().validation(), o.alpha);
    Json rows = Json::array();
    text = "checkpoint,val_loss\n";
    for (std::size_t j = 0; j <= t.m(); ++j) {
      const double l = cache.val_summary(j, val).mean;
      text += std::to_string(j) + "," + num(l) + "\n";
      rows.push_back({{"checkpoint", j}, {"val_loss", l}});
    }
    if (json) text = rows.dump(2) + "\n";
  } else if (o.kind == "lambda") {
    const auto q = memorization::quantile_report(cache, o.alpha, o.p, o.seed);
    Json rows = Json::array();
    text = "segment,fbq_train,fbq_val,lambda\n";
    for (const auto& s : q.segments) {
      text += std::to_string(s.segment) + "," + num(s.fbq_train) + "," + num(s.fbq_val) + "," +
              (s.lambda ? num(*s.lambda) : "") + "\n";
      rows.push_back({{"segment", s.segment},
                      {"fbq_train", s.fbq_train},
                      {"fbq_val", s.fbq_val},
                      {"lambda", s.lambda ? Json(*s.lambda) : Json(nullptr)}});
    }
    if (json) text = Json{{"p", q.p}, {"segments", rows}}.dump(2) + "\n";
  } else if (o.kind == "long-range") {
    Json rows = Json::array();
    text = "checkpoint,offset,segment,mean_m,val_mean_m\n";
    for (std::size_t i = 2; i <= t.m(); ++i) {
      const std::size_t depth = std::min(o.depth, i - 1);
      const auto lr = memorization::long_range_memorization(cache, i, depth, o.alpha, o.seed);
      double val_mean = 0.0;
      for (double v : lr.val_m) val_mean += v / double(lr.val_m.size());
      for (std::size_t d = 1; d <= depth; ++d) {
        text += std::to_string(i) + "," + std::to_string(d) + "," + std::to_string(i - d) + "," +
                num(lr.mean_m[d - 1]) + "," + num(val_mean) + "\n";
        rows.push_back({{"checkpoint", i},
                        {"offset", d},
                        {"segment", i - d},
                        {"mean_m", lr.mean_m[d - 1]},
                        {"val_mean_m", val_mean}});
      }
    }
    if (json) text = rows.dump(2) + "\n";
  } else {
    throw UsageError("unknown report kind '" + o.kind + "'");
  }
  if (o.out.empty())
    std::cout << text;
  else
    write_text(resolve(wd, o.out), text);
  return 0;
}

// ---- verify --------------------------------------------------------------

int exit_status(verifier::Verdict v) {
  switch (v) {
    case verifier::Verdict::accept: return 0;
    case verifier::Verdict::suspicious: return 2;
    case verifier::Verdict::reject: return 3;
  }
  return 3;
}

std::string segments_csv(const verifier::VerdictReport& r) {
  std::string s =
      "segment,order_t,order_n,order_p,fbq_train,fbq_val,lambda,smoothness,delta,delta_score,"
      "trend_score,long_range_p,flags\n";
  for (const auto& g : r.segments) {
    std::string flags;
    for (const auto& f : g.flags) flags += (flags.empty() ? "" : "+") + f;
    s += std::to_string(g.segment) + "," + std::to_string(g.order.t) + "," +
         std::to_string(g.order.n_t) + "," + num(g.order.p_value) + "," + num(g.fbq_train) + "," +
         num(g.fbq_val) + "," + (g.lambda ? num(*g.lambda) : "") + "," + num(g.smoothness) + "," +
         num(g.delta) + "," + num(g.delta_score) + "," + num(g.trend_score) + "," +
         (g.long_range_p ? num(*g.long_range_p) : "") + "," + flags + "\n";
  }
  return s;
}

int cmd_verify(const fs::path& wd, const std::string& dir, const std::string& config,
               std::uint64_t seed, const std::string& out_flag, bool with_heatmap) {
  const auto cfg = verifier_from_file(config.empty() ? "" : resolve(wd, config).string());
  Transcript t;
  try {
    t = load(resolve(wd, dir));
  } catch (const IoError& e) {
    std::cerr << "potd: unreadable transcript: " << e.what() << '\n';
    return kExitIo;
  } catch (const IntegrityError& e) {
    std::cerr << "potd: unreadable transcript: " << e.what() << '\n';
    return kExitIo;
  }
  const auto report = verifier::verify(t, cfg, seed);
  const fs::path out = out_flag.empty() ? resolve(wd, dir) / "audit" : resolve(wd, out_flag);
  fs::create_directories(out);
  auto j = report.to_json();
  j.erase("seconds");
  write_text(out / "report.json", j.dump(2) + "\n");
  write_text(out / "segments.csv", segments_csv(report));
  if (with_heatmap && report.structure.pass)
    write_text(out / "heatmap.csv", heatmap_csv(memorization::heatmap(t, cfg.alpha, t.m(), seed)));
  std::cout << report.summary();
  return exit_status(report.verdict);
}

// ---- attack --------------------------------------------------------------

struct AttackOptions {
  std::string kind;
  std::string base;
  std::string out;
  std::string donor;
  std::string extra;
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t steps = 0;
  double fraction = 0.5;
  double kappa = 0.5;
  std::uint64_t seed = 0;
  bool calibrate = true;
};

int cmd_attack(const fs::path& wd, const AttackOptions& o) {
  const auto a = load(resolve(wd, o.base));
  auto need = [](bool ok, const char* what) {
    if (!ok) throw UsageError(what);
  };
  attacks::AttackResult r;
  if (o.kind == "glue") {
    need(!o.donor.empty(), "glue needs --donor");
    r = attacks::glue(a, load(resolve(wd, o.donor)), o.i, o.j);
  } else if (o.kind == "interpolate") {
    need(!o.extra.empty(), "interpolate needs --extra (undisclosed dataset)");
    const std::size_t steps = o.steps ? o.steps : a.m() - o.i;
    const auto target = attacks::continuation_target(a, o.i, load_dataset(resolve(wd, o.extra)));
    r = attacks::interpolate(a, o.i, target, steps, o.calibrate);
  } else if (o.kind == "add") {
    need(!o.extra.empty(), "add needs --extra (dataset of added points)");
    r = attacks::add_data(a, o.i, load_dataset(resolve(wd, o.extra)), o.fraction);
  } else if (o.kind == "subtract") {
    r = attacks::subtract_data(a, o.i, o.kappa, o.seed);
  } else {
    throw UsageError("unknown attack kind '" + o.kind + "'");
  }
  const auto out = resolve(wd, o.out);
  save_transcript(r.transcript, out);
  attacks::write_sidecar(r.provenance, out);
  std::cout << "transcript: " << out.string() << '\n'
            << "transcript digest: " << to_hex(r.transcript.digest()) << '\n';
  return 0;
}

// ---- gen-data ------------------------------------------------------------

int cmd_gen_data(const fs::path& wd, const CorpusSpec& spec, std::size_t n, const std::string& out) {
  const auto d = generate_corpus(spec, n);
  save_dataset(d, resolve(wd, out));
  std::cout << "dataset digest: " << to_hex(d.digest()) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proof-of-training-data transcripts: train, verify, attack, report"};
  app.require_subcommand(1);
  std::string wd_flag;
  app.add_option("--workdir", wd_flag, "Base for relative paths (default $POTD_WORKDIR, else cwd)");

  std::string config, out, dir;
  auto* train = app.add_subcommand("train", "Train and write a transcript directory");
  train->add_option("config", config, "Config document (data, training, verifier, output)")
      ->required();
  train->add_option("-o,--out", out, "Transcript directory (overrides config output)");

  std::uint64_t seed = 0;
  bool no_heatmap = false;
  auto* verify = app.add_subcommand("verify", "Audit a transcript; exit 0 accept, 2 suspicious, 3 reject");
  verify->add_option("transcript", dir, "Transcript directory")->required();
  verify->add_option("-c,--config", config, "Config document or verifier section");
  verify->add_option("--seed", seed, "Verifier's private audit seed");
  verify->add_option("-o,--out", out, "Report directory (default <transcript>/audit)");
  verify->add_flag("--no-heatmap", no_heatmap, "Skip heatmap.csv");

  ReportOptions ro;
  auto* report = app.add_subcommand("report", "Emit plot-ready CSV/JSON series");
  report->add_option("transcript", dir, "Transcript directory")->required();
  report->add_option("-k,--kind", ro.kind, "heatmap | deltas | val-loss | lambda | long-range")
      ->required();
  report->add_option("--alpha", ro.alpha, "Sampling fraction");
  report->add_option("--beta", ro.beta, "Heatmap window (default m)");
  report->add_option("--p", ro.p, "Quantile for lambda");
  report->add_option("--depth", ro.depth, "Long-range depth");
  report->add_option("--seed", ro.seed, "Sampling seed");
  report->add_option("--format", ro.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  report->add_option("-o,--out", ro.out, "Output file (default stdout)");

  AttackOptions ao;
  auto* attack = app.add_subcommand("attack", "Forge a transcript (writes attack.json sidecar)");
  attack->add_option("-k,--kind", ao.kind, "glue | interpolate | add | subtract")->required();
  attack->add_option("base", ao.base, "Honest transcript directory")->required();
  attack->add_option("-o,--out", ao.out, "Forged transcript directory")->required();
  attack->add_option("--donor", ao.donor, "glue: transcript supplying the tail");
  attack->add_option("--extra", ao.extra, "interpolate/add: dataset file");
  attack->add_option("--i", ao.i, "Checkpoint or segment index")->required();
  attack->add_option("--j", ao.j, "glue: donor resume checkpoint");
  attack->add_option("--steps", ao.steps, "interpolate: forged checkpoints (default m - i)");
  attack->add_option("--fraction", ao.fraction, "add: extra points per segment point");
  attack->add_option("--kappa", ao.kappa, "subtract: dropped fraction");
  attack->add_option("--seed", ao.seed, "subtract: selection seed");
  attack->add_option("--calibrate", ao.calibrate, "interpolate: match a smooth val-loss curve");

  CorpusSpec spec;
  std::size_t n = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus file");
  gen->add_option("-n", n, "Number of sequences")->required();
  gen->add_option("-o,--out", out, "Dataset file")->required();
  gen->add_option("--vocab", spec.vocab);
  gen->add_option("--seq-len", spec.seq_len);
  gen->add_option("--styles", spec.styles);
  gen->add_option("--branching", spec.branching);
  gen->add_option("--skew", spec.skew);
  gen->add_option("--language-seed", spec.language_seed);
  gen->add_option("--sample-seed", spec.sample_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    const auto wd = work_dir(wd_flag);
    if (*train) return cmd_train(wd, config, out);
    if (*verify) return cmd_verify(wd, dir, config, seed, out, !no_heatmap);
    if (*report) return cmd_report(wd, dir, ro);
    if (*attack) return cmd_attack(wd, ao);
    if (*gen) return cmd_gen_data(wd, spec, n, out);
  } catch (const UsageError& e) {
    std::cerr << "potd: " << e.what() << "\nrun 'potd --help' for usage\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "potd: configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "potd: invalid arguments: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IntegrityError& e) {
    std::cerr << "potd: integrity failure: " << e.what() << '\n';
    return kExitIo;
  } catch (const TrainingError& e) {
    std::cerr << "potd: training failed: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "potd: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "potd: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
