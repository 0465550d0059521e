// fedeeg: stage-by-stage runner for the federated seizure-prediction simulation.
//
//   fedeeg generate   synthetic federation -> <out>/data
//   fedeeg preprocess synthetic raw recordings -> EEG pipeline -> <out>/segments
//   fedeeg normalize  <input> (default <out>/data) -> <out>/normalized + transcript
//   fedeeg train      <out>/normalized -> <out>/model.fdm + history
//   fedeeg evaluate   model + normalized test splits -> metrics
//   fedeeg sweep      every baseline and M over all repeats -> <out>/sweep
//
// FEDEEG_LOG=error|warn|info|debug sets stderr verbosity (default info).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedeeg/artifacts.hpp"
#include "fedeeg/error.hpp"
#include "fedeeg/experiment.hpp"

namespace fs = std::filesystem;
using namespace fedeeg;
using ojson = nlohmann::ordered_json;

namespace {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("FEDEEG_LOG");
    const std::string v = env ? env : "info";
    if (v == "error") return Level::Error;
    if (v == "warn") return Level::Warn;
    if (v == "debug") return Level::Debug;
    return Level::Info;
  }();
  return level;
}

void log(Level level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string strategy;
  std::optional<std::size_t> m;
  std::string input;
};

ExperimentConfig load_config(const Options& o) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("--config", "cannot open '" + o.config + "'");
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("--config", e.what());
    }
  }
  auto cfg = ExperimentConfig::from_json(j);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.strategy.empty() || o.m) {
    const std::string name = !o.strategy.empty() ? o.strategy : "random_subset";
    cfg.train.strategy = Strategy::parse(name, o.m.value_or(cfg.train.strategy.subset_size));
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> client_names(const ExperimentConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& p : cfg.federation.profiles) names.push_back(p.name);
  return names;
}

fs::path split_path(const fs::path& dir, const std::string& name, const char* split) {
  return dir / (name + "." + split + ".fds");
}

std::vector<fs::path> split_paths(const fs::path& dir, const std::vector<std::string>& names,
                                  std::initializer_list<const char*> splits) {
  std::vector<fs::path> out;
  for (const auto& n : names) {
    for (const char* s : splits) {
      const auto p = split_path(dir, n, s);
      if (!fs::exists(p)) {
        throw ConfigError("input", "missing '" + p.string() + "'; run the earlier stage first");
      }
      out.push_back(p);
    }
  }
  return out;
}

std::vector<ClientSplits> load_splits(const fs::path& dir, const std::vector<std::string>& names) {
  std::vector<ClientSplits> out;
  for (const auto& n : names) {
    out.push_back({read_dataset(split_path(dir, n, "train")), read_dataset(split_path(dir, n, "val")),
                   read_dataset(split_path(dir, n, "test"))});
  }
  return out;
}

ojson write_splits(const fs::path& dir, const std::vector<ClientSplits>& clients, const ojson& prov) {
  fs::create_directories(dir);
  ojson files = ojson::object();
  for (const auto& c : clients) {
    for (const auto& [split, data] : {std::pair{"train", &c.train}, std::pair{"val", &c.val},
                                      std::pair{"test", &c.test}}) {
      const auto p = split_path(dir, c.train.client_id, split);
      write_dataset(p, *data, prov);
      files[p.filename().string()] = content_hash(read_bytes(p));
    }
  }
  return files;
}

void write_json(const fs::path& path, const ojson& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string config_hash(const ExperimentConfig& cfg) { return content_hash(cfg.to_json().dump()); }

std::uint64_t stage_seed(const ExperimentConfig& cfg) { return repeat_seed(cfg, 0); }

// --- stages ----------------------------------------------------------------

void cmd_generate(const ExperimentConfig& cfg) {
  FederationSpec spec = cfg.federation;
  spec.seed = RunSeeds::derive(stage_seed(cfg)).federation;
  const auto fed = generate_federation(spec);
  const fs::path out = cfg.output_dir;
  const auto prov = provenance(cfg, config_hash(cfg));
  const auto files = write_splits(out / "data", fed, prov);
  write_json(out / "data" / "generate.json", {{"provenance", prov}, {"outputs", files}});
  for (const auto& c : fed) {
    log(Level::Info, c.train.client_id + ": " + std::to_string(c.train.size()) + "/" +
                         std::to_string(c.val.size()) + "/" + std::to_string(c.test.size()));
  }
}

void cmd_preprocess(const ExperimentConfig& cfg) {
  const auto& pp = cfg.preprocess;
  if (pp.policy.segment_samples() != cfg.federation.d) {
    throw ConfigError("preprocess.segment_s",
                      "segment_s * target_rate_hz must equal federation.d = " +
                          std::to_string(cfg.federation.d));
  }
  const fs::path out = cfg.output_dir;
  fs::create_directories(out / "raw");
  const auto fed_seed = RunSeeds::derive(stage_seed(cfg)).federation;
  std::vector<ClientSplits> clients;
  std::vector<fs::path> inputs;
  ojson stats = ojson::array();
  for (std::size_t k = 0; k < cfg.federation.profiles.size(); ++k) {
    const auto& profile = cfg.federation.profiles[k];
    const auto rec_path = out / "raw" / (profile.name + ".rec");
    const auto ann_path = out / "raw" / (profile.name + ".annotations.json");
    if (!fs::exists(rec_path) || !fs::exists(ann_path)) {
      log(Level::Info, "synthesizing raw recording for " + profile.name);
      auto [rec, ann] = synthesize_recording(profile, pp.plan, pp.policy, derive_seed(fed_seed, 100 + k));
      write_recording(rec_path, rec);
      write_annotations(ann_path, ann);
    }
    inputs.push_back(rec_path);
    inputs.push_back(ann_path);
    const auto raw = read_recording(rec_path);
    const auto ann = read_annotations(ann_path);
    const auto bipolar = derive_bipolar(raw, pp.channel_a, pp.channel_b);
    const auto filtered = lowpass_and_resample(bipolar, pp.policy);
    const auto timeline = label_timeline(filtered.duration_s(), ann, pp.policy);
    const auto seg = segment_and_balance(filtered, timeline, pp.policy);
    if (seg.preictal_count == 0) {
      log(Level::Warn, profile.name + ": no preictal segments");
    } else if (!seg.balanced) {
      log(Level::Warn, profile.name + ": preictal stride hit the overlap floor");
    }
    auto data = to_dataset(seg.segments, profile.name, cfg.federation.d);
    // Segments come out in time order; shuffle before the contiguous split.
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(fed_seed, 200 + k));
    rng.shuffle(std::span<std::size_t>(order));
    clients.push_back(split_80_10_10(data.select(order)));
    std::size_t truncated = 0;
    for (const auto& s : seg.segments) truncated += s.truncated_preictal;
    stats.push_back({{"client", profile.name},
                     {"interictal", seg.interictal_count},
                     {"preictal", seg.preictal_count},
                     {"preictal_stride", seg.preictal_stride},
                     {"balanced", seg.balanced},
                     {"truncated_preictal", truncated}});
    log(Level::Info, profile.name + ": " + std::to_string(seg.interictal_count) + " interictal, " +
                         std::to_string(seg.preictal_count) + " preictal, stride " +
                         std::to_string(seg.preictal_stride));
  }
  const auto prov = provenance(cfg, hash_files(inputs));
  const auto files = write_splits(out / "segments", clients, prov);
  write_json(out / "segments" / "preprocess.json",
             {{"provenance", prov}, {"segmentation", stats}, {"outputs", files}});
}

void cmd_normalize(const ExperimentConfig& cfg, const std::string& input) {
  const fs::path out = cfg.output_dir;
  const fs::path in = input.empty() ? out / "data" : fs::path(input);
  const auto names = client_names(cfg);
  const auto inputs = split_paths(in, names, {"train", "val", "test"});
  auto clients = load_splits(in, names);
  LoopbackTransport transport(true);
  const auto fed = normalize_federation(std::move(clients), cfg.normalization, cfg.codec,
                                        RunSeeds::derive(stage_seed(cfg)).keys, transport);
  const auto prov = provenance(cfg, hash_files(inputs));
  auto files = write_splits(out / "normalized", fed.clients, prov);

  std::string transcript;
  for (const auto& e : transport.log()) {
    auto line = ojson::parse(RoundMessage::decode(e.bytes).debug_json());
    line["to"] = e.to;
    transcript += line.dump() + "\n";
  }
  write_text(out / "normalized" / "transcript.jsonl", transcript);
  files["transcript.jsonl"] = content_hash(transcript);

  ojson maps = ojson::array();
  for (std::size_t k = 0; k < names.size(); ++k) {
    maps.push_back({{"client", names[k]},
                    {"scale", fed.normalization.maps[k].scale},
                    {"offset", fed.normalization.maps[k].offset}});
  }
  ojson result{{"mode", to_string(cfg.normalization)},
               {"centering_only", fed.normalization.centering_only},
               {"maps", maps}};
  if (fed.normalization.stats) {
    result["mu"] = fed.normalization.stats->mu;
    result["sigma"] = fed.normalization.stats->sigma;
    result["n_total"] = fed.normalization.stats->n_total;
  }
  if (fed.normalization.centering_only) log(Level::Warn, "pooled variance is zero; centered only");
  write_json(out / "normalized" / "normalize.json",
             {{"provenance", prov}, {"normalization", result}, {"outputs", files}});
  log(Level::Info, "normalized " + std::to_string(names.size()) + " clients, " +
                       std::to_string(transport.log().size()) + " protocol messages");
}

void cmd_train(const ExperimentConfig& cfg) {
  const fs::path out = cfg.output_dir;
  const fs::path in = out / "normalized";
  const auto names = client_names(cfg);
  const auto inputs = split_paths(in, names, {"train", "val"});
  PreparedFederation fed;
  fed.clients = load_splits(in, names);
  std::vector<ClientDataset> val;
  for (const auto& c : fed.clients) val.push_back(c.val);

  const auto run_seed = stage_seed(cfg);
  const Mlp model(cfg.model_config(RunSeeds::derive(run_seed).model));
  auto val_row = [&](std::size_t round, const ParamVector& w) {
    const auto r = evaluate_global(model, w, val);
    return std::to_string(round) + "," + std::to_string(r.pooled.accuracy) + "," +
           std::to_string(r.macro.accuracy) + "\n";
  };
  std::string history = val_row(0, model.init_params());
  TrainOptions opts;
  opts.keep_params = false;
  opts.on_round = [&](std::size_t round, const ParamVector& w) {
    history += val_row(round, w);
    log(Level::Debug, "round " + std::to_string(round));
    return std::map<std::string, double>{};
  };
  LoopbackTransport transport;
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = run_strategy(fed, cfg, cfg.train.strategy, run_seed, transport, opts);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto prov = provenance(cfg, hash_files(inputs));
  write_model(out / "model.fdm", model.config(), run.training.params, prov);
  write_text(out / "history.csv", "# config: " + prov["config"].dump() + "\n# inputs_sha256: " +
                                       prov["inputs_sha256"].get<std::string>() +
                                       "\nround,val_pooled_accuracy,val_macro_accuracy\n" + history);
  write_json(out / "train.json", {{"provenance", prov},
                                   {"strategy", cfg.train.strategy.name()},
                                   {"subset_size", cfg.train.strategy.subset_size},
                                   {"rounds", cfg.train.rounds},
                                   {"rejected_messages", run.training.rejected},
                                   {"model_sha256", content_hash(read_bytes(out / "model.fdm"))}});
  for (const auto& r : run.training.rejected) log(Level::Warn, "discarded message: " + r);
  log(Level::Info, "trained " + cfg.train.strategy.name() + " for " +
                       std::to_string(cfg.train.rounds) + " rounds in " + std::to_string(secs) + " s");
}

void cmd_evaluate(const ExperimentConfig& cfg) {
  const fs::path out = cfg.output_dir;
  const auto model_path = out / "model.fdm";
  if (!fs::exists(model_path)) throw ConfigError("input", "missing '" + model_path.string() + "'; run train first");
  auto inputs = split_paths(out / "normalized", client_names(cfg), {"test"});
  inputs.insert(inputs.begin(), model_path);
  const auto [mcfg, params] = read_model(model_path);
  std::vector<ClientDataset> tests;
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    tests.push_back(read_dataset(inputs[i]));
    if (tests.back().dim != mcfg.input_dim) {
      throw DimensionError("test split '" + inputs[i].string() + "' does not match the model width");
    }
  }
  const auto report = evaluate_global(Mlp(mcfg), params, tests);
  const auto prov = provenance(cfg, hash_files(inputs));
  write_json(out / "metrics.json", {{"provenance", prov}, {"report", report_json(report)}});
  const auto rows = metric_rows("0", cfg.train.strategy, report);
  write_text(out / "metrics.csv", metrics_csv(rows, prov));
  std::cout << "pooled accuracy " << report.pooled.accuracy << ", macro accuracy "
            << report.macro.accuracy << "\n";
}

void cmd_sweep(const ExperimentConfig& cfg) {
  const fs::path out = fs::path(cfg.output_dir) / "sweep";
  const fs::path partial = fs::path(cfg.output_dir) / "sweep.partial";
  // A failed sweep must not leave an old summary behind.
  fs::remove_all(out);
  fs::remove_all(partial);

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = run_sweep(cfg);
  log(Level::Info, "sweep finished in " +
                       std::to_string(std::chrono::duration<double>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count()) +
                       " s");
  std::vector<LocalBaseline> locals;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    LoopbackTransport t;
    const auto fed = prepare_federation(cfg, repeat_seed(cfg, r), t);
    locals.push_back(run_local_baselines(fed, cfg, repeat_seed(cfg, r)));
  }

  const auto prov = provenance(cfg, config_hash(cfg));
  fs::create_directories(partial / "reports");
  std::vector<MetricRow> rows;
  for (const auto& row : result.rows) {
    for (std::size_t r = 0; r < row.runs.size(); ++r) {
      const auto run_rows = metric_rows(std::to_string(r), row.strategy, row.runs[r]);
      rows.insert(rows.end(), run_rows.begin(), run_rows.end());
      std::string stem = row.strategy.kind == Strategy::Kind::RandomSubset
                             ? "m" + std::to_string(row.strategy.subset_size)
                             : row.label;
      write_json(partial / "reports" / (stem + "_r" + std::to_string(r) + ".json"),
                 {{"provenance", prov},
                  {"run_id", r},
                  {"label", row.label},
                  {"strategy", row.strategy.name()},
                  {"report", report_json(row.runs[r])}});
    }
  }
  write_text(partial / "sweep.csv", metrics_csv(rows, prov));

  std::string local = "# config: " + prov["config"].dump() + "\n# inputs_sha256: " +
                      prov["inputs_sha256"].get<std::string>() +
                      "\nrun_id,trained_on,tested_on,accuracy\n";
  for (std::size_t r = 0; r < locals.size(); ++r) {
    const auto& lb = locals[r];
    for (std::size_t a = 0; a < lb.clients.size(); ++a) {
      for (std::size_t b = 0; b < lb.clients.size(); ++b) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", lb.accuracy[a][b]);
        local += std::to_string(r) + "," + lb.clients[a] + "," + lb.clients[b] + "," + buf + "\n";
      }
    }
  }
  write_text(partial / "local_baselines.csv", local);
  const auto table = summary_table(result, prov);
  write_text(partial / "summary.md", table);
  fs::rename(partial, out);
  std::cout << table.substr(0, table.find("inputs_sha256"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated EEG seizure-prediction simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON experiment config (defaults when omitted)");
  app.add_option("--seed", o.seed, "Override the config seed");
  app.add_option("--out", o.out, "Output directory (overrides output_dir)");
  app.add_option("--strategy", o.strategy, "unweighted | weighted | random_subset");
  app.add_option("--m", o.m, "Subset size M for random_subset");
  auto* gen = app.add_subcommand("generate", "Generate the synthetic federation");
  auto* pre = app.add_subcommand("preprocess", "Synthesize raw recordings and segment them");
  auto* norm = app.add_subcommand("normalize", "Run the secure normalization protocol");
  norm->add_option("--input", o.input, "Directory with <client>.{train,val,test}.fds");
  auto* train = app.add_subcommand("train", "Federated training on the normalized splits");
  auto* eval = app.add_subcommand("evaluate", "Evaluate the trained model on the test splits");
  auto* sweep = app.add_subcommand("sweep", "Baselines and the M grid over all repeats");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto cfg = load_config(o);
    if (gen->parsed()) cmd_generate(cfg);
    if (pre->parsed()) cmd_preprocess(cfg);
    if (norm->parsed()) cmd_normalize(cfg, o.input);
    if (train->parsed()) cmd_train(cfg);
    if (eval->parsed()) cmd_evaluate(cfg);
    if (sweep->parsed()) cmd_sweep(cfg);
  } catch (const ConfigError& e) {
    log(Level::Error, std::string("config error: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log(Level::Error, e.what());
    return 1;
  }
  return 0;
}
