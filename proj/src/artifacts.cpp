#include "fedeeg/artifacts.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <sodium.h>

#include "fedeeg/bytes.hpp"
#include "fedeeg/error.hpp"

namespace fedeeg {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr char kDatasetMagic[8] = {'F', 'E', 'D', 'E', 'E', 'G', 'D', '1'};
constexpr char kModelMagic[8] = {'F', 'E', 'D', 'E', 'E', 'G', 'M', '1'};

void put_header(ByteWriter& w, const char (&magic)[8], const ojson& header) {
  for (char c : magic) w.u8(static_cast<std::uint8_t>(c));
  const std::string h = header.dump();
  w.u32(static_cast<std::uint32_t>(h.size()));
  w.str(h);
}

json take_header(ByteReader& r, const char (&magic)[8], const std::filesystem::path& path,
                 const char* what) {
  for (char c : magic) {
    if (r.remaining() == 0 || r.u8() != static_cast<std::uint8_t>(c)) {
      throw ConfigError("path", "'" + path.string() + "' is not a " + what + " file");
    }
  }
  const auto hb = r.bytes(r.u32());
  return json::parse(hb.begin(), hb.end());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string cell(const MeanStd& v) {
  if (std::isnan(v.mean)) return "n/a";
  return format_mean_std(v);
}

ojson triple_json(const MetricTriple& t) {
  auto num = [](double v) { return std::isnan(v) ? ojson(nullptr) : ojson(v); };
  return {{"accuracy", num(t.accuracy)}, {"f1", num(t.f1)}, {"auroc", num(t.auroc)}};
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("path", "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("path", "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("path", "write failed for '" + path.string() + "'");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string content_hash(std::span<const std::uint8_t> bytes) {
  if (sodium_init() < 0) throw Error("libsodium initialization failed");
  const std::string prefix = "blob " + std::to_string(bytes.size()) + '\0';
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(prefix.data()),
                            prefix.size());
  crypto_hash_sha256_update(&st, bytes.data(), bytes.size());
  unsigned char out[crypto_hash_sha256_BYTES];
  crypto_hash_sha256_final(&st, out);
  char hex[2 * crypto_hash_sha256_BYTES + 1];
  sodium_bin2hex(hex, sizeof hex, out, sizeof out);
  return hex;
}

std::string content_hash(const std::string& text) {
  return content_hash(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string hash_files(std::span<const std::filesystem::path> paths) {
  std::string listing;
  for (const auto& p : paths) {
    listing += p.filename().string() + " " + content_hash(read_bytes(p)) + "\n";
  }
  return content_hash(listing);
}

ojson provenance(const ExperimentConfig& cfg, const std::string& inputs_hash) {
  return {{"config", cfg.to_json()}, {"inputs_sha256", inputs_hash}};
}

void write_dataset(const std::filesystem::path& path, const ClientDataset& data,
                   const ojson& prov) {
  data.validate();
  ByteWriter w;
  put_header(w, kDatasetMagic,
             {{"client_id", data.client_id},
              {"dim", data.dim},
              {"rows", data.size()},
              {"provenance", prov}});
  w.bytes(data.labels);
  for (double v : data.samples) w.f64(v);
  write_bytes(path, w.buffer());
}

ClientDataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader r(bytes);
  const auto header = take_header(r, kDatasetMagic, path, "dataset");
  ClientDataset d;
  d.client_id = header.at("client_id").get<std::string>();
  d.dim = header.at("dim").get<std::size_t>();
  const auto rows = header.at("rows").get<std::size_t>();
  const auto labels = r.bytes(rows);
  d.labels.assign(labels.begin(), labels.end());
  d.samples.resize(rows * d.dim);
  for (double& v : d.samples) v = r.f64();
  if (!r.done()) throw ConfigError("path", "trailing bytes in '" + path.string() + "'");
  d.validate();
  return d;
}

void write_model(const std::filesystem::path& path, const ModelConfig& config,
                 const ParamVector& params, const ojson& prov) {
  ByteWriter w;
  put_header(w, kModelMagic,
             {{"model",
               {{"input_dim", config.input_dim},
                {"hidden_dims", config.hidden_dims},
                {"seed", config.seed},
                {"init_scale", config.init_scale ? ojson(*config.init_scale) : ojson(nullptr)}}},
              {"provenance", prov}});
  w.bytes(params.serialize());
  write_bytes(path, w.buffer());
}

std::pair<ModelConfig, ParamVector> read_model(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader r(bytes);
  const auto header = take_header(r, kModelMagic, path, "model");
  const auto& m = header.at("model");
  ModelConfig cfg;
  cfg.input_dim = m.at("input_dim").get<std::size_t>();
  cfg.hidden_dims = m.at("hidden_dims").get<std::vector<std::size_t>>();
  cfg.seed = m.at("seed").get<std::uint64_t>();
  if (!m.at("init_scale").is_null()) cfg.init_scale = m.at("init_scale").get<double>();
  auto params = ParamVector::deserialize(r.bytes(r.remaining()));
  if (params.size() != Mlp(cfg).param_count()) {
    throw DimensionError("model file parameter count does not match its layout");
  }
  return {cfg, std::move(params)};
}

std::vector<MetricRow> metric_rows(const std::string& run_id, const Strategy& strategy,
                                   const MetricsReport& report) {
  const std::string m = strategy.kind == Strategy::Kind::RandomSubset
                            ? std::to_string(strategy.subset_size)
                            : "";
  std::vector<MetricRow> rows;
  auto add = [&](const std::string& client, const MetricTriple& t) {
    rows.push_back({run_id, strategy.name(), m, client, "accuracy", t.accuracy});
    rows.push_back({run_id, strategy.name(), m, client, "f1", t.f1});
    rows.push_back({run_id, strategy.name(), m, client, "auroc", t.auroc});
  };
  for (const auto& c : report.per_client) add(c.client, c.metrics);
  add("pooled", report.pooled);
  add("macro", report.macro);
  return rows;
}

std::string metrics_csv(std::span<const MetricRow> rows, const ojson& prov) {
  std::string out = "# config: " + prov.at("config").dump() + "\n";
  out += "# inputs_sha256: " + prov.at("inputs_sha256").get<std::string>() + "\n";
  out += "run_id,strategy,M,client,metric,value\n";
  for (const auto& r : rows) {
    out += r.run_id + "," + r.strategy + "," + r.m + "," + r.client + "," + r.metric + "," +
           fmt(r.value) + "\n";
  }
  return out;
}

ojson report_json(const MetricsReport& report) {
  ojson clients = ojson::array();
  for (const auto& c : report.per_client) {
    clients.push_back(
        {{"client", c.client}, {"test_size", c.test_size}, {"metrics", triple_json(c.metrics)}});
  }
  return {{"per_client", clients},
          {"pooled", triple_json(report.pooled)},
          {"macro", triple_json(report.macro)}};
}

std::string summary_table(const SweepResult& result, const ojson& prov) {
  std::string out;
  auto table = [&](const char* title, auto pick) {
    out += std::string("## ") + title + "\n\n";
    out += "| Aggregation | Accuracy (%) | F1-Score (%) | AUROC (%) |\n";
    out += "|---|---|---|---|\n";
    for (const auto& row : result.rows) {
      const TripleStats& s = pick(row.summary);
      out += "| " + row.label + " | " + cell(s.accuracy) + " | " + cell(s.f1) + " | " +
             cell(s.auroc) + " |\n";
    }
    out += "\n";
  };
  const std::size_t runs = result.rows.empty() ? 0 : result.rows.front().summary.runs;
  out += "# Sweep summary\n\nmean (std) over " + std::to_string(runs) + " runs\n\n";
  table("Macro average", [](const RunSummary& s) -> const TripleStats& { return s.macro; });
  table("Pooled test set", [](const RunSummary& s) -> const TripleStats& { return s.pooled; });
  out += "inputs_sha256: " + prov.at("inputs_sha256").get<std::string>() + "\n\n";
  out += "```json\n" + prov.at("config").dump(2) + "\n```\n";
  return out;
}

}  // namespace fedeeg
