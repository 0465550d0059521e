#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedeeg/dataset.hpp"
#include "fedeeg/evaluation.hpp"
#include "fedeeg/experiment.hpp"
#include "fedeeg/model.hpp"

namespace fedeeg {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

// Git-style content hash: SHA-256 of "blob <len>\0" followed by the bytes, hex.
std::string content_hash(std::span<const std::uint8_t> bytes);
std::string content_hash(const std::string& text);
// Hash over the (file name, content hash) list, in the given order.
std::string hash_files(std::span<const std::filesystem::path> paths);

// Embedded in every output: the resolved config and the hash of the inputs.
nlohmann::ordered_json provenance(const ExperimentConfig& cfg, const std::string& inputs_hash);

// Dataset file: "FEDEEGD1" | u32 header length | JSON header | labels (u8 x rows)
// | samples (f64 LE, row-major). The header holds client_id, dim, rows and
// provenance.
void write_dataset(const std::filesystem::path& path, const ClientDataset& data,
                   const nlohmann::ordered_json& prov);
ClientDataset read_dataset(const std::filesystem::path& path);

// Model file: "FEDEEGM1" | u32 header length | JSON header | ParamVector bytes.
// The header holds the model config and provenance.
void write_model(const std::filesystem::path& path, const ModelConfig& config,
                 const ParamVector& params, const nlohmann::ordered_json& prov);
std::pair<ModelConfig, ParamVector> read_model(const std::filesystem::path& path);

struct MetricRow {
  std::string run_id;
  std::string strategy;
  std::string m;  // empty unless random_subset
  std::string client;  // a client id, "pooled" or "macro"
  std::string metric;  // accuracy, f1, auroc
  double value = 0.0;
};

std::vector<MetricRow> metric_rows(const std::string& run_id, const Strategy& strategy,
                                   const MetricsReport& report);

// "# "-prefixed provenance lines, then run_id,strategy,M,client,metric,value
// with values printed as %.17g.
std::string metrics_csv(std::span<const MetricRow> rows, const nlohmann::ordered_json& prov);

nlohmann::ordered_json report_json(const MetricsReport& report);

// Macro mean (std) table over the sweep rows, then the pooled table.
std::string summary_table(const SweepResult& result, const nlohmann::ordered_json& prov);

}  // namespace fedeeg
