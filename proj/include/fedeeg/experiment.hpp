#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedeeg/eeg_pipeline.hpp"
#include "fedeeg/evaluation.hpp"
#include "fedeeg/fl_engine.hpp"
#include "fedeeg/model.hpp"
#include "fedeeg/secure_norm.hpp"
#include "fedeeg/synth.hpp"

namespace fedeeg {

// Raw-recording stage: one synthetic recording per federation profile,
// pushed through the EEG pipeline by `preprocess`.
struct PreprocessConfig {
  StagePolicy policy;
  RecordingPlan plan;
  std::string channel_a = "F3";
  std::string channel_b = "C3";
};

struct ExperimentConfig {
  FederationSpec federation = default_federation();
  NormalizationMode normalization = NormalizationMode::SecureGlobal;
  FixedPointCodec codec;
  std::vector<std::size_t> hidden_dims{16};
  std::optional<double> init_scale;
  TrainConfig train = default_train();
  std::size_t local_epochs = 3;  // localized baselines: epochs on the site's own data
  std::vector<std::size_t> sweep{20, 100, 200, 400, 800};
  std::vector<std::string> baselines{"weighted"};  // strategies run next to every sweep
  std::size_t repeats = 5;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  PreprocessConfig preprocess;

  static TrainConfig default_train();

  ModelConfig model_config(std::uint64_t model_seed) const;
  // Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Missing fields take their defaults; unknown fields are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

// Seeds of one repeat, all derived from the repeat seed.
struct RunSeeds {
  std::uint64_t federation = 0;
  std::uint64_t model = 0;
  std::uint64_t train = 0;
  std::uint64_t keys = 0;

  static RunSeeds derive(std::uint64_t run_seed);
};

std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::size_t repeat);

struct PreparedFederation {
  std::vector<ClientSplits> clients;
  NormalizationOutcome normalization;

  std::vector<ClientDataset> train_sets() const;
  std::vector<ClientDataset> test_sets() const;
  std::size_t min_train_size() const;
};

// Runs the normalization protocol on the training splits over `transport`
// and applies each client's resulting map to its validation and test splits.
PreparedFederation normalize_federation(std::vector<ClientSplits> clients,
                                        NormalizationMode mode, const FixedPointCodec& codec,
                                        std::uint64_t key_seed, Transport& transport);

// Generates and normalizes the federation of one repeat.
PreparedFederation prepare_federation(const ExperimentConfig& cfg, std::uint64_t run_seed,
                                      Transport& transport);

struct StrategyRun {
  Strategy strategy;
  TrainResult training;
  MetricsReport report;
};

// Trains from the repeat's initial parameters with `strategy` and evaluates
// the final global model on every client's test split.
StrategyRun run_strategy(const PreparedFederation& fed, const ExperimentConfig& cfg,
                         const Strategy& strategy, std::uint64_t run_seed, Transport& transport,
                         const TrainOptions& options = {});

// accuracy[a][b]: model trained only on site a, tested on site b.
struct LocalBaseline {
  std::vector<std::string> clients;
  std::vector<std::vector<double>> accuracy;

  double own(std::size_t k) const { return accuracy[k][k]; }
  double cross_macro(std::size_t k) const;  // mean over the other sites
};

LocalBaseline run_local_baselines(const PreparedFederation& fed, const ExperimentConfig& cfg,
                                  std::uint64_t run_seed);

struct SweepRow {
  std::string label;  // "weighted", "M=200", ...
  Strategy strategy;
  std::vector<MetricsReport> runs;
  RunSummary summary;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // baselines first, then the M grid in order
};

// Every baseline and every M over cfg.repeats repeats. One federation and one
// initial model per repeat, shared by all rows.
SweepResult run_sweep(const ExperimentConfig& cfg);

}  // namespace fedeeg
