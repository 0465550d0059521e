#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedeeg/dataset.hpp"
#include "fedeeg/model.hpp"
#include "fedeeg/rng.hpp"
#include "fedeeg/wire.hpp"

namespace fedeeg {

struct Strategy {
  enum class Kind { Unweighted, Weighted, RandomSubset };
  Kind kind = Kind::Weighted;
  std::size_t subset_size = 0;  // M, RandomSubset only

  static Strategy unweighted() { return {Kind::Unweighted, 0}; }
  static Strategy weighted() { return {Kind::Weighted, 0}; }
  static Strategy random_subset(std::size_t m) { return {Kind::RandomSubset, m}; }

  // "unweighted", "weighted", "random_subset"
  std::string name() const;
  static Strategy parse(const std::string& name, std::size_t subset_size = 0);
  bool operator==(const Strategy&) const = default;
};

struct TrainConfig {
  std::size_t rounds = 50;        // T
  std::size_t local_epochs = 1;   // E
  double eta = 0.05;
  Strategy strategy = Strategy::weighted();
  std::size_t batch_size = 64;    // B
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct ClientState {
  ClientState(PartyId id, std::shared_ptr<const ClientDataset> data, std::uint64_t seed);

  PartyId id;
  std::shared_ptr<const ClientDataset> data;
  Rng rng;

  std::size_t size() const noexcept { return data->size(); }
};

// One client per dataset; client k draws from derive_seed(rng_seed, k).
std::vector<ClientState> make_clients(const std::vector<ClientDataset>& datasets,
                                      std::uint64_t rng_seed);

// E epochs of shuffled mini-batch SGD over the whole local dataset,
// starting from `global`.
ParamVector client_local_update(ClientState& state, const ParamVector& global,
                                const TrainConfig& cfg, const Mlp& model);

// M distinct indices drawn uniformly without replacement from [0, n).
std::vector<std::size_t> sample_subset(Rng& rng, std::size_t n, std::size_t m);

// For each local epoch: draw a fresh subset of size M, then shuffled
// mini-batch SGD over that subset only.
ParamVector client_subset_update(ClientState& state, const ParamVector& global,
                                 const TrainConfig& cfg, const Mlp& model);

ParamVector aggregate_unweighted(std::span<const ParamVector> updates);
ParamVector aggregate_weighted(std::span<const ParamVector> updates,
                               std::span<const std::size_t> sizes);

struct RoundRecord {
  std::size_t round = 0;  // number of completed rounds
  ParamVector params;
  std::map<std::string, double> metrics;
};

struct TrainResult {
  ParamVector params;
  std::vector<RoundRecord> history;
  std::vector<std::string> rejected;  // protocol errors raised by discarded messages
};

struct TrainOptions {
  bool keep_params = true;
  // Called after every aggregation with (completed rounds, global params).
  std::function<std::map<std::string, double>(std::size_t, const ParamVector&)> on_round;
};

// T rounds of broadcast -> client updates -> aggregation. Only RoundMessages
// cross `transport`; datasets never leave their ClientState.
TrainResult run_training(std::vector<ClientState>& clients, const TrainConfig& cfg,
                         const Mlp& model, const ParamVector& initial, Transport& transport,
                         const TrainOptions& options = {});

}  // namespace fedeeg
