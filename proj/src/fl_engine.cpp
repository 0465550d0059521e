#include "fedeeg/fl_engine.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "fedeeg/error.hpp"

namespace fedeeg {

std::string Strategy::name() const {
  switch (kind) {
    case Kind::Unweighted: return "unweighted";
    case Kind::Weighted: return "weighted";
    case Kind::RandomSubset: return "random_subset";
  }
  return "unknown";
}

Strategy Strategy::parse(const std::string& name, std::size_t subset_size) {
  if (name == "unweighted") return unweighted();
  if (name == "weighted") return weighted();
  if (name == "random_subset" || name == "rsa") return random_subset(subset_size);
  throw ConfigError("train.strategy", "unknown strategy '" + name + "'");
}

void TrainConfig::validate() const {
  if (local_epochs == 0) throw ConfigError("train.local_epochs", "must be >= 1");
  if (!(eta >= 0.0)) throw ConfigError("train.eta", "must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
  if (strategy.kind == Strategy::Kind::RandomSubset && strategy.subset_size == 0) {
    throw ConfigError("train.subset_size", "random_subset needs M >= 1");
  }
}

ClientState::ClientState(PartyId id_, std::shared_ptr<const ClientDataset> data_,
                         std::uint64_t seed)
    : id(id_), data(std::move(data_)), rng(seed) {
  if (!data || data->empty()) throw ConfigError("clients", "every client needs n_k >= 1");
}

std::vector<ClientState> make_clients(const std::vector<ClientDataset>& datasets,
                                      std::uint64_t rng_seed) {
  std::vector<ClientState> out;
  out.reserve(datasets.size());
  for (PartyId k = 0; k < datasets.size(); ++k) {
    out.emplace_back(k, std::make_shared<const ClientDataset>(datasets[k]),
                     derive_seed(rng_seed, k));
  }
  return out;
}

namespace {

// Shuffles `order` and runs one pass of mini-batch SGD over it.
void sgd_epoch(ParamVector& params, const ClientDataset& data, std::vector<std::size_t>& order,
               Rng& rng, const TrainConfig& cfg, const Mlp& model, BatchBuffer& buffer) {
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t len = std::min(cfg.batch_size, order.size() - start);
    const Batch batch = buffer.gather(data, std::span<const std::size_t>(order).subspan(start, len));
    const auto lg = model.loss_and_grad(params, batch);
    params.add_scaled(lg.grad, -cfg.eta);
  }
}

}  // namespace

ParamVector client_local_update(ClientState& state, const ParamVector& global,
                                const TrainConfig& cfg, const Mlp& model) {
  ParamVector params = global;
  BatchBuffer buffer;
  std::vector<std::size_t> order(state.size());
  for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    sgd_epoch(params, *state.data, order, state.rng, cfg, model, buffer);
  }
  return params;
}

std::vector<std::size_t> sample_subset(Rng& rng, std::size_t n, std::size_t m) {
  if (m > n) {
    throw ConfigError("train.subset_size", "subset size " + std::to_string(m) + " exceeds client size " +
                                     std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

ParamVector client_subset_update(ClientState& state, const ParamVector& global,
                                 const TrainConfig& cfg, const Mlp& model) {
  const std::size_t m = cfg.strategy.subset_size;
  ParamVector params = global;
  BatchBuffer buffer;
  for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
    auto subset = sample_subset(state.rng, state.size(), m);
    sgd_epoch(params, *state.data, subset, state.rng, cfg, model, buffer);
  }
  return params;
}

ParamVector aggregate_unweighted(std::span<const ParamVector> updates) {
  if (updates.empty()) throw DimensionError("aggregate of zero updates");
  ParamVector out(updates.front().size());
  for (const auto& u : updates) out += u;
  out *= 1.0 / static_cast<double>(updates.size());
  return out;
}

ParamVector aggregate_weighted(std::span<const ParamVector> updates,
                               std::span<const std::size_t> sizes) {
  if (updates.empty()) throw DimensionError("aggregate of zero updates");
  if (sizes.size() != updates.size()) throw DimensionError("sizes and updates differ in length");
  const double total =
      static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  if (total == 0.0) throw DimensionError("total dataset size is zero");
  ParamVector out(updates.front().size());
  for (std::size_t k = 0; k < updates.size(); ++k) {
    out.add_scaled(updates[k], static_cast<double>(sizes[k]) / total);
  }
  return out;
}

TrainResult run_training(std::vector<ClientState>& clients, const TrainConfig& cfg,
                         const Mlp& model, const ParamVector& initial, Transport& transport,
                         const TrainOptions& options) {
  cfg.validate();
  if (clients.empty()) throw ConfigError("clients", "no clients registered");
  if (initial.size() != model.param_count()) {
    throw DimensionError("initial params do not match the model layout");
  }
  const bool subset = cfg.strategy.kind == Strategy::Kind::RandomSubset;
  if (subset) {
    for (const auto& c : clients) {
      if (cfg.strategy.subset_size > c.size()) {
        throw ConfigError("train.subset_size", "M = " + std::to_string(cfg.strategy.subset_size) +
                                         " exceeds min_k n_k (client " + std::to_string(c.id) +
                                         " holds " + std::to_string(c.size()) + ")");
      }
    }
  }
  const std::size_t k_clients = clients.size();
  std::vector<std::size_t> sizes;
  for (const auto& c : clients) sizes.push_back(c.size());

  TrainResult result;
  result.params = initial;
  for (std::uint64_t t = 0; t < cfg.rounds; ++t) {
    const RoundMessage broadcast{kWireVersion, t, MessageKind::Broadcast, kServerId,
                                 result.params.serialize()};
    for (const auto& c : clients) transport.send(c.id, broadcast);

    for (auto& c : clients) {
      auto msg = transport.receive(c.id);
      if (!msg) throw ProtocolError("client " + std::to_string(c.id) + " missed round broadcast");
      check_message(*msg, t, MessageKind::Broadcast);
      const ParamVector global = ParamVector::deserialize(msg->payload);
      if (global.size() != model.param_count()) {
        throw DimensionError("broadcast params do not match the model layout");
      }
      const ParamVector local = subset ? client_subset_update(c, global, cfg, model)
                                       : client_local_update(c, global, cfg, model);
      transport.send(kServerId, {kWireVersion, t, MessageKind::ClientUpdate, c.id,
                                 local.serialize()});
    }

    // Barrier: one valid update per client; anything else is discarded.
    std::vector<std::optional<ParamVector>> updates(k_clients);
    while (auto msg = transport.receive(kServerId)) {
      try {
        check_message(*msg, t, MessageKind::ClientUpdate);
        if (msg->sender >= k_clients) {
          throw ProtocolError("update from unknown sender " + std::to_string(msg->sender));
        }
        if (updates[msg->sender]) {
          throw ProtocolError("duplicate update from client " + std::to_string(msg->sender));
        }
        auto p = ParamVector::deserialize(msg->payload);
        if (p.size() != model.param_count()) throw ProtocolError("update has the wrong length");
        updates[msg->sender] = std::move(p);
      } catch (const ProtocolError& e) {
        result.rejected.emplace_back(e.what());
      }
    }
    std::vector<ParamVector> received;
    received.reserve(k_clients);
    for (std::size_t k = 0; k < k_clients; ++k) {
      if (!updates[k]) {
        throw ProtocolError("round " + std::to_string(t) + ": no update from client " +
                            std::to_string(k));
      }
      received.push_back(std::move(*updates[k]));
    }

    result.params = cfg.strategy.kind == Strategy::Kind::Weighted
                        ? aggregate_weighted(received, sizes)
                        : aggregate_unweighted(received);
    if (!result.params.all_finite()) throw Error("global parameters diverged (non-finite)");

    RoundRecord rec;
    rec.round = static_cast<std::size_t>(t) + 1;
    if (options.keep_params) rec.params = result.params;
    if (options.on_round) rec.metrics = options.on_round(rec.round, result.params);
    result.history.push_back(std::move(rec));
  }
  return result;
}

}  // namespace fedeeg
