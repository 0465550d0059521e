#include "fedeeg/secure_norm.hpp"

#include <sodium.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>

#include "fedeeg/bytes.hpp"
#include "fedeeg/error.hpp"
#include "fedeeg/rng.hpp"

namespace fedeeg {

namespace {

void ensure_sodium() {
  static const int status = sodium_init();
  if (status < 0) throw std::runtime_error("libsodium initialization failed");
}

double pow2(int e) { return std::ldexp(1.0, e); }

// Checks that `shares` holds exactly one share per client of `seeds`.
void check_share_set(std::span<const MaskedShare> shares, const PairwiseSeeds& seeds,
                     const FixedPointCodec& codec) {
  const std::size_t k = seeds.client_count();
  if (shares.size() != k) {
    throw ProtocolError("expected " + std::to_string(k) + " masked shares, got " +
                        std::to_string(shares.size()) + " (all clients must participate)");
  }
  std::set<PartyId> seen;
  for (const auto& s : shares) {
    if (s.client >= k) throw ProtocolError("share from unknown client " + std::to_string(s.client));
    if (!seen.insert(s.client).second) {
      throw ProtocolError("duplicate share from client " + std::to_string(s.client));
    }
    if (s.scale_bits != codec.scale_bits) {
      throw ProtocolError("fixed-point scale mismatch: share uses " +
                          std::to_string(s.scale_bits) + " bits, server " +
                          std::to_string(codec.scale_bits));
    }
  }
}

}  // namespace

double FixedPointCodec::max_magnitude() const {
  return pow2(static_cast<int>(kWordBits) - 1 - static_cast<int>(scale_bits) -
              static_cast<int>(headroom_bits));
}

void FixedPointCodec::validate() const {
  if (scale_bits == 0 || scale_bits + headroom_bits >= kWordBits - 1) {
    throw ConfigError("codec.scale_bits", "must be in [1, 62 - headroom_bits]");
  }
}

std::uint64_t FixedPointCodec::encode(double x) const {
  if (!std::isfinite(x) || std::abs(x) > max_magnitude()) {
    throw OverflowError("value " + std::to_string(x) + " exceeds fixed-point bound " +
                        std::to_string(max_magnitude()) +
                        "; lower scale_bits or rescale the signal");
  }
  const auto scaled = static_cast<std::int64_t>(std::llround(x * pow2(static_cast<int>(scale_bits))));
  return static_cast<std::uint64_t>(scaled);
}

double FixedPointCodec::decode(std::uint64_t word) const {
  return static_cast<double>(static_cast<std::int64_t>(word)) *
         pow2(-static_cast<int>(scale_bits));
}

PairwiseSeeds::PairwiseSeeds(std::size_t clients,
                             std::map<std::pair<PartyId, PartyId>, std::uint64_t> seeds)
    : clients_(clients), seeds_(std::move(seeds)) {
  for (const auto& [pair, _] : seeds_) {
    if (pair.first >= pair.second || pair.second >= clients_) {
      throw ConfigError("seeds", "pair keys must satisfy p < q < client_count");
    }
  }
  if (seeds_.size() != clients_ * (clients_ - (clients_ > 0 ? 1 : 0)) / 2) {
    throw ConfigError("seeds", "every client pair needs exactly one seed");
  }
}

std::uint64_t PairwiseSeeds::seed(PartyId a, PartyId b) const {
  const auto key = a < b ? std::pair{a, b} : std::pair{b, a};
  auto it = seeds_.find(key);
  if (it == seeds_.end()) throw ProtocolError("no shared seed for this client pair");
  return it->second;
}

PairwiseSeeds deal_pairwise_seeds(std::size_t clients, std::uint64_t rng_seed) {
  if (clients < 2) {
    throw ConfigError("clients", "masking needs at least 2 clients; a lone share is plaintext");
  }
  Rng rng(rng_seed);
  std::map<std::pair<PartyId, PartyId>, std::uint64_t> seeds;
  for (PartyId p = 0; p < clients; ++p) {
    for (PartyId q = p + 1; q < clients; ++q) seeds[{p, q}] = rng.next_u64();
  }
  return PairwiseSeeds(clients, std::move(seeds));
}

std::uint64_t MaskStream::nonce() const noexcept {
  return (session << 8) | static_cast<std::uint64_t>(family);
}

std::uint64_t prg_word(std::uint64_t seed, const MaskStream& stream) {
  ensure_sodium();
  std::array<unsigned char, 8> seed_bytes{};
  std::array<unsigned char, 8> nonce{};
  const std::uint64_t n = stream.nonce();
  for (int i = 0; i < 8; ++i) {
    seed_bytes[i] = static_cast<unsigned char>(seed >> (8 * i));
    nonce[i] = static_cast<unsigned char>(n >> (8 * i));
  }
  std::array<unsigned char, crypto_stream_chacha20_KEYBYTES> key{};
  crypto_generichash(key.data(), key.size(), seed_bytes.data(), seed_bytes.size(), nullptr, 0);
  std::array<unsigned char, 8> out{};
  crypto_stream_chacha20(out.data(), out.size(), nonce.data(), key.data());
  std::uint64_t word = 0;
  for (int i = 0; i < 8; ++i) word |= static_cast<std::uint64_t>(out[i]) << (8 * i);
  return word;
}

std::uint64_t expand_mask(const PairwiseSeeds& seeds, PartyId client, const MaskStream& stream) {
  if (client >= seeds.client_count()) {
    throw ProtocolError("client " + std::to_string(client) + " is not part of the seed dealing");
  }
  std::uint64_t mask = 0;
  for (PartyId q = 0; q < seeds.client_count(); ++q) {
    if (q == client) continue;
    const std::uint64_t r = prg_word(seeds.seed(client, q), stream);
    if (q > client) {
      mask += r;
    } else {
      mask -= r;
    }
  }
  return mask;
}

std::vector<std::uint8_t> MaskedShare::serialize() const {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(scale_bits));
  w.u8(static_cast<std::uint8_t>(FixedPointCodec::kWordBits));
  w.u32(client);
  w.u64(masked_sum);
  w.u64(masked_count);
  w.u8(masked_var ? 1 : 0);
  if (masked_var) w.u64(*masked_var);
  return w.take();
}

MaskedShare MaskedShare::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  MaskedShare s;
  s.scale_bits = r.u8();
  const auto word_bits = r.u8();
  if (word_bits != FixedPointCodec::kWordBits) {
    throw ProtocolError("fixed-point word size mismatch: " + std::to_string(word_bits));
  }
  s.client = r.u32();
  s.masked_sum = r.u64();
  s.masked_count = r.u64();
  if (r.u8() != 0) s.masked_var = r.u64();
  if (!r.done()) throw ProtocolError("trailing bytes in masked share");
  return s;
}

std::vector<std::uint8_t> GlobalStats::serialize() const {
  ByteWriter w;
  w.f64(mu);
  w.f64(sigma);
  w.u64(n_total);
  return w.take();
}

GlobalStats GlobalStats::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  GlobalStats g;
  g.mu = r.f64();
  g.sigma = r.f64();
  g.n_total = r.u64();
  if (!r.done()) throw ProtocolError("trailing bytes in global stats");
  return g;
}

MaskedShare client_masked_stats(const ClientDataset& data, PartyId client,
                                const PairwiseSeeds& seeds, const FixedPointCodec& codec,
                                std::uint64_t session) {
  if (data.empty()) throw ConfigError("dataset", "client '" + data.client_id + "' has no samples");
  codec.validate();
  double sum = 0.0;
  for (double x : data.samples) sum += x;
  MaskedShare share;
  share.client = client;
  share.scale_bits = codec.scale_bits;
  share.masked_sum = codec.encode(sum) + expand_mask(seeds, client, {MaskFamily::Sum, session});
  share.masked_count = static_cast<std::uint64_t>(data.samples.size()) +
                       expand_mask(seeds, client, {MaskFamily::Count, session});
  return share;
}

MeanBroadcast server_aggregate_mean(std::span<const MaskedShare> shares,
                                    const PairwiseSeeds& seeds, const FixedPointCodec& codec) {
  check_share_set(shares, seeds, codec);
  std::uint64_t sum = 0;
  std::uint64_t count = 0;
  for (const auto& s : shares) {
    sum += s.masked_sum;
    count += s.masked_count;
  }
  if (count == 0) throw ProtocolError("aggregate sample count is zero");
  return MeanBroadcast{codec.decode(sum) / static_cast<double>(count), count};
}

MaskedShare client_masked_variance(const ClientDataset& data, MaskedShare share, double mu,
                                   const PairwiseSeeds& seeds, const FixedPointCodec& codec,
                                   std::uint64_t session) {
  double v = 0.0;
  for (double x : data.samples) v += (x - mu) * (x - mu);
  share.masked_var =
      codec.encode(v) + expand_mask(seeds, share.client, {MaskFamily::Variance, session});
  return share;
}

GlobalStats server_aggregate_std(std::span<const MaskedShare> shares, const MeanBroadcast& mean,
                                 const PairwiseSeeds& seeds, const FixedPointCodec& codec) {
  check_share_set(shares, seeds, codec);
  std::uint64_t total = 0;
  for (const auto& s : shares) {
    if (!s.masked_var) throw ProtocolError("share without variance term");
    total += *s.masked_var;
  }
  const double n = static_cast<double>(mean.n_total);
  double variance = codec.decode(total) / n;
  // Quantization can leave a tiny negative residue.
  if (variance < -1e-9) throw ProtocolError("aggregate variance is negative");
  variance = std::max(variance, 0.0);
  const double quantum =
      static_cast<double>(shares.size()) * pow2(-static_cast<int>(codec.scale_bits)) / n;
  if (variance <= quantum) {
    throw ZeroVarianceError("federation-wide signal is constant (sigma = 0)");
  }
  return GlobalStats{mean.mu, std::sqrt(variance), mean.n_total};
}

ClientDataset normalize_local(ClientDataset data, const GlobalStats& stats) {
  if (!(stats.sigma > 0.0)) throw ZeroVarianceError("cannot normalize with sigma = 0");
  const double inv = 1.0 / stats.sigma;
  for (double& x : data.samples) x = (x - stats.mu) * inv;
  return data;
}

namespace {

std::pair<double, double> local_range(const ClientDataset& data) {
  if (data.samples.empty()) throw ConfigError("dataset", "empty client dataset");
  const auto [lo, hi] = std::minmax_element(data.samples.begin(), data.samples.end());
  if (!(*hi > *lo)) {
    throw ZeroVarianceError("client '" + data.client_id + "' signal is constant");
  }
  return {*lo, *hi};
}

GlobalStats local_moments(const ClientDataset& data) {
  if (data.samples.empty()) throw ConfigError("dataset", "empty client dataset");
  double mean = 0.0;
  for (double x : data.samples) mean += x;
  mean /= static_cast<double>(data.samples.size());
  double var = 0.0;
  for (double x : data.samples) var += (x - mean) * (x - mean);
  var /= static_cast<double>(data.samples.size());
  if (!(var > 0.0)) throw ZeroVarianceError("client '" + data.client_id + "' signal is constant");
  return {mean, std::sqrt(var), data.samples.size()};
}

}  // namespace

ClientDataset local_minmax(ClientDataset data) {
  const auto [min, max] = local_range(data);
  const double range = max - min;
  for (double& x : data.samples) {
    x = x == max ? 1.0 : (x - min) / range;
  }
  return data;
}

ClientDataset local_standardize(ClientDataset data) {
  const auto st = local_moments(data);
  return normalize_local(std::move(data), st);
}

ClientDataset apply_affine(ClientDataset data, const AffineMap& map) {
  for (double& x : data.samples) x = map(x);
  return data;
}

NormalizationMode parse_normalization_mode(const std::string& name) {
  if (name == "local_standardize") return NormalizationMode::LocalStandardize;
  if (name == "minmax_then_secure_global") return NormalizationMode::MinMaxThenSecureGlobal;
  if (name == "secure_global") return NormalizationMode::SecureGlobal;
  throw ConfigError("normalization", "unknown mode '" + name + "'");
}

std::string to_string(NormalizationMode mode) {
  switch (mode) {
    case NormalizationMode::LocalStandardize: return "local_standardize";
    case NormalizationMode::MinMaxThenSecureGlobal: return "minmax_then_secure_global";
    case NormalizationMode::SecureGlobal: return "secure_global";
  }
  return "unknown";
}

namespace {

// Server side: drain exactly one valid MaskedStatShare per client for `round`.
std::vector<MaskedShare> collect_shares(Transport& transport, std::size_t clients,
                                        std::uint64_t round) {
  std::vector<MaskedShare> shares;
  std::set<PartyId> seen;
  while (auto msg = transport.receive(kServerId)) {
    check_message(*msg, round, MessageKind::MaskedStatShare);
    auto share = MaskedShare::deserialize(msg->payload);
    if (share.client != msg->sender) throw ProtocolError("share client id does not match sender");
    if (!seen.insert(share.client).second) {
      throw ProtocolError("duplicate masked share from client " + std::to_string(share.client));
    }
    shares.push_back(share);
  }
  if (shares.size() != clients) {
    throw ProtocolError("normalization round " + std::to_string(round) + ": " +
                        std::to_string(shares.size()) + " of " + std::to_string(clients) +
                        " clients reported");
  }
  std::sort(shares.begin(), shares.end(),
            [](const auto& a, const auto& b) { return a.client < b.client; });
  return shares;
}

void broadcast_stats(Transport& transport, std::size_t clients, std::uint64_t round,
                     const GlobalStats& stats) {
  RoundMessage msg{kWireVersion, round, MessageKind::StatBroadcast, kServerId, stats.serialize()};
  for (PartyId k = 0; k < clients; ++k) transport.send(k, msg);
}

GlobalStats receive_stats(Transport& transport, PartyId client, std::uint64_t round) {
  auto msg = transport.receive(client);
  if (!msg) throw ProtocolError("client " + std::to_string(client) + " missed the stats broadcast");
  check_message(*msg, round, MessageKind::StatBroadcast);
  return GlobalStats::deserialize(msg->payload);
}

}  // namespace

NormalizationOutcome run_normalization(std::vector<ClientDataset>& clients, NormalizationMode mode,
                                       KeyAgreement& keys, const FixedPointCodec& codec,
                                       Transport& transport, std::uint64_t session) {
  NormalizationOutcome outcome;
  const std::size_t k = clients.size();
  outcome.maps.assign(k, AffineMap{});
  if (mode == NormalizationMode::LocalStandardize) {
    for (std::size_t c = 0; c < k; ++c) {
      const auto st = local_moments(clients[c]);
      outcome.maps[c] = {1.0 / st.sigma, -st.mu / st.sigma};
      clients[c] = normalize_local(std::move(clients[c]), st);
    }
    return outcome;
  }
  if (mode == NormalizationMode::MinMaxThenSecureGlobal) {
    for (std::size_t c = 0; c < k; ++c) {
      const auto [lo, hi] = local_range(clients[c]);
      outcome.maps[c] = {1.0 / (hi - lo), -lo / (hi - lo)};
      clients[c] = local_minmax(std::move(clients[c]));
    }
  }
  const PairwiseSeeds seeds = keys.agree(k);
  // Two protocol rounds per session: 2s (mean) and 2s + 1 (variance).
  const std::uint64_t mean_round = 2 * session;
  const std::uint64_t var_round = mean_round + 1;

  std::vector<MaskedShare> own(k);
  for (PartyId c = 0; c < k; ++c) {
    own[c] = client_masked_stats(clients[c], c, seeds, codec, session);
    transport.send(kServerId, {kWireVersion, mean_round, MessageKind::MaskedStatShare, c,
                               own[c].serialize()});
  }
  const auto mean = server_aggregate_mean(collect_shares(transport, k, mean_round), seeds, codec);
  broadcast_stats(transport, k, mean_round, GlobalStats{mean.mu, 0.0, mean.n_total});

  for (PartyId c = 0; c < k; ++c) {
    const GlobalStats got = receive_stats(transport, c, mean_round);
    auto share = client_masked_variance(clients[c], own[c], got.mu, seeds, codec, session);
    transport.send(kServerId, {kWireVersion, var_round, MessageKind::MaskedStatShare, c,
                               share.serialize()});
  }
  const auto var_shares = collect_shares(transport, k, var_round);
  GlobalStats stats;
  try {
    stats = server_aggregate_std(var_shares, mean, seeds, codec);
  } catch (const ZeroVarianceError&) {
    // Constant federation: fall back to centering only.
    stats = GlobalStats{mean.mu, 1.0, mean.n_total};
    outcome.centering_only = true;
  }
  broadcast_stats(transport, k, var_round, stats);
  for (PartyId c = 0; c < k; ++c) {
    const GlobalStats got = receive_stats(transport, c, var_round);
    clients[c] = normalize_local(std::move(clients[c]), got);
    outcome.maps[c] = AffineMap{1.0 / got.sigma, -got.mu / got.sigma}.after(outcome.maps[c]);
  }
  outcome.stats = stats;
  return outcome;
}

}  // namespace fedeeg
