#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fedeeg/dataset.hpp"
#include "fedeeg/wire.hpp"

namespace fedeeg {

// Signed fixed-point numbers in the 64-bit modular word domain:
// encode(x) = round(x * 2^scale_bits) mod 2^64.
struct FixedPointCodec {
  static constexpr unsigned kWordBits = 64;
  unsigned scale_bits = 20;
  // Headroom so that the sum of up to 2^headroom_bits encoded values still fits.
  unsigned headroom_bits = 4;

  // Largest |x| accepted by encode().
  double max_magnitude() const;
  std::uint64_t encode(double x) const;  // throws OverflowError
  double decode(std::uint64_t word) const;
  void validate() const;
  bool operator==(const FixedPointCodec&) const = default;
};

// Shared 64-bit seed for every unordered client pair (p < q).
class PairwiseSeeds {
 public:
  PairwiseSeeds() = default;
  PairwiseSeeds(std::size_t clients, std::map<std::pair<PartyId, PartyId>, std::uint64_t> seeds);

  std::size_t client_count() const noexcept { return clients_; }
  std::size_t pair_count() const noexcept { return seeds_.size(); }
  std::uint64_t seed(PartyId a, PartyId b) const;
  const std::map<std::pair<PartyId, PartyId>, std::uint64_t>& all() const noexcept {
    return seeds_;
  }
  bool operator==(const PairwiseSeeds&) const = default;

 private:
  std::size_t clients_ = 0;
  std::map<std::pair<PartyId, PartyId>, std::uint64_t> seeds_;
};

// Source of pairwise shared seeds. A real key agreement (e.g. Diffie-Hellman
// between every pair of clients) can stand in for the simulated dealer.
class KeyAgreement {
 public:
  virtual ~KeyAgreement() = default;
  virtual PairwiseSeeds agree(std::size_t clients) = 0;
};

// Trusted dealer: derives all K(K-1)/2 seeds from one RNG seed. K >= 2.
PairwiseSeeds deal_pairwise_seeds(std::size_t clients, std::uint64_t rng_seed);

class TrustedDealer final : public KeyAgreement {
 public:
  explicit TrustedDealer(std::uint64_t rng_seed) : rng_seed_(rng_seed) {}
  PairwiseSeeds agree(std::size_t clients) override {
    return deal_pairwise_seeds(clients, rng_seed_);
  }

 private:
  std::uint64_t rng_seed_;
};

// Mask families. The session number lets one seed dealing serve several
// protocol runs without reusing a mask.
enum class MaskFamily : std::uint8_t { Sum = 1, Count = 2, Variance = 3 };

struct MaskStream {
  MaskFamily family = MaskFamily::Sum;
  std::uint64_t session = 0;
  std::uint64_t nonce() const noexcept;
};

// One 64-bit word of the ChaCha20 keystream keyed by `seed`, nonce `stream`.
std::uint64_t prg_word(std::uint64_t seed, const MaskStream& stream);

// mask_k = sum_{q>k} PRG(seed_kq) - sum_{q<k} PRG(seed_qk)  (mod 2^64).
std::uint64_t expand_mask(const PairwiseSeeds& seeds, PartyId client, const MaskStream& stream);

struct MaskedShare {
  PartyId client = 0;
  unsigned scale_bits = 20;
  std::uint64_t masked_sum = 0;    // encode(s_k) + alpha_k
  std::uint64_t masked_count = 0;  // n_k * d + delta_k
  std::optional<std::uint64_t> masked_var;  // encode(v_k) + eps_k

  std::vector<std::uint8_t> serialize() const;
  static MaskedShare deserialize(std::span<const std::uint8_t> bytes);
  bool operator==(const MaskedShare&) const = default;
};

struct GlobalStats {
  double mu = 0.0;
  double sigma = 1.0;
  std::uint64_t n_total = 0;  // d * N

  std::vector<std::uint8_t> serialize() const;
  static GlobalStats deserialize(std::span<const std::uint8_t> bytes);
  bool operator==(const GlobalStats&) const = default;
};

struct MeanBroadcast {
  double mu = 0.0;
  std::uint64_t n_total = 0;
};

MaskedShare client_masked_stats(const ClientDataset& data, PartyId client,
                                const PairwiseSeeds& seeds, const FixedPointCodec& codec,
                                std::uint64_t session = 0);

// Requires exactly one share from each of the seeds' clients.
MeanBroadcast server_aggregate_mean(std::span<const MaskedShare> shares,
                                    const PairwiseSeeds& seeds, const FixedPointCodec& codec);

// Returns `share` with masked_var filled in.
MaskedShare client_masked_variance(const ClientDataset& data, MaskedShare share, double mu,
                                   const PairwiseSeeds& seeds, const FixedPointCodec& codec,
                                   std::uint64_t session = 0);

// Throws ZeroVarianceError when the pooled variance is zero up to quantization.
GlobalStats server_aggregate_std(std::span<const MaskedShare> shares, const MeanBroadcast& mean,
                                 const PairwiseSeeds& seeds, const FixedPointCodec& codec);

// x <- (x - mu) / sigma. sigma must be > 0.
ClientDataset normalize_local(ClientDataset data, const GlobalStats& stats);
// Per-client affine map onto [0, 1]. Throws ZeroVarianceError for a constant client.
ClientDataset local_minmax(ClientDataset data);
// Per-client standardization with the client's own mean and std.
ClientDataset local_standardize(ClientDataset data);

enum class NormalizationMode { LocalStandardize, MinMaxThenSecureGlobal, SecureGlobal };

NormalizationMode parse_normalization_mode(const std::string& name);
std::string to_string(NormalizationMode mode);

// x -> scale * x + offset
struct AffineMap {
  double scale = 1.0;
  double offset = 0.0;

  double operator()(double x) const noexcept { return scale * x + offset; }
  // this after `first`
  AffineMap after(const AffineMap& first) const noexcept {
    return {scale * first.scale, scale * first.offset + offset};
  }
};

// Applies `map` to every sample; used to carry the training transform over
// to a client's validation and test splits.
ClientDataset apply_affine(ClientDataset data, const AffineMap& map);

struct NormalizationOutcome {
  std::optional<GlobalStats> stats;  // unset for LocalStandardize
  bool centering_only = false;       // pooled variance was zero
  std::vector<AffineMap> maps;       // per client, composed end-to-end
};

// Runs the full masked-statistics exchange over `transport`: masked sums and
// counts, mean broadcast, masked variance terms, stats broadcast, then local
// normalization on every client. Modifies `clients` in place.
NormalizationOutcome run_normalization(std::vector<ClientDataset>& clients, NormalizationMode mode,
                                       KeyAgreement& keys, const FixedPointCodec& codec,
                                       Transport& transport, std::uint64_t session = 0);

}  // namespace fedeeg
