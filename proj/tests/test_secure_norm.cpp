#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "fedeeg/error.hpp"
#include "fedeeg/rng.hpp"
#include "fedeeg/secure_norm.hpp"
#include "oracles.hpp"

using namespace fedeeg;

namespace {

ClientDataset make_client(const std::string& id, std::size_t dim, std::vector<double> xs) {
  ClientDataset c;
  c.client_id = id;
  c.dim = dim;
  c.samples = std::move(xs);
  c.labels.assign(c.samples.size() / dim, 0);
  return c;
}

std::vector<ClientDataset> random_federation(Rng& rng, std::size_t k, std::size_t d) {
  std::vector<ClientDataset> out;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t n = 1 + rng.below(60);
    const double shift = rng.uniform(-3.0, 3.0);
    const double scale = rng.uniform(0.2, 4.0);
    std::vector<double> xs(n * d);
    for (double& x : xs) x = shift + scale * rng.normal();
    out.push_back(make_client("c" + std::to_string(c), d, std::move(xs)));
  }
  return out;
}

GlobalStats secure_stats(const std::vector<ClientDataset>& clients, std::uint64_t seed,
                         const FixedPointCodec& codec = {}) {
  const auto seeds = deal_pairwise_seeds(clients.size(), seed);
  std::vector<MaskedShare> shares;
  for (PartyId c = 0; c < clients.size(); ++c) {
    shares.push_back(client_masked_stats(clients[c], c, seeds, codec));
  }
  const auto mean = server_aggregate_mean(shares, seeds, codec);
  for (PartyId c = 0; c < clients.size(); ++c) {
    shares[c] = client_masked_variance(clients[c], shares[c], mean.mu, seeds, codec);
  }
  return server_aggregate_std(shares, mean, seeds, codec);
}

}  // namespace

TEST_CASE("codec round-trips and matches the rounding definition") {
  const FixedPointCodec codec;
  CHECK(codec.encode(1.0) == (1ULL << 20));
  CHECK(codec.encode(-1.0) == static_cast<std::uint64_t>(-(1LL << 20)));
  CHECK(codec.encode(0.5 / (1 << 20)) == 1);  // round half away from zero
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto w = static_cast<std::uint64_t>(static_cast<std::int64_t>(rng.below(1ULL << 40)) -
                                              (1LL << 39));
    CHECK(codec.encode(codec.decode(w)) == w);
    const double x = rng.uniform(-1e5, 1e5);
    CHECK(std::abs(codec.decode(codec.encode(x)) - x) <= std::ldexp(1.0, -21));
  }
  CHECK_THROWS_AS(codec.encode(codec.max_magnitude() * 2), OverflowError);
  CHECK_THROWS_AS(codec.encode(std::nan("")), OverflowError);
}

TEST_CASE("seed dealing covers every pair and is deterministic") {
  CHECK(deal_pairwise_seeds(4, 1).pair_count() == 6);
  CHECK(deal_pairwise_seeds(2, 1).pair_count() == 1);
  CHECK(deal_pairwise_seeds(5, 9) == deal_pairwise_seeds(5, 9));
  CHECK_FALSE(deal_pairwise_seeds(5, 9) == deal_pairwise_seeds(5, 10));
  CHECK_THROWS_AS(deal_pairwise_seeds(1, 0), ConfigError);
  CHECK_THROWS_AS(deal_pairwise_seeds(0, 0), ConfigError);
  const auto s = deal_pairwise_seeds(4, 2);
  CHECK(s.seed(1, 3) == s.seed(3, 1));
}

TEST_CASE("masks telescope to zero for every stream") {
  for (std::size_t k : {2u, 3u, 4u, 5u, 8u, 13u}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto seeds = deal_pairwise_seeds(k, seed);
      for (auto fam : {MaskFamily::Sum, MaskFamily::Count, MaskFamily::Variance}) {
        std::uint64_t sum = 0;
        for (PartyId c = 0; c < k; ++c) sum += expand_mask(seeds, c, {fam, seed});
        CHECK(sum == 0);
      }
    }
  }
}

TEST_CASE("two parties hold opposite masks") {
  const auto seeds = deal_pairwise_seeds(2, 77);
  const MaskStream st{MaskFamily::Sum, 0};
  const auto r = prg_word(seeds.seed(0, 1), st);
  CHECK(expand_mask(seeds, 0, st) == r);
  CHECK(expand_mask(seeds, 1, st) == 0 - r);
  CHECK_THROWS_AS(expand_mask(seeds, 2, st), ProtocolError);
}

TEST_CASE("distinct streams give distinct masks") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10000 / 3 + 1; ++s) {
    for (auto fam : {MaskFamily::Sum, MaskFamily::Count, MaskFamily::Variance}) {
      seen.insert(prg_word(12345, {fam, s}));
    }
  }
  CHECK(seen.size() == 3 * (10000 / 3 + 1));
}

TEST_CASE("debug mode with one client and no masks leaves plaintext") {
  const PairwiseSeeds none(1, {});
  const FixedPointCodec codec;
  const auto c = make_client("a", 2, std::vector<double>(6, 0.0));
  const auto share = client_masked_stats(c, 0, none, codec);
  CHECK(share.masked_sum == 0);
  CHECK(share.masked_count == 6);  // n_k * d = 3 * 2
}

TEST_CASE("mean of symmetric and hand-computed federations") {
  const FixedPointCodec codec;
  {
    std::vector<ClientDataset> cs{make_client("a", 1, {5, 5, 5}), make_client("b", 1, {4, 6})};
    const auto seeds = deal_pairwise_seeds(2, 1);
    std::vector<MaskedShare> sh;
    for (PartyId c = 0; c < 2; ++c) sh.push_back(client_masked_stats(cs[c], c, seeds, codec));
    CHECK(server_aggregate_mean(sh, seeds, codec).mu == doctest::Approx(5.0).epsilon(1e-12));
  }
  {
    // sums {10, 20}, counts {2, 2}
    std::vector<ClientDataset> cs{make_client("a", 1, {4, 6}), make_client("b", 1, {9, 11})};
    const auto seeds = deal_pairwise_seeds(2, 5);
    std::vector<MaskedShare> sh;
    for (PartyId c = 0; c < 2; ++c) sh.push_back(client_masked_stats(cs[c], c, seeds, codec));
    const auto m = server_aggregate_mean(sh, seeds, codec);
    CHECK(m.mu == doctest::Approx(7.5).epsilon(1e-12));
    CHECK(m.n_total == 4);
  }
}

TEST_CASE("sigma of {0, 2} is 1") {
  std::vector<ClientDataset> cs{make_client("a", 1, {0}), make_client("b", 1, {2})};
  const auto st = secure_stats(cs, 3);
  CHECK(st.mu == doctest::Approx(1.0));
  CHECK(st.sigma == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("constant federation raises the zero-variance condition") {
  std::vector<ClientDataset> cs{make_client("a", 1, {3, 3}), make_client("b", 1, {3, 3, 3})};
  CHECK_THROWS_AS(secure_stats(cs, 1), ZeroVarianceError);
}

TEST_CASE("secure stats match the plaintext pooled oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cs = random_federation(rng, 4, 8);
    const auto st = secure_stats(cs, rng.next_u64());
    const auto ref = oracle::pooled(cs);
    CHECK(std::abs(st.mu - ref.mean) <= 1e-5);
    CHECK(std::abs(st.sigma - ref.std) / ref.std <= 1e-4);
  }
}

TEST_CASE("recovered sum is within per-term quantization of the plaintext sum") {
  Rng rng(9);
  const FixedPointCodec codec;
  for (int trial = 0; trial < 50; ++trial) {
    const auto cs = random_federation(rng, 3, 4);
    const auto seeds = deal_pairwise_seeds(3, rng.next_u64());
    std::uint64_t total = 0;
    double plain = 0.0;
    for (PartyId c = 0; c < 3; ++c) {
      total += client_masked_stats(cs[c], c, seeds, codec).masked_sum;
      for (double x : cs[c].samples) plain += x;
    }
    CHECK(std::abs(codec.decode(total) - plain) <= 3 * std::ldexp(1.0, -20));
  }
}

TEST_CASE("server refuses an incomplete, duplicated or mismatched share set") {
  Rng rng(1);
  const auto cs = random_federation(rng, 4, 2);
  const FixedPointCodec codec;
  const auto seeds = deal_pairwise_seeds(4, 8);
  std::vector<MaskedShare> sh;
  for (PartyId c = 0; c < 4; ++c) sh.push_back(client_masked_stats(cs[c], c, seeds, codec));
  std::vector<MaskedShare> three(sh.begin(), sh.begin() + 3);
  CHECK_THROWS_AS(server_aggregate_mean(three, seeds, codec), ProtocolError);
  auto dup = sh;
  dup[3] = dup[2];
  CHECK_THROWS_AS(server_aggregate_mean(dup, seeds, codec), ProtocolError);
  auto scaled = sh;
  scaled[1].scale_bits = 16;
  CHECK_THROWS_AS(server_aggregate_mean(scaled, seeds, codec), ProtocolError);
}

TEST_CASE("client overflow is detected") {
  FixedPointCodec codec;
  codec.scale_bits = 40;
  codec.headroom_bits = 4;  // bound 2^19
  const auto seeds = deal_pairwise_seeds(2, 1);
  const auto big = make_client("a", 1, std::vector<double>(10, 1e5));
  CHECK_THROWS_AS(client_masked_stats(big, 0, seeds, codec), OverflowError);
}

TEST_CASE("masked share and stats serialization") {
  MaskedShare s{3, 20, 0xdeadbeefULL, 42, 7};
  CHECK(MaskedShare::deserialize(s.serialize()) == s);
  s.masked_var.reset();
  CHECK(MaskedShare::deserialize(s.serialize()) == s);
  auto bytes = s.serialize();
  bytes[1] = 32;  // word size
  CHECK_THROWS_AS(MaskedShare::deserialize(bytes), ProtocolError);
  const GlobalStats g{1.25, 0.5, 99};
  CHECK(GlobalStats::deserialize(g.serialize()) == g);
}

TEST_CASE("a single masked sum is uncorrelated with its plaintext") {
  Rng rng(77);
  const FixedPointCodec codec;
  std::vector<double> plain, masked;
  for (int t = 0; t < 1000; ++t) {
    const double v = rng.uniform(-100.0, 100.0);
    const auto c = make_client("a", 1, {v});
    const auto other = make_client("b", 1, {0.0});
    const auto seeds = deal_pairwise_seeds(2, rng.next_u64());
    plain.push_back(v);
    masked.push_back(static_cast<double>(client_masked_stats(c, 0, seeds, codec).masked_sum));
  }
  auto mean = [](const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return s / xs.size();
  };
  const double mp = mean(plain), mm = mean(masked);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    sxy += (plain[i] - mp) * (masked[i] - mm);
    sxx += (plain[i] - mp) * (plain[i] - mp);
    syy += (masked[i] - mm) * (masked[i] - mm);
  }
  CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.1);
}

TEST_CASE("normalize_local, local_minmax and local_standardize") {
  const auto c = make_client("a", 1, {5.0, 3.0, 7.0});
  const auto id = normalize_local(c, GlobalStats{0.0, 1.0, 3});
  CHECK(id.samples == c.samples);
  CHECK(normalize_local(make_client("a", 1, {5.0}), GlobalStats{3.0, 2.0, 1}).samples[0] == 1.0);
  CHECK_THROWS_AS(normalize_local(c, GlobalStats{0.0, 0.0, 3}), ZeroVarianceError);

  CHECK(local_minmax(make_client("a", 1, {0.0, 10.0})).samples == std::vector<double>{0.0, 1.0});
  const auto unit = make_client("a", 1, {0.0, 0.25, 1.0});
  CHECK(local_minmax(unit).samples == unit.samples);
  CHECK_THROWS_AS(local_minmax(make_client("a", 1, {2.0, 2.0})), ZeroVarianceError);

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> xs(1 + rng.below(50) + 1);
    for (double& x : xs) x = rng.uniform(-1e3, 1e3) * rng.uniform();
    const auto out = local_minmax(make_client("a", 1, xs));
    const auto [lo, hi] = std::minmax_element(out.samples.begin(), out.samples.end());
    CHECK(*lo == 0.0);
    CHECK(*hi == 1.0);
  }
  const auto st = local_standardize(make_client("a", 1, {1.0, 2.0, 3.0, 4.0}));
  const auto m = oracle::pooled({st});
  CHECK(std::abs(m.mean) < 1e-12);
  CHECK(m.std == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("full protocol over the transport standardizes the federation") {
  Rng rng(31);
  for (auto mode : {NormalizationMode::SecureGlobal, NormalizationMode::MinMaxThenSecureGlobal}) {
    for (int trial = 0; trial < 10; ++trial) {
      auto cs = random_federation(rng, 4, 8);
      const auto orig = cs;
      TrustedDealer dealer(rng.next_u64());
      LoopbackTransport transport(true);
      const auto out = run_normalization(cs, mode, dealer, FixedPointCodec{}, transport);
      REQUIRE(out.stats);
      CHECK_FALSE(out.centering_only);
      const auto m = oracle::pooled(cs);
      CHECK(std::abs(m.mean) <= 1e-4);
      CHECK(std::abs(m.std - 1.0) <= 1e-4);
      // The returned maps reproduce the transform on the raw data.
      for (std::size_t k = 0; k < cs.size(); ++k) {
        for (std::size_t i = 0; i < cs[k].samples.size(); ++i) {
          CHECK(out.maps[k](orig[k].samples[i]) ==
                doctest::Approx(cs[k].samples[i]).epsilon(1e-9));
        }
      }
      // Two shares per client plus two broadcasts per client cross the wire.
      CHECK(transport.log().size() == 4 * cs.size());
    }
  }
}

TEST_CASE("local standardization needs no exchange") {
  Rng rng(8);
  auto cs = random_federation(rng, 3, 4);
  TrustedDealer dealer(1);
  LoopbackTransport transport(true);
  const auto out =
      run_normalization(cs, NormalizationMode::LocalStandardize, dealer, FixedPointCodec{}, transport);
  CHECK_FALSE(out.stats);
  CHECK(transport.log().empty());
  for (const auto& c : cs) {
    if (c.samples.size() < 2) continue;
    const auto m = oracle::pooled({c});
    CHECK(std::abs(m.mean) < 1e-9);
    CHECK(m.std == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("constant federation falls back to centering") {
  std::vector<ClientDataset> cs{make_client("a", 1, {2, 2}), make_client("b", 1, {2})};
  TrustedDealer dealer(1);
  LoopbackTransport transport;
  const auto out =
      run_normalization(cs, NormalizationMode::SecureGlobal, dealer, FixedPointCodec{}, transport);
  CHECK(out.centering_only);
  for (const auto& c : cs) {
    for (double x : c.samples) CHECK(std::abs(x) < 1e-6);
  }
}

TEST_CASE("normalization mode names round-trip") {
  for (auto m : {NormalizationMode::LocalStandardize, NormalizationMode::MinMaxThenSecureGlobal,
                 NormalizationMode::SecureGlobal}) {
    CHECK(parse_normalization_mode(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_normalization_mode("zscore"), ConfigError);
}
