// Acceptance criteria, one PASS/FAIL line each. Tolerances are pinned below.
//
//   acceptance            all criteria
//   acceptance c1 c5 ...  a subset
//
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "fedeeg/artifacts.hpp"
#include "fedeeg/eeg_pipeline.hpp"
#include "fedeeg/evaluation.hpp"
#include "fedeeg/experiment.hpp"
#include "fedeeg/fl_engine.hpp"
#include "fedeeg/rng.hpp"
#include "fedeeg/secure_norm.hpp"
#include "oracles.hpp"
#include "privacy_scan.hpp"
#include "scenarios.hpp"

using namespace fedeeg;

namespace {

// c2
constexpr double kMuAbsTol = 1e-5;
constexpr double kSigmaRelTol = 1e-4;
// c3
constexpr double kFdStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradRelFloor = 1e-6;  // denominator floor for near-zero coordinates
// c4
constexpr double kReductionTol = 1e-12;
constexpr double kCentralizedTol = 1e-9;
// c7
constexpr double kLocalOwnMin = 0.80;
constexpr double kLocalCrossMax = 0.65;
// c8
constexpr double kWeightedGapMin = 0.08;
constexpr double kMacroGainMin = 0.05;
constexpr double kPooledDriftMax = 0.03;
// c7-c9
constexpr std::size_t kSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pct(double v) { return fmt("%.1f", 100.0 * v); }

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

ClientDataset gaussian_client(Rng& rng, std::size_t n, std::size_t d, double shift, double scale) {
  ClientDataset c;
  c.client_id = "c";
  c.dim = d;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::uint8_t>(rng.below(2));
    std::vector<double> x(d);
    for (double& v : x) v = shift + scale * (rng.normal() + (y ? 0.5 : -0.5));
    c.push_back(x, y);
  }
  return c;
}

// --- c1 --------------------------------------------------------------------

Outcome mask_cancellation() {
  std::size_t checked = 0, nonzero = 0;
  for (std::size_t k : {2u, 3u, 4u, 8u}) {
    for (std::uint64_t dealing = 0; dealing < 100; ++dealing) {
      const auto seeds = deal_pairwise_seeds(k, derive_seed(k, dealing));
      for (auto family : {MaskFamily::Sum, MaskFamily::Count, MaskFamily::Variance}) {
        for (std::uint64_t session : {0u, 1u, 7u}) {
          const MaskStream stream{family, session};
          std::uint64_t sum = 0;
          for (std::size_t c = 0; c < k; ++c) {
            sum += expand_mask(seeds, static_cast<PartyId>(c), stream);
          }
          ++checked;
          nonzero += sum != 0;
        }
      }
    }
  }
  return {nonzero == 0, std::to_string(checked) + " streams, " + std::to_string(nonzero) +
                            " with a nonzero modular sum"};
}

// --- c2 --------------------------------------------------------------------

Outcome secure_vs_plaintext() {
  Rng rng(2024);
  double worst_mu = 0.0, worst_sigma = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ClientDataset> clients;
    const std::size_t d = 4 + rng.below(61);
    for (int k = 0; k < 4; ++k) {
      const std::size_t n = 1 + rng.below(k == 0 ? 2000 : 200);
      clients.push_back(gaussian_client(rng, n, d, rng.uniform(-50.0, 50.0), rng.uniform(0.1, 20.0)));
    }
    const auto truth = oracle::pooled(clients);
    TrustedDealer dealer(rng.next_u64());
    LoopbackTransport t;
    const auto out = run_normalization(clients, NormalizationMode::SecureGlobal, dealer,
                                       FixedPointCodec{}, t);
    worst_mu = std::max(worst_mu, std::abs(out.stats->mu - truth.mean));
    worst_sigma = std::max(worst_sigma, std::abs(out.stats->sigma - truth.std) / truth.std);
  }
  return {worst_mu <= kMuAbsTol && worst_sigma <= kSigmaRelTol,
          "max |mu err| " + fmt("%.2e", worst_mu) + " (tol " + fmt("%.0e", kMuAbsTol) +
              "), max sigma rel err " + fmt("%.2e", worst_sigma) + " (tol " +
              fmt("%.0e", kSigmaRelTol) + ")"};
}

// --- c3 --------------------------------------------------------------------

Outcome gradient_oracle() {
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(3, s));
    ModelConfig cfg;
    cfg.input_dim = 2 + rng.below(5);
    cfg.hidden_dims.clear();
    const auto layers = 1 + rng.below(2);
    for (std::size_t l = 0; l < layers; ++l) cfg.hidden_dims.push_back(1 + rng.below(6));
    const Mlp m(cfg);
    ParamVector w(m.param_count());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
    const std::size_t b = 1 + rng.below(12);
    std::vector<double> x(b * cfg.input_dim);
    for (double& v : x) v = rng.normal();
    std::vector<std::uint8_t> y(b);
    for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(2));
    const auto lg = m.loss_and_grad(w, Batch{MatrixView(x, b, cfg.input_dim), y});
    const auto fd = oracle::fd_gradient(std::vector<double>(w.values().begin(), w.values().end()),
                                        cfg.input_dim, cfg.hidden_dims, x, y, kFdStep);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double denom = std::max({std::abs(lg.grad[i]), std::abs(fd[i]), kGradRelFloor});
      worst = std::max(worst, std::abs(lg.grad[i] - fd[i]) / denom);
      ++coords;
    }
  }
  return {worst <= kGradRelTol, std::to_string(coords) + " coordinates, max rel err " +
                                    fmt("%.2e", worst) + " (tol " + fmt("%.0e", kGradRelTol) + ")"};
}

// --- c4 --------------------------------------------------------------------

Outcome aggregation_reductions() {
  const Mlp m(ModelConfig{5, {6}, 11, std::nullopt});
  auto cfg_for = [](Strategy s, std::size_t batch) {
    TrainConfig c;
    c.rounds = 10;
    c.local_epochs = 1;
    c.eta = 0.3;
    c.strategy = s;
    c.batch_size = batch;
    c.rng_seed = 5;
    return c;
  };
  auto train = [&](const std::vector<ClientDataset>& ds, const TrainConfig& cfg) {
    auto clients = make_clients(ds, cfg.rng_seed);
    LoopbackTransport t;
    return run_training(clients, cfg, m, m.init_params(), t);
  };
  Rng rng(44);
  double a = 0.0, b = 0.0, c = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    // (a) equal sizes, mini-batches
    std::vector<ClientDataset> equal;
    for (int k = 0; k < 4; ++k) equal.push_back(gaussian_client(rng, 24, 5, k * 0.3, 1.0));
    const auto wa = train(equal, cfg_for(Strategy::weighted(), 5));
    const auto ua = train(equal, cfg_for(Strategy::unweighted(), 5));
    for (std::size_t r = 0; r < 10; ++r) {
      a = std::max(a, max_abs_diff(wa.history[r].params, ua.history[r].params));
    }
    // (b) M = n_k, E = 1, full batch
    const std::size_t n = 10 + rng.below(20);
    std::vector<ClientDataset> same_n;
    for (int k = 0; k < 3; ++k) same_n.push_back(gaussian_client(rng, n, 5, -k * 0.4, 1.5));
    const auto rs = train(same_n, cfg_for(Strategy::random_subset(n), 1 << 20));
    const auto un = train(same_n, cfg_for(Strategy::unweighted(), 1 << 20));
    for (std::size_t r = 0; r < 10; ++r) {
      b = std::max(b, max_abs_diff(rs.history[r].params, un.history[r].params));
    }
    // (c) weighted full batch vs centralized pooled full-batch SGD
    std::vector<ClientDataset> skewed{gaussian_client(rng, 40, 5, 0.0, 1.0),
                                      gaussian_client(rng, 7, 5, 1.0, 2.0),
                                      gaussian_client(rng, 15, 5, -1.0, 0.5)};
    ClientDataset pooled;
    pooled.dim = 5;
    for (const auto& d : skewed) {
      for (std::size_t i = 0; i < d.size(); ++i) pooled.push_back(d.row(i), d.labels[i]);
    }
    const auto cfg = cfg_for(Strategy::weighted(), 1 << 20);
    const auto fed = train(skewed, cfg);
    ParamVector w = m.init_params();
    for (std::size_t r = 0; r < 10; ++r) {
      w = sgd_step(w, m.loss_and_grad(w, pooled.as_batch()).grad, cfg.eta);
      c = std::max(c, max_abs_diff(fed.history[r].params, w));
    }
  }
  return {a <= kReductionTol && b <= kReductionTol && c <= kCentralizedTol,
          "(a) " + fmt("%.1e", a) + " (b) " + fmt("%.1e", b) + " (tol " +
              fmt("%.0e", kReductionTol) + ") (c) " + fmt("%.1e", c) + " (tol " +
              fmt("%.0e", kCentralizedTol) + "), T=10"};
}

// --- c5 --------------------------------------------------------------------

Outcome auroc_oracle() {
  Rng rng(5);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    const double grid = trial % 4 == 0 ? 0.0 : static_cast<double>(2 + rng.below(30));
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = grid > 0 ? std::floor(rng.uniform() * grid) / grid : rng.uniform();
      y[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    // At least one of each class.
    const std::size_t i = rng.below(n);
    y[i] = 1;
    y[(i + 1 + rng.below(n - 1)) % n] = 0;
    mismatches += auroc(s, y) != oracle::pair_count_auroc(s, y).value();
  }
  return {mismatches == 0, "1000 instances (n <= 200, tied grids), " +
                               std::to_string(mismatches) + " inexact"};
}

// --- c6 --------------------------------------------------------------------

Outcome labeling() {
  Rng rng(6);
  const StagePolicy pol;
  std::size_t instants = 0, label_errors = 0, segments = 0, overlaps = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto sc = scenario::random_annotated(rng);
    const auto tl = label_timeline(sc.duration_s, sc.seizures, pol);
    auto lookup = [&](double t) {
      for (const auto& iv : tl) {
        if (iv.contains(t)) return static_cast<int>(iv.stage);
      }
      return -1;
    };
    for (double t = 0.0; t <= sc.duration_s; t += 1.0) {
      ++instants;
      label_errors +=
          lookup(t) != static_cast<int>(oracle::brute_stage(t, sc.seizures, pol.preictal_s,
                                                            pol.postictal_s));
    }
    RawRecording rec{"p", pol.target_rate_hz, {}};
    rec.channels.emplace("x", std::vector<double>(
                                  static_cast<std::size_t>(sc.duration_s * pol.target_rate_hz), 0.0));
    const auto res = segment_and_balance(rec, tl, pol);
    for (const auto& s : res.segments) {
      ++segments;
      for (const auto& a : sc.seizures) {
        // Segment [start, start + len) against ictal + postictal [onset, end + 600].
        overlaps += s.start_s <= a.end_s + pol.postictal_s && s.start_s + pol.segment_s > a.onset_s;
      }
    }
  }
  return {label_errors == 0 && overlaps == 0,
          std::to_string(instants) + " instants, " + std::to_string(label_errors) +
              " mislabeled; " + std::to_string(segments) + " segments, " +
              std::to_string(overlaps) + " touching ictal/postictal"};
}

// --- c7 --------------------------------------------------------------------

Outcome localized_gap(const ExperimentConfig& cfg) {
  const std::size_t k = cfg.federation.profiles.size();
  std::vector<double> own(k, 0.0), cross(k, 0.0);
  for (std::size_t r = 0; r < kSeeds; ++r) {
    const auto seed = repeat_seed(cfg, r);
    LoopbackTransport t;
    const auto fed = prepare_federation(cfg, seed, t);
    const auto lb = run_local_baselines(fed, cfg, seed);
    for (std::size_t a = 0; a < k; ++a) {
      own[a] += lb.own(a) / kSeeds;
      cross[a] += lb.cross_macro(a) / kSeeds;
    }
  }
  bool ok = true;
  std::string detail;
  for (std::size_t a = 0; a < k; ++a) {
    ok = ok && own[a] >= kLocalOwnMin && cross[a] <= kLocalCrossMax;
    detail += cfg.federation.profiles[a].name + " own " + pct(own[a]) + " cross " + pct(cross[a]) +
              (a + 1 < k ? ", " : "");
  }
  return {ok, detail + " (need own >= " + pct(kLocalOwnMin) + ", cross <= " + pct(kLocalCrossMax) + ")"};
}

// --- c8 / c9 ---------------------------------------------------------------

const SweepRow* find_row(const SweepResult& res, const std::string& label) {
  for (const auto& row : res.rows) {
    if (row.label == label) return &row;
  }
  return nullptr;
}

std::string middle_label(const ExperimentConfig& cfg) {
  return "M=" + std::to_string(cfg.sweep[cfg.sweep.size() / 2]);
}

Outcome fairness_gap(const ExperimentConfig& cfg, const SweepResult& res) {
  const auto* w = find_row(res, "weighted");
  const auto* rs = find_row(res, middle_label(cfg));
  if (!w || !rs) return {false, "sweep rows missing"};
  const double w_pooled = w->summary.pooled.accuracy.mean;
  const double w_macro = w->summary.macro.accuracy.mean;
  const double rs_pooled = rs->summary.pooled.accuracy.mean;
  const double rs_macro = rs->summary.macro.accuracy.mean;
  const double gap = w_pooled - w_macro;
  const bool ok = gap >= kWeightedGapMin && rs_macro >= w_macro + kMacroGainMin &&
                  std::abs(rs_pooled - w_pooled) <= kPooledDriftMax;
  return {ok, "weighted pooled " + pct(w_pooled) + " macro " + pct(w_macro) + " (gap " + pct(gap) +
                  " >= " + pct(kWeightedGapMin) + "); " + rs->label + " macro " + pct(rs_macro) +
                  " (>= " + pct(w_macro + kMacroGainMin) + ") pooled " + pct(rs_pooled) +
                  " (|d| " + pct(std::abs(rs_pooled - w_pooled)) + " <= " + pct(kPooledDriftMax) + ")"};
}

Outcome sweep_shape(const ExperimentConfig& cfg, const SweepResult& res) {
  const auto* lo = find_row(res, "M=" + std::to_string(cfg.sweep.front()));
  const auto* mid = find_row(res, middle_label(cfg));
  const auto* hi = find_row(res, "M=" + std::to_string(cfg.sweep.back()));
  if (!lo || !mid || !hi) return {false, "sweep rows missing"};
  std::string curve;
  for (const auto& row : res.rows) {
    if (row.strategy.kind != Strategy::Kind::RandomSubset) continue;
    curve += (curve.empty() ? "" : ", ") + row.label + " " + pct(row.summary.macro.accuracy.mean);
  }
  const double m = mid->summary.macro.accuracy.mean;
  return {m > lo->summary.macro.accuracy.mean && m > hi->summary.macro.accuracy.mean,
          "macro accuracy " + curve};
}

// --- c10 -------------------------------------------------------------------

Outcome privacy_boundary(const ExperimentConfig& cfg) {
  const auto seed = repeat_seed(cfg, 0);
  LoopbackTransport t(true);
  const auto fed = prepare_federation(cfg, seed, t);
  const auto run = run_strategy(fed, cfg, cfg.train.strategy, seed, t, {false, {}});

  // Index the raw (pre-normalization) rows and the normalized rows.
  privacy::SegmentScanner scanner;
  FederationSpec spec = cfg.federation;
  spec.seed = RunSeeds::derive(seed).federation;
  for (const auto& c : generate_federation(spec)) {
    scanner.index(c.train);
    scanner.index(c.val);
    scanner.index(c.test);
  }
  for (const auto& c : fed.clients) {
    scanner.index(c.train);
    scanner.index(c.val);
    scanner.index(c.test);
  }

  const Mlp model(cfg.model_config(RunSeeds::derive(seed).model));
  std::size_t bytes = 0, hits = 0, unexpected = 0;
  std::size_t kinds[5] = {};
  for (const auto& e : t.log()) {
    bytes += e.bytes.size();
    hits += scanner.hits(e.bytes);
    const auto msg = RoundMessage::decode(e.bytes);
    ++kinds[static_cast<int>(msg.kind)];
    try {
      switch (msg.kind) {
        case MessageKind::Broadcast:
        case MessageKind::ClientUpdate:
          unexpected += ParamVector::deserialize(msg.payload).size() != model.param_count();
          break;
        case MessageKind::MaskedStatShare: MaskedShare::deserialize(msg.payload); break;
        case MessageKind::StatBroadcast: GlobalStats::deserialize(msg.payload); break;
      }
    } catch (const std::exception&) {
      ++unexpected;
    }
  }
  // Positive control: one row planted mid-payload at an odd offset must be found.
  std::vector<std::uint8_t> planted(4099, 0x5a);
  const auto row = fed.clients[1].train.row(3);
  std::memcpy(planted.data() + 1001, row.data(), row.size() * sizeof(double));
  const bool control = scanner.hits(planted) > 0;

  const bool ok = hits == 0 && unexpected == 0 && control && run.training.rejected.empty();
  return {ok, std::to_string(t.log().size()) + " messages (" + fmt("%.1f", bytes / 1e6) +
                  " MB): " + std::to_string(kinds[1]) + " broadcasts, " + std::to_string(kinds[2]) +
                  " updates, " + std::to_string(kinds[3]) + " masked shares, " +
                  std::to_string(kinds[4]) + " stat broadcasts; " + std::to_string(hits) +
                  " raw-segment matches over " + std::to_string(scanner.indexed()) +
                  " indexed windows; planted row " + (control ? "detected" : "MISSED")};
}

// --- c11 -------------------------------------------------------------------

Outcome determinism() {
#ifdef FEDEEG_CLI_PATH
  ExperimentConfig cfg;
  cfg.train.rounds = 5;
  cfg.repeats = 2;
  const auto dir = std::filesystem::temp_directory_path() / "fedeeg_acceptance_c11";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", cfg.to_json().dump(2));
  // Same config, same output directory, run twice; the embedded config
  // includes output_dir, so a second directory would be a different config.
  std::vector<std::string> hashes;
  for (int run = 0; run < 2; ++run) {
    const std::string cmd = std::string("FEDEEG_LOG=error \"") + FEDEEG_CLI_PATH + "\" sweep --config \"" +
                            (dir / "config.json").string() + "\" --out \"" + (dir / "out").string() +
                            "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "sweep run " + std::to_string(run) + " failed"};
    std::string h;
    for (const char* f : {"sweep.csv", "local_baselines.csv", "summary.md"}) {
      h += content_hash(read_bytes(dir / "out" / "sweep" / f)) + " ";
    }
    hashes.push_back(h);
  }
  const auto csv = read_bytes(dir / "out" / "sweep" / "sweep.csv");
  std::filesystem::remove_all(dir);
  return {hashes[0] == hashes[1],
          "two CLI sweeps (T=5, 2 repeats): sweep.csv " + std::to_string(csv.size()) + " bytes, " +
              (hashes[0] == hashes[1] ? "byte-identical" : "DIFFERENT") +
              " (also local_baselines.csv, summary.md)"};
#else
  return {false, "built without the CLI"};
#endif
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const std::string& id) { return only.empty() || only.count(id); };
  const ExperimentConfig cfg;  // default preset
  int failed = 0;
  auto report = [&](const std::string& id, const std::string& name, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("[%s] %-3s %-32s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id.c_str(), name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report("c1", "mask cancellation", mask_cancellation);
  report("c2", "secure vs plaintext normalization", secure_vs_plaintext);
  report("c3", "gradient oracle", gradient_oracle);
  report("c4", "aggregation reductions", aggregation_reductions);
  report("c5", "AUROC oracle", auroc_oracle);
  report("c6", "labeling correctness", labeling);
  report("c7", "localized-learning gap", [&] { return localized_gap(cfg); });

  if (wanted("c8") || wanted("c9")) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig sweep_cfg = cfg;
    sweep_cfg.repeats = kSeeds;
    SweepResult res;
    std::string error;
    try {
      res = run_sweep(sweep_cfg);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("      shared sweep: %zu rows x %zu seeds in %.1f s\n", res.rows.size(), kSeeds, secs);
    auto guarded = [&](auto fn) {
      return [&, fn] { return error.empty() ? fn(sweep_cfg, res) : Outcome{false, "sweep threw: " + error}; };
    };
    report("c8", "fairness gap", guarded(fairness_gap));
    report("c9", "M-sweep shape", guarded(sweep_shape));
  }
  report("c10", "privacy boundary", [&] { return privacy_boundary(cfg); });
  report("c11", "determinism", determinism);
  std::printf("%d failed\n", failed);
  return failed;
}
