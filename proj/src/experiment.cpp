#include "fedeeg/experiment.hpp"

#include <algorithm>
#include <memory>
#include <set>
#include <type_traits>

#include "fedeeg/error.hpp"
#include "fedeeg/rng.hpp"

namespace fedeeg {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
    }
  }
}

bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <typename T>
void read(const json& j, const char* key, const std::string& path, T& out) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  const auto field = path.empty() ? std::string(key) : path + "." + key;
  if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    if (!it->is_array()) throw ConfigError(field, "expected an array");
    for (const auto& v : *it) {
      if (!non_negative_integer(v)) throw ConfigError(field, "expected non-negative integers");
    }
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!non_negative_integer(*it)) throw ConfigError(field, "expected a non-negative integer");
  }
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

ojson profile_json(const ClientProfile& p) {
  ojson sig = ojson::array();
  for (const auto& m : p.signature) {
    sig.push_back({{"freq_hz", m.freq_hz}, {"amplitude", m.amplitude}, {"phase", m.phase}});
  }
  return {{"name", p.name},
          {"n_segments", p.n_segments},
          {"feature_shift", p.feature_shift},
          {"feature_scale", p.feature_scale},
          {"class_sep", p.class_sep},
          {"preictal_frac", p.preictal_frac},
          {"waveform_family", to_string(p.family)},
          {"noise_ar", p.noise_ar},
          {"burst_amplitude", p.burst_amplitude},
          {"signature", sig}};
}

ClientProfile profile_from_json(const json& j, const std::string& path) {
  check_keys(j,
             {"name", "n_segments", "feature_shift", "feature_scale", "class_sep", "preictal_frac",
              "waveform_family", "noise_ar", "burst_amplitude", "signature"},
             path);
  ClientProfile p;
  read(j, "name", path, p.name);
  read(j, "n_segments", path, p.n_segments);
  read(j, "feature_shift", path, p.feature_shift);
  read(j, "feature_scale", path, p.feature_scale);
  read(j, "class_sep", path, p.class_sep);
  read(j, "preictal_frac", path, p.preictal_frac);
  std::string family = to_string(p.family);
  read(j, "waveform_family", path, family);
  p.family = parse_waveform_family(family);
  read(j, "noise_ar", path, p.noise_ar);
  read(j, "burst_amplitude", path, p.burst_amplitude);
  if (const auto it = j.find("signature"); it != j.end()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string mp = path + ".signature[" + std::to_string(i) + "]";
      const auto& m = (*it)[i];
      check_keys(m, {"freq_hz", "amplitude", "phase"}, mp);
      SpectralMarker mk;
      read(m, "freq_hz", mp, mk.freq_hz);
      read(m, "amplitude", mp, mk.amplitude);
      read(m, "phase", mp, mk.phase);
      p.signature.push_back(mk);
    }
  }
  return p;
}

std::shared_ptr<const ClientDataset> share(const ClientDataset& d) {
  return std::make_shared<const ClientDataset>(d);
}

}  // namespace

TrainConfig ExperimentConfig::default_train() {
  TrainConfig t;
  t.rounds = 50;
  t.local_epochs = 1;
  t.eta = 0.02;
  t.batch_size = 16;
  t.strategy = Strategy::weighted();
  return t;
}

ModelConfig ExperimentConfig::model_config(std::uint64_t model_seed) const {
  ModelConfig m;
  m.input_dim = federation.d;
  m.hidden_dims = hidden_dims;
  m.seed = model_seed;
  m.init_scale = init_scale;
  return m;
}

void ExperimentConfig::validate() const {
  federation.validate();
  codec.validate();
  model_config(0).validate();
  train.validate();
  if (repeats == 0) throw ConfigError("repeats", "must be >= 1");
  if (local_epochs == 0) throw ConfigError("local_baseline.epochs", "must be >= 1");
  std::size_t min_train = SIZE_MAX;
  for (const auto& p : federation.profiles) min_train = std::min(min_train, p.n_train());
  if (train.strategy.kind == Strategy::Kind::RandomSubset &&
      train.strategy.subset_size > min_train) {
    throw ConfigError("train.subset_size", "M = " + std::to_string(train.strategy.subset_size) +
                                               " exceeds min_k n_k = " + std::to_string(min_train));
  }
  for (std::size_t m : sweep) {
    if (m == 0 || m > min_train) {
      throw ConfigError("sweep.subset_sizes", "M = " + std::to_string(m) +
                                                  " must lie in [1, min_k n_k = " +
                                                  std::to_string(min_train) + "]");
    }
  }
  for (const auto& b : baselines) {
    const auto s = Strategy::parse(b, 1);
    if (s.kind == Strategy::Kind::RandomSubset) {
      throw ConfigError("sweep.baselines", "use subset_sizes for random_subset");
    }
  }
  preprocess.policy.validate();
}

ojson ExperimentConfig::to_json() const {
  ojson profiles = ojson::array();
  for (const auto& p : federation.profiles) profiles.push_back(profile_json(p));
  ojson seizures = ojson::array();
  for (const auto& s : preprocess.plan.seizures) {
    seizures.push_back({{"onset_s", s.onset_s}, {"end_s", s.end_s}});
  }
  const auto& pol = preprocess.policy;
  const auto& plan = preprocess.plan;
  ojson j;
  j["seed"] = seed;
  j["repeats"] = repeats;
  j["output_dir"] = output_dir;
  j["normalization"] = to_string(normalization);
  j["fixed_point"] = {{"scale_bits", codec.scale_bits}, {"headroom_bits", codec.headroom_bits}};
  j["federation"] = {{"d", federation.d},
                     {"sample_rate_hz", federation.sample_rate_hz},
                     {"profiles", profiles}};
  j["model"] = {{"hidden_dims", hidden_dims},
                {"init_scale", init_scale ? ojson(*init_scale) : ojson(nullptr)}};
  j["train"] = {{"rounds", train.rounds},
                {"local_epochs", train.local_epochs},
                {"eta", train.eta},
                {"batch_size", train.batch_size},
                {"strategy", train.strategy.name()},
                {"subset_size", train.strategy.subset_size}};
  j["local_baseline"] = {{"epochs", local_epochs}};
  j["sweep"] = {{"subset_sizes", sweep}, {"baselines", baselines}};
  j["preprocess"] = {{"preictal_s", pol.preictal_s},
                     {"postictal_s", pol.postictal_s},
                     {"segment_s", pol.segment_s},
                     {"target_rate_hz", pol.target_rate_hz},
                     {"lowpass_hz", pol.lowpass_hz},
                     {"min_stride_frac", pol.min_stride_frac},
                     {"input_rate_hz", plan.input_rate_hz},
                     {"duration_s", plan.duration_s},
                     {"seizures", seizures},
                     {"common_amplitude", plan.common_amplitude},
                     {"ictal_amplitude", plan.ictal_amplitude},
                     {"line_noise_amplitude", plan.line_noise_amplitude},
                     {"channel_a", preprocess.channel_a},
                     {"channel_b", preprocess.channel_b}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j,
             {"seed", "repeats", "output_dir", "normalization", "fixed_point", "federation",
              "model", "train", "local_baseline", "sweep", "preprocess"},
             "");
  ExperimentConfig c;
  read(j, "seed", "", c.seed);
  read(j, "repeats", "", c.repeats);
  read(j, "output_dir", "", c.output_dir);
  std::string norm = to_string(c.normalization);
  read(j, "normalization", "", norm);
  c.normalization = parse_normalization_mode(norm);

  if (const auto it = j.find("fixed_point"); it != j.end()) {
    check_keys(*it, {"scale_bits", "headroom_bits"}, "fixed_point");
    read(*it, "scale_bits", "fixed_point", c.codec.scale_bits);
    read(*it, "headroom_bits", "fixed_point", c.codec.headroom_bits);
  }
  if (const auto it = j.find("federation"); it != j.end()) {
    check_keys(*it, {"d", "sample_rate_hz", "profiles"}, "federation");
    read(*it, "d", "federation", c.federation.d);
    read(*it, "sample_rate_hz", "federation", c.federation.sample_rate_hz);
    if (const auto p = it->find("profiles"); p != it->end()) {
      c.federation.profiles.clear();
      for (std::size_t i = 0; i < p->size(); ++i) {
        c.federation.profiles.push_back(
            profile_from_json((*p)[i], "federation.profiles[" + std::to_string(i) + "]"));
      }
    }
  }
  if (const auto it = j.find("model"); it != j.end()) {
    check_keys(*it, {"hidden_dims", "init_scale"}, "model");
    read(*it, "hidden_dims", "model", c.hidden_dims);
    if (const auto s = it->find("init_scale"); s != it->end() && !s->is_null()) {
      double v = 0.0;
      read(*it, "init_scale", "model", v);
      c.init_scale = v;
    }
  }
  if (const auto it = j.find("train"); it != j.end()) {
    check_keys(*it, {"rounds", "local_epochs", "eta", "batch_size", "strategy", "subset_size"},
               "train");
    read(*it, "rounds", "train", c.train.rounds);
    read(*it, "local_epochs", "train", c.train.local_epochs);
    read(*it, "eta", "train", c.train.eta);
    read(*it, "batch_size", "train", c.train.batch_size);
    std::string name = c.train.strategy.name();
    std::size_t m = c.train.strategy.subset_size;
    read(*it, "strategy", "train", name);
    read(*it, "subset_size", "train", m);
    c.train.strategy = Strategy::parse(name, m);
  }
  if (const auto it = j.find("local_baseline"); it != j.end()) {
    check_keys(*it, {"epochs"}, "local_baseline");
    read(*it, "epochs", "local_baseline", c.local_epochs);
  }
  if (const auto it = j.find("sweep"); it != j.end()) {
    check_keys(*it, {"subset_sizes", "baselines"}, "sweep");
    read(*it, "subset_sizes", "sweep", c.sweep);
    read(*it, "baselines", "sweep", c.baselines);
  }
  if (const auto it = j.find("preprocess"); it != j.end()) {
    const std::string p = "preprocess";
    check_keys(*it,
               {"preictal_s", "postictal_s", "segment_s", "target_rate_hz", "lowpass_hz",
                "min_stride_frac", "input_rate_hz", "duration_s", "seizures", "common_amplitude",
                "ictal_amplitude", "line_noise_amplitude", "channel_a", "channel_b"},
               p);
    auto& pol = c.preprocess.policy;
    auto& plan = c.preprocess.plan;
    read(*it, "preictal_s", p, pol.preictal_s);
    read(*it, "postictal_s", p, pol.postictal_s);
    read(*it, "segment_s", p, pol.segment_s);
    read(*it, "target_rate_hz", p, pol.target_rate_hz);
    read(*it, "lowpass_hz", p, pol.lowpass_hz);
    read(*it, "min_stride_frac", p, pol.min_stride_frac);
    read(*it, "input_rate_hz", p, plan.input_rate_hz);
    read(*it, "duration_s", p, plan.duration_s);
    read(*it, "common_amplitude", p, plan.common_amplitude);
    read(*it, "ictal_amplitude", p, plan.ictal_amplitude);
    read(*it, "line_noise_amplitude", p, plan.line_noise_amplitude);
    read(*it, "channel_a", p, c.preprocess.channel_a);
    read(*it, "channel_b", p, c.preprocess.channel_b);
    if (const auto s = it->find("seizures"); s != it->end()) {
      plan.seizures.clear();
      for (std::size_t i = 0; i < s->size(); ++i) {
        const std::string sp = p + ".seizures[" + std::to_string(i) + "]";
        check_keys((*s)[i], {"onset_s", "end_s"}, sp);
        SeizureAnnotation a;
        read((*s)[i], "onset_s", sp, a.onset_s);
        read((*s)[i], "end_s", sp, a.end_s);
        plan.seizures.push_back(a);
      }
    }
  }
  c.validate();
  return c;
}

RunSeeds RunSeeds::derive(std::uint64_t run_seed) {
  return {derive_seed(run_seed, 1), derive_seed(run_seed, 2), derive_seed(run_seed, 3),
          derive_seed(run_seed, 4)};
}

std::uint64_t repeat_seed(const ExperimentConfig& cfg, std::size_t repeat) {
  return derive_seed(cfg.seed, repeat);
}

std::vector<ClientDataset> PreparedFederation::train_sets() const {
  std::vector<ClientDataset> out;
  for (const auto& c : clients) out.push_back(c.train);
  return out;
}

std::vector<ClientDataset> PreparedFederation::test_sets() const {
  std::vector<ClientDataset> out;
  for (const auto& c : clients) out.push_back(c.test);
  return out;
}

std::size_t PreparedFederation::min_train_size() const {
  std::size_t m = SIZE_MAX;
  for (const auto& c : clients) m = std::min(m, c.train.size());
  return m;
}

PreparedFederation normalize_federation(std::vector<ClientSplits> clients,
                                        NormalizationMode mode, const FixedPointCodec& codec,
                                        std::uint64_t key_seed, Transport& transport) {
  std::vector<ClientDataset> train;
  train.reserve(clients.size());
  for (auto& c : clients) train.push_back(std::move(c.train));
  TrustedDealer dealer(key_seed);
  PreparedFederation fed;
  fed.normalization = run_normalization(train, mode, dealer, codec, transport);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto& map = fed.normalization.maps[k];
    fed.clients.push_back({std::move(train[k]), apply_affine(std::move(clients[k].val), map),
                           apply_affine(std::move(clients[k].test), map)});
  }
  return fed;
}

PreparedFederation prepare_federation(const ExperimentConfig& cfg, std::uint64_t run_seed,
                                      Transport& transport) {
  const auto seeds = RunSeeds::derive(run_seed);
  FederationSpec spec = cfg.federation;
  spec.seed = seeds.federation;
  return normalize_federation(generate_federation(spec), cfg.normalization, cfg.codec, seeds.keys,
                              transport);
}

StrategyRun run_strategy(const PreparedFederation& fed, const ExperimentConfig& cfg,
                         const Strategy& strategy, std::uint64_t run_seed, Transport& transport,
                         const TrainOptions& options) {
  const auto seeds = RunSeeds::derive(run_seed);
  const Mlp model(cfg.model_config(seeds.model));
  TrainConfig tc = cfg.train;
  tc.strategy = strategy;
  tc.rng_seed = seeds.train;
  auto clients = make_clients(fed.train_sets(), tc.rng_seed);
  StrategyRun run{strategy, {}, {}};
  run.training = run_training(clients, tc, model, model.init_params(), transport, options);
  run.report = evaluate_global(model, run.training.params, fed.test_sets());
  return run;
}

double LocalBaseline::cross_macro(std::size_t k) const {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 0; j < accuracy[k].size(); ++j) {
    if (j == k) continue;
    s += accuracy[k][j];
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

LocalBaseline run_local_baselines(const PreparedFederation& fed, const ExperimentConfig& cfg,
                                  std::uint64_t run_seed) {
  const auto seeds = RunSeeds::derive(run_seed);
  const Mlp model(cfg.model_config(seeds.model));
  const ParamVector initial = model.init_params();
  TrainConfig tc = cfg.train;
  tc.local_epochs = cfg.local_epochs;
  tc.strategy = Strategy::weighted();
  LocalBaseline out;
  const std::size_t k = fed.clients.size();
  for (std::size_t a = 0; a < k; ++a) {
    out.clients.push_back(fed.clients[a].train.client_id);
    ClientState st(static_cast<PartyId>(a), share(fed.clients[a].train),
                   derive_seed(seeds.train, 1000 + a));
    const ParamVector w = client_local_update(st, initial, tc, model);
    std::vector<double> row;
    for (std::size_t b = 0; b < k; ++b) {
      const auto& t = fed.clients[b].test;
      row.push_back(accuracy(confusion(model.forward(w, t.inputs()), t.labels)));
    }
    out.accuracy.push_back(std::move(row));
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  SweepResult res;
  for (const auto& b : cfg.baselines) res.rows.push_back({b, Strategy::parse(b), {}, {}});
  for (std::size_t m : cfg.sweep) {
    res.rows.push_back({"M=" + std::to_string(m), Strategy::random_subset(m), {}, {}});
  }
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const auto run_seed = repeat_seed(cfg, r);
    LoopbackTransport transport;
    const auto fed = prepare_federation(cfg, run_seed, transport);
    TrainOptions opts;
    opts.keep_params = false;
    for (auto& row : res.rows) {
      row.runs.push_back(run_strategy(fed, cfg, row.strategy, run_seed, transport, opts).report);
    }
  }
  for (auto& row : res.rows) row.summary = summarize_runs(row.runs);
  return res;
}

}  // namespace fedeeg
