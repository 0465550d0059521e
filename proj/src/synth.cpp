#include "fedeeg/synth.hpp"

#include <cmath>
#include <numbers>

#include "fedeeg/error.hpp"
#include "fedeeg/rng.hpp"

namespace fedeeg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Label-independent high-beta bursts, away from every signature frequency
// used by the presets.
constexpr double kBurstLowHz = 30.0;
constexpr double kBurstHighHz = 45.0;
constexpr double kBurstWidthS = 0.15;

void add_burst(std::vector<double>& z, double amplitude, double rate_hz, Rng& rng) {
  const double span = static_cast<double>(z.size()) / rate_hz;
  const double centre = rng.uniform(0.0, span);
  const double f = rng.uniform(kBurstLowHz, kBurstHighHz);
  const double ph = rng.uniform(0.0, kTwoPi);
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double t = static_cast<double>(j) / rate_hz;
    const double u = (t - centre) / kBurstWidthS;
    z[j] += amplitude * std::exp(-0.5 * u * u) * std::sin(kTwoPi * f * t + ph);
  }
}

}  // namespace

WaveformFamily parse_waveform_family(const std::string& name) {
  if (name == "band_noise") return WaveformFamily::BandNoise;
  if (name == "bursts") return WaveformFamily::Bursts;
  throw ConfigError("waveform_family", "unknown family '" + name + "'");
}

std::string to_string(WaveformFamily family) {
  return family == WaveformFamily::Bursts ? "bursts" : "band_noise";
}

std::size_t ClientProfile::n_train() const { return n_segments * 8 / 10; }
std::size_t ClientProfile::n_val() const { return n_segments / 10; }
std::size_t ClientProfile::n_test() const { return n_segments - n_train() - n_val(); }

void ClientProfile::validate() const {
  const std::string who = "profile '" + name + "'";
  if (n_train() == 0 || n_val() == 0 || n_test() == 0) {
    throw ConfigError("n_segments", who + " is too small to split 80/10/10");
  }
  if (!std::isfinite(feature_shift)) throw ConfigError("feature_shift", who + " must be finite");
  if (!(feature_scale > 0.0) || !std::isfinite(feature_scale)) {
    throw ConfigError("feature_scale", who + " must be positive");
  }
  if (!(class_sep >= 0.0) || !std::isfinite(class_sep)) {
    throw ConfigError("class_sep", who + " must be nonnegative");
  }
  if (!(preictal_frac > 0.0 && preictal_frac < 1.0)) {
    throw ConfigError("preictal_frac", who + " must lie in (0, 1)");
  }
  if (!(std::abs(noise_ar) < 1.0)) throw ConfigError("noise_ar", who + " must lie in (-1, 1)");
  if (!std::isfinite(burst_amplitude)) throw ConfigError("burst_amplitude", who + " must be finite");
  for (const auto& m : signature) {
    if (!(m.freq_hz >= 0.0) || !std::isfinite(m.amplitude) || !std::isfinite(m.phase)) {
      throw ConfigError("signature", who + " has an invalid marker");
    }
  }
}

void FederationSpec::validate() const {
  if (profiles.empty()) throw ConfigError("profiles", "federation needs at least one client");
  if (d == 0) throw ConfigError("d", "must be positive");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample_rate_hz", "must be positive");
  for (const auto& p : profiles) {
    p.validate();
    for (const auto& m : p.signature) {
      if (m.freq_hz >= sample_rate_hz / 2.0) {
        throw ConfigError("signature", "marker at or above Nyquist in '" + p.name + "'");
      }
    }
  }
}

FederationSpec default_federation(std::uint64_t seed) {
  auto site = [](std::string name, std::size_t n, double shift, double scale,
                 std::vector<SpectralMarker> sig) {
    ClientProfile p;
    p.name = std::move(name);
    p.n_segments = n;
    p.feature_shift = shift;
    p.feature_scale = scale;
    p.class_sep = 0.35;
    p.preictal_frac = 0.5;
    p.noise_ar = 0.7;
    p.signature = std::move(sig);
    return p;
  };
  FederationSpec spec;
  spec.seed = seed;
  spec.profiles = {
      site("site_a", 54000, 0.0, 1.0, {{5.0, 1.0, 0.0}}),
      site("site_b", 4000, 0.5, 1.5, {{1.0, -1.5, 0.0}, {11.0, 1.2, 0.0}}),
      site("site_c", 7200, -0.5, 0.8, {{1.0, 2.0, 0.0}, {2.0, 2.0, 0.0}, {17.0, 0.3, 0.0}}),
      site("site_d", 5400, 1.0, 1.2, {{2.0, -1.5, 0.0}, {23.0, 1.2, 0.0}}),
  };
  return spec;
}

std::vector<double> signature_waveform(const ClientProfile& profile, std::size_t d, double rate_hz) {
  std::vector<double> w(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double t = static_cast<double>(j) / rate_hz;
    for (const auto& m : profile.signature) {
      w[j] += m.amplitude * std::numbers::sqrt2 * std::sin(kTwoPi * m.freq_hz * t + m.phase);
    }
  }
  return w;
}

ClientDataset generate_client(const ClientProfile& profile, std::size_t d, std::uint64_t seed,
                              double rate_hz) {
  profile.validate();
  if (d == 0) throw ConfigError("d", "must be positive");
  const auto tmpl = signature_waveform(profile, d, rate_hz);
  const double innov = std::sqrt(1.0 - profile.noise_ar * profile.noise_ar);
  Rng rng(seed);
  ClientDataset out;
  out.client_id = profile.name;
  out.dim = d;
  out.samples.reserve(profile.n_segments * d);
  out.labels.reserve(profile.n_segments);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < profile.n_segments; ++i) {
    const std::uint8_t y = rng.uniform() < profile.preictal_frac ? 1 : 0;
    z[0] = rng.normal();
    for (std::size_t j = 1; j < d; ++j) z[j] = profile.noise_ar * z[j - 1] + innov * rng.normal();
    if (profile.family == WaveformFamily::Bursts && rng.uniform() < 0.5) {
      add_burst(z, profile.burst_amplitude, rate_hz, rng);
    }
    const double c = (static_cast<double>(y) - 0.5) * profile.class_sep;
    for (std::size_t j = 0; j < d; ++j) {
      z[j] = profile.feature_shift + profile.feature_scale * (z[j] + c * tmpl[j]);
    }
    out.push_back(z, y);
  }
  return out;
}

ClientSplits split_80_10_10(const ClientDataset& data) {
  const std::size_t n = data.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  if (n_train == 0 || n_val == 0 || n - n_train - n_val == 0) {
    throw ConfigError("n_segments", "client '" + data.client_id + "' is too small to split");
  }
  auto range = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> idx(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) idx[i - lo] = i;
    return data.select(idx);
  };
  return {range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, n)};
}

std::vector<ClientSplits> generate_federation(const FederationSpec& spec) {
  spec.validate();
  std::vector<ClientSplits> out;
  out.reserve(spec.profiles.size());
  for (std::size_t k = 0; k < spec.profiles.size(); ++k) {
    const auto data =
        generate_client(spec.profiles[k], spec.d, derive_seed(spec.seed, k), spec.sample_rate_hz);
    out.push_back(split_80_10_10(data));
  }
  return out;
}

ClientDataset pooled_test_set(const std::vector<ClientSplits>& federation) {
  ClientDataset pooled;
  pooled.client_id = "pooled";
  for (const auto& c : federation) {
    if (pooled.dim == 0) pooled.dim = c.test.dim;
    if (c.test.dim != pooled.dim) throw DimensionError("clients disagree on d");
    pooled.samples.insert(pooled.samples.end(), c.test.samples.begin(), c.test.samples.end());
    pooled.labels.insert(pooled.labels.end(), c.test.labels.begin(), c.test.labels.end());
  }
  return pooled;
}

std::pair<RawRecording, std::vector<SeizureAnnotation>> synthesize_recording(
    const ClientProfile& profile, const RecordingPlan& plan, const StagePolicy& policy,
    std::uint64_t seed) {
  profile.validate();
  const double fs = plan.input_rate_hz;
  if (!(fs > 0.0) || !(plan.duration_s > 0.0)) {
    throw ConfigError("recording", "duration and rate must be positive");
  }
  const auto ann = validate_annotations(plan.seizures, plan.duration_s);
  const auto n = static_cast<std::size_t>(std::floor(plan.duration_s * fs));
  Rng rng(seed);
  const double rho = profile.noise_ar;
  const double innov = std::sqrt(1.0 - rho * rho);
  std::vector<double> f3(n), c3(n);
  double z = rng.normal();
  double common = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    if (i > 0) {
      z = rho * z + innov * rng.normal();
      common = 0.95 * common + std::sqrt(1.0 - 0.95 * 0.95) * rng.normal();
    }
    const Stage st = stage_at(t, ann, policy);
    double x = z;
    if (st == Stage::Ictal) {
      x += plan.ictal_amplitude * std::sin(kTwoPi * 3.0 * t);
    } else {
      double sig = 0.0;
      for (const auto& m : profile.signature) {
        sig += m.amplitude * std::numbers::sqrt2 * std::sin(kTwoPi * m.freq_hz * t + m.phase);
      }
      const double c = (st == Stage::Preictal ? 0.5 : -0.5) * profile.class_sep;
      x += c * sig;
    }
    x = profile.feature_shift + profile.feature_scale * x;
    const double ref = plan.common_amplitude * common;
    c3[i] = ref;
    f3[i] = ref + x + plan.line_noise_amplitude * std::sin(kTwoPi * 100.0 * t);
  }
  RawRecording rec{profile.name, fs, {}};
  rec.channels.emplace("F3", std::move(f3));
  rec.channels.emplace("C3", std::move(c3));
  return {std::move(rec), ann};
}

}  // namespace fedeeg
