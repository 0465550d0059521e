#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedeeg/dataset.hpp"
#include "fedeeg/eeg_pipeline.hpp"

namespace fedeeg {

enum class WaveformFamily { BandNoise, Bursts };

WaveformFamily parse_waveform_family(const std::string& name);
std::string to_string(WaveformFamily family);

// One sinusoidal component of a class signature.
struct SpectralMarker {
  double freq_hz = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
};

struct ClientProfile {
  std::string name;
  std::size_t n_segments = 0;  // before the 80/10/10 split
  double feature_shift = 0.0;
  double feature_scale = 1.0;
  double class_sep = 1.0;
  double preictal_frac = 0.5;
  WaveformFamily family = WaveformFamily::BandNoise;
  double noise_ar = 0.7;         // AR(1) coefficient of the background
  double burst_amplitude = 1.0;  // Bursts family only
  // Preictal segments carry +class_sep/2 times this waveform, interictal -class_sep/2.
  std::vector<SpectralMarker> signature;

  std::size_t n_train() const;
  std::size_t n_val() const;
  std::size_t n_test() const;
  void validate() const;
};

struct FederationSpec {
  std::vector<ClientProfile> profiles;
  std::size_t d = 256;
  double sample_rate_hz = 128.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClientSplits {
  ClientDataset train;
  ClientDataset val;
  ClientDataset test;
};

// Four sites with a size skew of roughly 13.6 : 1 : 1.8 : 1.35 and
// site-specific offsets, gains and class signatures.
FederationSpec default_federation(std::uint64_t seed = 0);

// The class-dependent waveform of one segment (before the affine distortion).
std::vector<double> signature_waveform(const ClientProfile& profile, std::size_t d, double rate_hz);

ClientDataset generate_client(const ClientProfile& profile, std::size_t d, std::uint64_t seed,
                              double rate_hz = 128.0);

// Contiguous 80/10/10 split. Throws ConfigError when any part would be empty.
ClientSplits split_80_10_10(const ClientDataset& data);

std::vector<ClientSplits> generate_federation(const FederationSpec& spec);

// Concatenation of the clients' test sets.
ClientDataset pooled_test_set(const std::vector<ClientSplits>& federation);

struct RecordingPlan {
  double duration_s = 4 * 3600.0;
  double input_rate_hz = 256.0;
  std::vector<SeizureAnnotation> seizures{{10800.0, 10860.0}};
  double common_amplitude = 2.0;  // shared reference signal present on both electrodes
  double ictal_amplitude = 4.0;
  double line_noise_amplitude = 0.5;  // 100 Hz interference removed by the low-pass
};

// Continuous two-electrode ("F3", "C3") recording whose F3-C3 difference
// follows the profile's generator: preictal spans carry the positive
// signature, all other time the negative one, ictal spans a large 3 Hz
// rhythm. Returns the recording with its annotations.
std::pair<RawRecording, std::vector<SeizureAnnotation>> synthesize_recording(
    const ClientProfile& profile, const RecordingPlan& plan, const StagePolicy& policy,
    std::uint64_t seed);

}  // namespace fedeeg
