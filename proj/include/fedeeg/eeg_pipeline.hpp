#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedeeg/dataset.hpp"

namespace fedeeg {

struct RawRecording {
  std::string patient_id;
  double sample_rate_hz = 0.0;
  std::map<std::string, std::vector<double>> channels;

  std::size_t num_samples() const;  // common channel length
  double duration_s() const { return static_cast<double>(num_samples()) / sample_rate_hz; }
  const std::vector<double>& channel(const std::string& name) const;
  // Throws DimensionError on ragged channels or a non-positive rate.
  void validate() const;
};

struct SeizureAnnotation {
  double onset_s = 0.0;
  double end_s = 0.0;
};

struct StagePolicy {
  double preictal_s = 3600.0;
  double postictal_s = 600.0;
  double segment_s = 2.0;
  double target_rate_hz = 128.0;
  double lowpass_hz = 64.0;
  double min_stride_frac = 0.05;  // overlap never exceeds 95%

  std::size_t segment_samples() const;  // d
  void validate() const;
};

enum class Stage : std::uint8_t { Interictal = 0, Preictal = 1, Ictal = 2, Postictal = 3 };

std::string to_string(Stage stage);

struct StageInterval {
  double start = 0.0;
  double end = 0.0;
  bool closed_start = true;
  bool closed_end = false;
  Stage stage = Stage::Interictal;
  bool truncated = false;  // preictal span shorter than the policy asks for

  bool contains(double t) const {
    return (closed_start ? t >= start : t > start) && (closed_end ? t <= end : t < end);
  }
};

struct LabeledSegment {
  std::vector<double> samples;
  std::uint8_t label = 0;  // 1 preictal, 0 interictal
  std::string patient_id;
  double start_s = 0.0;
  bool truncated_preictal = false;
};

// Channel a minus channel b. The result holds one channel named `out_name`
// (default "a-b").
RawRecording derive_bipolar(const RawRecording& rec, const std::string& a, const std::string& b,
                            std::string out_name = {});

// Windowed-sinc (Blackman) low-pass taps with unit DC gain. `cutoff` and
// `transition` are in Hz.
std::vector<double> design_lowpass(double cutoff_hz, double transition_hz, double rate_hz);

// Same-length linear-phase filtering with edge samples replicated.
std::vector<double> fir_filter(std::span<const double> x, std::span<const double> taps);

// Resamples by picking (integer ratio) or linearly interpolating input
// samples at multiples of 1 / out_rate.
std::vector<double> resample_linear(std::span<const double> x, double in_rate, double out_rate);

// Low-pass at policy.lowpass_hz then resample to policy.target_rate_hz.
// Input already at the target rate with a Nyquist cutoff passes through.
RawRecording lowpass_and_resample(const RawRecording& rec, const StagePolicy& policy);

// Sorts and checks annotations; throws ConfigError on overlap or range errors.
std::vector<SeizureAnnotation> validate_annotations(std::vector<SeizureAnnotation> ann,
                                                    double duration_s);

// Stage of one instant under the precedence ictal > postictal > preictal > interictal.
Stage stage_at(double t, std::span<const SeizureAnnotation> ann, const StagePolicy& policy);

// Disjoint intervals covering [0, duration_s] exactly, one stage each.
std::vector<StageInterval> label_timeline(double duration_s, std::vector<SeizureAnnotation> ann,
                                          const StagePolicy& policy);

struct SegmentationResult {
  std::vector<LabeledSegment> segments;
  std::size_t preictal_stride = 0;  // in samples
  std::size_t interictal_count = 0;
  std::size_t preictal_count = 0;
  bool balanced = false;  // false when the stride floor capped the preictal count
};

// Number of windows of `len` samples at `stride` that fit in [first, last_start].
std::size_t window_count(std::size_t first, std::size_t last_start, std::size_t stride);

// Windows a single-channel recording already at the target rate. Interictal
// spans use stride d, preictal spans the largest stride that reaches balance.
SegmentationResult segment_and_balance(const RawRecording& rec,
                                       std::span<const StageInterval> timeline,
                                       const StagePolicy& policy);

ClientDataset to_dataset(std::span<const LabeledSegment> segments, const std::string& client_id,
                         std::size_t dim);

// Binary recording container: "FEDEEGR1", u32 header length, JSON header
// {patient_id, sample_rate_hz, channels, num_samples}, then each channel as
// little-endian f64 in header order.
void write_recording(const std::filesystem::path& path, const RawRecording& rec);
RawRecording read_recording(const std::filesystem::path& path);

// Annotation sidecar: {"seizures": [{"onset_s": .., "end_s": ..}, ...]}
void write_annotations(const std::filesystem::path& path,
                       std::span<const SeizureAnnotation> ann);
std::vector<SeizureAnnotation> read_annotations(const std::filesystem::path& path);

}  // namespace fedeeg
