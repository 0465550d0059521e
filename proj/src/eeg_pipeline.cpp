#include "fedeeg/eeg_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <json.hpp>

#include "fedeeg/artifacts.hpp"
#include "fedeeg/bytes.hpp"
#include "fedeeg/error.hpp"

namespace fedeeg {

using json = nlohmann::json;

std::size_t RawRecording::num_samples() const {
  return channels.empty() ? 0 : channels.begin()->second.size();
}

const std::vector<double>& RawRecording::channel(const std::string& name) const {
  const auto it = channels.find(name);
  if (it == channels.end()) {
    throw ConfigError("channel", "recording '" + patient_id + "' has no channel '" + name + "'");
  }
  return it->second;
}

void RawRecording::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw DimensionError("sample rate must be positive");
  }
  const std::size_t n = num_samples();
  for (const auto& [name, xs] : channels) {
    if (xs.size() != n) throw DimensionError("channel '" + name + "' length differs");
  }
}

std::size_t StagePolicy::segment_samples() const {
  return static_cast<std::size_t>(std::llround(segment_s * target_rate_hz));
}

void StagePolicy::validate() const {
  if (!(preictal_s > 0.0)) throw ConfigError("preictal_s", "must be positive");
  if (!(postictal_s > 0.0)) throw ConfigError("postictal_s", "must be positive");
  if (!(segment_s > 0.0)) throw ConfigError("segment_s", "must be positive");
  if (!(target_rate_hz > 0.0)) throw ConfigError("target_rate_hz", "must be positive");
  if (!(lowpass_hz > 0.0) || lowpass_hz > target_rate_hz / 2.0) {
    throw ConfigError("lowpass_hz", "must lie in (0, target_rate_hz / 2]");
  }
  const double d = segment_s * target_rate_hz;
  if (d < 1.0 || std::abs(d - std::round(d)) > 1e-9) {
    throw ConfigError("segment_s", "segment_s * target_rate_hz must be a positive integer");
  }
  if (!(min_stride_frac > 0.0) || min_stride_frac > 1.0) {
    throw ConfigError("min_stride_frac", "must lie in (0, 1]");
  }
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Interictal: return "interictal";
    case Stage::Preictal: return "preictal";
    case Stage::Ictal: return "ictal";
    case Stage::Postictal: return "postictal";
  }
  return "unknown";
}

RawRecording derive_bipolar(const RawRecording& rec, const std::string& a, const std::string& b,
                            std::string out_name) {
  rec.validate();
  const auto& xa = rec.channel(a);
  const auto& xb = rec.channel(b);
  std::vector<double> out(xa.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xa[i] - xb[i];
  RawRecording r{rec.patient_id, rec.sample_rate_hz, {}};
  r.channels.emplace(out_name.empty() ? a + "-" + b : std::move(out_name), std::move(out));
  return r;
}

std::vector<double> design_lowpass(double cutoff_hz, double transition_hz, double rate_hz) {
  if (!(cutoff_hz > 0.0) || !(transition_hz > 0.0) || cutoff_hz >= rate_hz / 2.0) {
    throw ConfigError("lowpass_hz", "cutoff must lie in (0, rate / 2)");
  }
  // Blackman main-lobe width is about 5.5 / N in cycles per sample; sidelobes
  // sit near -74 dB.
  auto n = static_cast<std::size_t>(std::ceil(5.5 * rate_hz / transition_hz));
  if (n % 2 == 0) ++n;
  const double fc = cutoff_hz / rate_hz;
  const double mid = static_cast<double>(n - 1) / 2.0;
  std::vector<double> h(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = static_cast<double>(i) - mid;
    const double sinc = m == 0.0 ? 2.0 * fc
                                 : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    const double w = 0.42 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1)) +
                     0.08 * std::cos(4.0 * std::numbers::pi * i / (n - 1));
    h[i] = sinc * w;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

std::vector<double> fir_filter(std::span<const double> x, std::span<const double> taps) {
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  if (n == 0) return y;
  const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(taps.size()); ++k) {
      const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i + half - k, 0, last);
      acc += taps[k] * x[j];
    }
    y[i] = acc;
  }
  return y;
}

std::vector<double> resample_linear(std::span<const double> x, double in_rate, double out_rate) {
  if (x.empty()) return {};
  const double step = in_rate / out_rate;
  const std::size_t n_out =
      static_cast<std::size_t>(std::floor(static_cast<double>(x.size() - 1) / step + 1e-9)) + 1;
  std::vector<double> y(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    if (frac < 1e-12 || i + 1 >= x.size()) {
      y[j] = x[std::min(i, x.size() - 1)];
    } else {
      y[j] = x[i] + frac * (x[i + 1] - x[i]);
    }
  }
  return y;
}

RawRecording lowpass_and_resample(const RawRecording& rec, const StagePolicy& policy) {
  policy.validate();
  rec.validate();
  const double fs = rec.sample_rate_hz;
  if (fs < policy.target_rate_hz) {
    throw ConfigError("sample_rate_hz", "input rate " + std::to_string(fs) +
                                            " Hz is below the target rate; upsampling unsupported");
  }
  const bool filter = policy.lowpass_hz < fs / 2.0;
  const bool resample = fs != policy.target_rate_hz;
  RawRecording out{rec.patient_id, policy.target_rate_hz, {}};
  std::vector<double> taps;
  if (filter) {
    // Transition band a quarter of the cutoff wide, kept inside Nyquist.
    const double width = std::min(policy.lowpass_hz / 4.0, fs / 2.0 - policy.lowpass_hz);
    taps = design_lowpass(policy.lowpass_hz, std::max(width, fs * 1e-3), fs);
  }
  for (const auto& [name, xs] : rec.channels) {
    std::vector<double> y = filter ? fir_filter(xs, taps) : xs;
    if (resample) y = resample_linear(y, fs, policy.target_rate_hz);
    out.channels.emplace(name, std::move(y));
  }
  return out;
}

std::vector<SeizureAnnotation> validate_annotations(std::vector<SeizureAnnotation> ann,
                                                    double duration_s) {
  std::sort(ann.begin(), ann.end(),
            [](const auto& a, const auto& b) { return a.onset_s < b.onset_s; });
  for (std::size_t i = 0; i < ann.size(); ++i) {
    const auto& a = ann[i];
    if (!std::isfinite(a.onset_s) || !std::isfinite(a.end_s) || a.onset_s < 0.0 ||
        a.end_s > duration_s) {
      throw ConfigError("annotations", "seizure outside [0, duration]");
    }
    if (!(a.end_s > a.onset_s)) throw ConfigError("annotations", "seizure end must follow onset");
    if (i > 0 && a.onset_s <= ann[i - 1].end_s) {
      throw ConfigError("annotations", "overlapping seizures");
    }
  }
  return ann;
}

Stage stage_at(double t, std::span<const SeizureAnnotation> ann, const StagePolicy& policy) {
  bool post = false;
  bool pre = false;
  for (const auto& a : ann) {
    if (t >= a.onset_s && t <= a.end_s) return Stage::Ictal;
    if (t > a.end_s && t <= a.end_s + policy.postictal_s) post = true;
    if (t >= a.onset_s - policy.preictal_s && t < a.onset_s) pre = true;
  }
  if (post) return Stage::Postictal;
  if (pre) return Stage::Preictal;
  return Stage::Interictal;
}

std::vector<StageInterval> label_timeline(double duration_s, std::vector<SeizureAnnotation> ann,
                                          const StagePolicy& policy) {
  if (!(duration_s > 0.0)) throw ConfigError("duration_s", "must be positive");
  ann = validate_annotations(std::move(ann), duration_s);
  std::vector<double> pts{0.0, duration_s};
  for (const auto& a : ann) {
    for (double p : {a.onset_s - policy.preictal_s, a.onset_s, a.end_s,
                     a.end_s + policy.postictal_s}) {
      if (p > 0.0 && p < duration_s) pts.push_back(p);
    }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  // Elementary pieces: each boundary point, then the open gap after it.
  std::vector<StageInterval> out;
  auto add_piece = [&](double lo, double hi, bool point, Stage s) {
    if (!out.empty() && out.back().stage == s) {
      out.back().end = hi;
      out.back().closed_end = point;
      return;
    }
    out.push_back({lo, hi, point, point, s, false});
  };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    add_piece(pts[i], pts[i], true, stage_at(pts[i], ann, policy));
    if (i + 1 < pts.size()) {
      const double mid = pts[i] + (pts[i + 1] - pts[i]) / 2.0;
      add_piece(pts[i], pts[i + 1], false, stage_at(mid, ann, policy));
    }
  }
  for (auto& iv : out) {
    if (iv.stage == Stage::Preictal) {
      iv.truncated = iv.end - iv.start < policy.preictal_s * (1.0 - 1e-12);
    }
  }
  return out;
}

std::size_t window_count(std::size_t first, std::size_t last_start, std::size_t stride) {
  if (last_start < first) return 0;
  return (last_start - first) / stride + 1;
}

namespace {

struct SampleSpan {
  std::size_t first = 0;
  std::size_t last_start = 0;
  bool any = false;
  const StageInterval* interval = nullptr;
};

// Start samples s whose half-open span [s, s + d) / fs lies inside `iv`.
SampleSpan sample_span(const StageInterval& iv, double fs, std::size_t d, std::size_t n) {
  SampleSpan sp;
  sp.interval = &iv;
  if (n < d) return sp;
  auto starts_ok = [&](std::size_t s) {
    const double t = static_cast<double>(s) / fs;
    return iv.closed_start ? t >= iv.start : t > iv.start;
  };
  auto ends_ok = [&](std::size_t s) { return static_cast<double>(s + d) / fs <= iv.end; };
  auto first = static_cast<std::size_t>(std::max(0.0, std::floor(iv.start * fs)));
  while (first > 0 && starts_ok(first - 1)) --first;
  while (!starts_ok(first)) ++first;
  const double hi = std::floor(iv.end * fs) - static_cast<double>(d);
  if (hi < 0.0) return sp;
  auto last = std::min(static_cast<std::size_t>(hi), n - d);
  while (last + 1 <= n - d && ends_ok(last + 1)) ++last;
  while (last > 0 && !ends_ok(last)) --last;
  if (!ends_ok(last) || last < first) return sp;
  sp.first = first;
  sp.last_start = last;
  sp.any = true;
  return sp;
}

}  // namespace

SegmentationResult segment_and_balance(const RawRecording& rec,
                                       std::span<const StageInterval> timeline,
                                       const StagePolicy& policy) {
  policy.validate();
  rec.validate();
  if (rec.channels.size() != 1) {
    throw DimensionError("segmentation expects a single-channel recording");
  }
  if (std::abs(rec.sample_rate_hz - policy.target_rate_hz) > 1e-9) {
    throw DimensionError("recording is not at the target rate");
  }
  const std::size_t d = policy.segment_samples();
  const std::size_t n = rec.num_samples();
  if (n < d) throw DimensionError("recording shorter than one segment");
  const double fs = rec.sample_rate_hz;

  std::vector<SampleSpan> inter, pre;
  for (const auto& iv : timeline) {
    if (iv.stage != Stage::Interictal && iv.stage != Stage::Preictal) continue;
    auto sp = sample_span(iv, fs, d, n);
    if (!sp.any) continue;
    (iv.stage == Stage::Preictal ? pre : inter).push_back(sp);
  }
  auto total = [](const std::vector<SampleSpan>& spans, std::size_t stride) {
    std::size_t c = 0;
    for (const auto& sp : spans) c += window_count(sp.first, sp.last_start, stride);
    return c;
  };

  SegmentationResult res;
  res.interictal_count = total(inter, d);
  const auto floor_stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(policy.min_stride_frac * d - 1e-9)));
  res.preictal_stride = floor_stride;
  for (std::size_t s = d; s >= floor_stride; --s) {
    if (total(pre, s) >= res.interictal_count) {
      res.preictal_stride = s;
      res.balanced = true;
      break;
    }
    if (s == 1) break;
  }
  if (pre.empty()) res.preictal_stride = d;
  res.preictal_count = total(pre, res.preictal_stride);

  const auto& x = rec.channels.begin()->second;
  struct Start {
    std::size_t s;
    std::uint8_t label;
    bool truncated;
  };
  std::vector<Start> starts;
  for (const auto& sp : inter) {
    for (std::size_t s = sp.first; s <= sp.last_start; s += d) starts.push_back({s, 0, false});
  }
  for (const auto& sp : pre) {
    for (std::size_t s = sp.first; s <= sp.last_start; s += res.preictal_stride) {
      starts.push_back({s, 1, sp.interval->truncated});
    }
  }
  std::sort(starts.begin(), starts.end(), [](const Start& a, const Start& b) {
    return a.s != b.s ? a.s < b.s : a.label < b.label;
  });
  res.segments.reserve(starts.size());
  for (const auto& st : starts) {
    LabeledSegment seg;
    seg.samples.assign(x.begin() + static_cast<std::ptrdiff_t>(st.s),
                       x.begin() + static_cast<std::ptrdiff_t>(st.s + d));
    seg.label = st.label;
    seg.patient_id = rec.patient_id;
    seg.start_s = static_cast<double>(st.s) / fs;
    seg.truncated_preictal = st.truncated;
    res.segments.push_back(std::move(seg));
  }
  return res;
}

ClientDataset to_dataset(std::span<const LabeledSegment> segments, const std::string& client_id,
                         std::size_t dim) {
  ClientDataset ds;
  ds.client_id = client_id;
  ds.dim = dim;
  for (const auto& s : segments) {
    if (s.samples.size() != dim) throw DimensionError("segment length differs from d");
    ds.push_back(s.samples, s.label);
  }
  return ds;
}

namespace {

constexpr char kRecordingMagic[8] = {'F', 'E', 'D', 'E', 'E', 'G', 'R', '1'};

}  // namespace

void write_recording(const std::filesystem::path& path, const RawRecording& rec) {
  rec.validate();
  json header;
  header["patient_id"] = rec.patient_id;
  header["sample_rate_hz"] = rec.sample_rate_hz;
  header["num_samples"] = rec.num_samples();
  header["channels"] = json::array();
  for (const auto& [name, xs] : rec.channels) header["channels"].push_back(name);
  const std::string h = header.dump();
  ByteWriter w;
  for (char c : kRecordingMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(static_cast<std::uint32_t>(h.size()));
  w.str(h);
  for (const auto& [name, xs] : rec.channels) {
    for (double v : xs) w.f64(v);
  }
  write_bytes(path, w.buffer());
}

RawRecording read_recording(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader r(bytes);
  for (char c : kRecordingMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) {
      throw ConfigError("path", "'" + path.string() + "' is not a recording container");
    }
  }
  const auto hlen = r.u32();
  const auto hb = r.bytes(hlen);
  const json header = json::parse(hb.begin(), hb.end());
  RawRecording rec;
  rec.patient_id = header.at("patient_id").get<std::string>();
  rec.sample_rate_hz = header.at("sample_rate_hz").get<double>();
  const auto n = header.at("num_samples").get<std::size_t>();
  for (const auto& name : header.at("channels")) {
    std::vector<double> xs(n);
    for (double& v : xs) v = r.f64();
    rec.channels.emplace(name.get<std::string>(), std::move(xs));
  }
  if (!r.done()) throw ConfigError("path", "trailing bytes in '" + path.string() + "'");
  rec.validate();
  return rec;
}

void write_annotations(const std::filesystem::path& path,
                       std::span<const SeizureAnnotation> ann) {
  json doc;
  doc["seizures"] = json::array();
  for (const auto& a : ann) doc["seizures"].push_back({{"onset_s", a.onset_s}, {"end_s", a.end_s}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("path", "cannot write '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

std::vector<SeizureAnnotation> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("path", "cannot open '" + path.string() + "'");
  const json doc = json::parse(in);
  std::vector<SeizureAnnotation> ann;
  for (const auto& s : doc.at("seizures")) {
    ann.push_back({s.at("onset_s").get<double>(), s.at("end_s").get<double>()});
  }
  return ann;
}

}  // namespace fedeeg
