#include "gasseg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gasseg/common.hpp"

namespace gasseg {

std::vector<long> PhoneAnnotation::interior_boundaries() const {
  std::vector<long> out;
  for (std::size_t k = 1; k < intervals.size(); ++k) out.push_back(intervals[k].start_sample);
  return out;
}

PhoneAnnotation parse_phn(std::string_view text, int sample_rate_hz) {
  if (sample_rate_hz <= 0) throw DataError("sample rate must be positive");
  PhoneAnnotation ann;
  ann.sample_rate_hz = sample_rate_hz;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string a, b, label, extra;
    if (!(ls >> a)) continue;
    if (!(ls >> b >> label) || (ls >> extra))
      throw DataError("phn line " + std::to_string(line_no) + ": expected 'start end label'");
    PhoneInterval iv;
    try {
      std::size_t used_a = 0, used_b = 0;
      iv.start_sample = std::stol(a, &used_a);
      iv.end_sample = std::stol(b, &used_b);
      if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError("phn line " + std::to_string(line_no) + ": non-integer sample index");
    }
    iv.label = label;
    if (iv.start_sample < 0 || iv.end_sample <= iv.start_sample)
      throw DataError("phn line " + std::to_string(line_no) + ": non-monotonic interval");
    if (!ann.intervals.empty() && ann.intervals.back().end_sample != iv.start_sample)
      throw DataError("phn line " + std::to_string(line_no) + ": non-contiguous interval");
    ann.intervals.push_back(std::move(iv));
  }
  return ann;
}

Waveform add_white_noise(const Waveform& wave, double snr_db, std::uint64_t seed) {
  validate(wave);
  double signal_power = 0.0;
  for (double s : wave.samples) signal_power += s * s;
  signal_power /= static_cast<double>(wave.samples.size());
  if (signal_power <= 0.0) throw DataError("undefined SNR: input has zero power");

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(wave.samples.size());
  double noise_power = 0.0;
  for (double& n : noise) {
    n = gauss(rng);
    noise_power += n * n;
  }
  noise_power /= static_cast<double>(noise.size());
  const double target = signal_power / std::pow(10.0, snr_db / 10.0);
  const double scale = std::sqrt(target / noise_power);

  Waveform out = wave;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += scale * noise[i];
  return out;
}

namespace {

struct LabelProfile {
  double center_hz;
  double gain;
  double f0_hz;
};

// RBJ band-pass biquad, 0 dB peak gain.
class Biquad {
 public:
  Biquad(double center_hz, double q, double rate) {
    const double w0 = 2.0 * std::numbers::pi * center_hz / rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }

  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

constexpr double kGridHz = 500.0;
constexpr double kBandwidthHz = 250.0;
constexpr double kSegmentRms = 0.1;
constexpr int kWarmup = 512;

std::vector<double> filtered_noise(const LabelProfile& p, std::size_t n, double rate, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Biquad first(p.center_hz, p.center_hz / kBandwidthHz, rate);
  Biquad second(p.center_hz, p.center_hz / kBandwidthHz, rate);
  std::vector<double> out(n);
  for (int k = 0; k < kWarmup; ++k) second(first(gauss(rng)));
  for (double& s : out) s = second(first(gauss(rng)));
  return out;
}

std::vector<double> harmonic_tone(const LabelProfile& p, std::size_t n, double rate, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> out(n, 0.0);
  const double nyquist = rate / 2.0;
  for (int h = 1; h * p.f0_hz < nyquist - 100.0; ++h) {
    const double f = h * p.f0_hz;
    const double d = (f - p.center_hz) / 400.0;
    const double amp = std::exp(-0.5 * d * d) + 0.02;
    const double ph = phase(rng);
    for (std::size_t i = 0; i < n; ++i)
      out[i] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / rate + ph);
  }
  return out;
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  if (spec.num_utterances <= 0) throw ConfigError("num_utterances must be positive");
  if (spec.segments_min < 1 || spec.segments_max < spec.segments_min)
    throw ConfigError("segments_per_utterance range is empty");
  if (spec.segment_ms_max < spec.segment_ms_min)
    throw ConfigError("segment duration range is empty");
  if (spec.segment_ms_min < 30.0)
    throw ConfigError("segment duration below 30 ms cannot span two frames");
  if (spec.sample_rate_hz <= 0) throw ConfigError("sample rate must be positive");
  if (spec.first_utterance < 0) throw ConfigError("first_utterance must be non-negative");
  const int slots = static_cast<int>((spec.sample_rate_hz / 2.0 - kGridHz) / kGridHz);
  if (spec.num_labels < 2 || spec.num_labels > slots)
    throw ConfigError("num_labels must be in [2, " + std::to_string(slots) + "]");
}

std::vector<Utterance> synth_corpus(const SyntheticSpec& spec) {
  validate(spec);
  const double rate = spec.sample_rate_hz;

  Rng profile_rng(derive_seed(spec.seed, "profiles"));
  const int slots = static_cast<int>((rate / 2.0 - kGridHz) / kGridHz);
  std::vector<int> grid(static_cast<std::size_t>(slots));
  for (int k = 0; k < slots; ++k) grid[static_cast<std::size_t>(k)] = k + 1;
  std::shuffle(grid.begin(), grid.end(), profile_rng);
  std::uniform_real_distribution<double> gain_dist(0.4, 1.0);
  std::uniform_real_distribution<double> f0_dist(100.0, 250.0);
  std::vector<LabelProfile> profiles;
  for (int k = 0; k < spec.num_labels; ++k)
    profiles.push_back({kGridHz * grid[static_cast<std::size_t>(k)], gain_dist(profile_rng),
                        f0_dist(profile_rng)});

  std::vector<Utterance> corpus;
  corpus.reserve(static_cast<std::size_t>(spec.num_utterances));
  for (int u = spec.first_utterance; u < spec.first_utterance + spec.num_utterances; ++u) {
    Rng rng(derive_seed(spec.seed, "utterance-" + std::to_string(u)));
    std::uniform_int_distribution<int> count_dist(spec.segments_min, spec.segments_max);
    std::uniform_real_distribution<double> dur_dist(spec.segment_ms_min, spec.segment_ms_max);
    std::uniform_int_distribution<int> label_dist(0, spec.num_labels - 1);

    Utterance utt;
    char id[32];
    std::snprintf(id, sizeof id, "syn%04d", u);
    utt.id = id;
    utt.wave.sample_rate_hz = spec.sample_rate_hz;
    utt.annotation.sample_rate_hz = spec.sample_rate_hz;

    const int segments = count_dist(rng);
    int prev_label = -1;
    for (int s = 0; s < segments; ++s) {
      int label = label_dist(rng);
      while (label == prev_label) label = label_dist(rng);
      prev_label = label;
      const auto n = static_cast<std::size_t>(std::lround(dur_dist(rng) * rate / 1000.0));
      const LabelProfile& p = profiles[static_cast<std::size_t>(label)];
      std::vector<double> seg = spec.generator == GeneratorKind::filtered_noise
                                    ? filtered_noise(p, n, rate, rng)
                                    : harmonic_tone(p, n, rate, rng);
      double power = 0.0;
      for (double v : seg) power += v * v;
      const double rms = std::sqrt(power / static_cast<double>(n));
      const double scale = rms > 0.0 ? kSegmentRms * p.gain / rms : 0.0;

      const long start = static_cast<long>(utt.wave.samples.size());
      for (double v : seg) utt.wave.samples.push_back(v * scale);
      utt.annotation.intervals.push_back(
          {start, static_cast<long>(utt.wave.samples.size()), "s" + std::to_string(label)});
    }

    double peak = 0.0;
    for (double v : utt.wave.samples) peak = std::max(peak, std::abs(v));
    const double limit = peak > 0.99 ? 0.99 / peak : 1.0;
    for (double& v : utt.wave.samples) v = static_cast<double>(static_cast<float>(v * limit));
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

GeneratorKind parse_generator_kind(std::string_view name) {
  if (name == "filtered_noise") return GeneratorKind::filtered_noise;
  if (name == "harmonic_tones") return GeneratorKind::harmonic_tones;
  throw ConfigError("unknown generator kind: " + std::string(name));
}

std::string_view to_string(GeneratorKind kind) {
  return kind == GeneratorKind::filtered_noise ? "filtered_noise" : "harmonic_tones";
}

std::vector<double> ManifestEntry::boundary_times_ms() const {
  std::vector<double> out;
  out.reserve(boundaries.size());
  for (long b : boundaries) out.push_back(1000.0 * static_cast<double>(b) / sample_rate_hz);
  return out;
}

ManifestEntry make_manifest_entry(const Utterance& utt, std::string wav_path) {
  ManifestEntry e;
  e.id = utt.id;
  e.wav = std::move(wav_path);
  e.num_samples = static_cast<long>(utt.wave.samples.size());
  e.sample_rate_hz = utt.wave.sample_rate_hz;
  e.boundaries = utt.annotation.interior_boundaries();
  for (const auto& iv : utt.annotation.intervals) e.labels.push_back(iv.label);
  return e;
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  nlohmann::json doc;
  doc["format_version"] = CorpusManifest::kFormatVersion;
  doc["version"] = std::string(version_string());
  doc["config"] = manifest.config;
  auto& list = doc["utterances"] = nlohmann::json::array();
  for (const auto& e : manifest.utterances) {
    list.push_back({{"id", e.id},
                    {"wav", e.wav},
                    {"num_samples", e.num_samples},
                    {"sample_rate_hz", e.sample_rate_hz},
                    {"boundaries", e.boundaries},
                    {"labels", e.labels}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  CorpusManifest m;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("format_version").get<int>() != CorpusManifest::kFormatVersion)
      throw DataError("manifest format version mismatch: " + path.string());
    if (doc.contains("config")) m.config = doc["config"];
    for (const auto& u : doc.at("utterances")) {
      ManifestEntry e;
      e.id = u.at("id").get<std::string>();
      e.wav = u.at("wav").get<std::string>();
      e.num_samples = u.at("num_samples").get<long>();
      e.sample_rate_hz = u.at("sample_rate_hz").get<int>();
      e.boundaries = u.at("boundaries").get<std::vector<long>>();
      if (u.contains("labels")) e.labels = u["labels"].get<std::vector<std::string>>();
      for (std::size_t k = 0; k < e.boundaries.size(); ++k) {
        const bool ordered = k == 0 || e.boundaries[k] > e.boundaries[k - 1];
        if (!ordered || e.boundaries[k] <= 0 || e.boundaries[k] >= e.num_samples)
          throw DataError("manifest entry " + e.id + ": boundaries must be strictly increasing and interior");
      }
      m.utterances.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("malformed manifest " + path.string() + ": " + ex.what());
  }
  return m;
}

}  // namespace gasseg
