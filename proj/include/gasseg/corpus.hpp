#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gasseg/wav.hpp"

namespace gasseg {

struct PhoneInterval {
  long start_sample = 0;
  long end_sample = 0;
  std::string label;
};

/// Contiguous, strictly increasing phone intervals of one utterance.
struct PhoneAnnotation {
  std::vector<PhoneInterval> intervals;
  int sample_rate_hz = 16000;

  /// Interval edges strictly inside the annotated span.
  std::vector<long> interior_boundaries() const;
};

/// Parses TIMIT `.phn` text ("start end label" per line). Blank lines are
/// skipped. Throws DataError on malformed, non-contiguous or non-monotonic
/// input.
PhoneAnnotation parse_phn(std::string_view text, int sample_rate_hz);

/// Adds Gaussian white noise whose realized power over the whole utterance
/// gives exactly the requested SNR. Output is not clipped.
Waveform add_white_noise(const Waveform& wave, double snr_db, std::uint64_t seed);

enum class GeneratorKind { filtered_noise, harmonic_tones };

struct SyntheticSpec {
  int num_utterances = 50;
  int segments_min = 6;
  int segments_max = 14;
  double segment_ms_min = 50.0;
  double segment_ms_max = 200.0;
  GeneratorKind generator = GeneratorKind::filtered_noise;
  int num_labels = 8;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 1;
  /// Index of the first utterance. Label profiles depend only on `seed`, so
  /// corpora with the same seed and disjoint index ranges share a label
  /// inventory (train/test splits).
  int first_utterance = 0;
};

struct Utterance {
  std::string id;
  Waveform wave;
  PhoneAnnotation annotation;
};

/// Throws ConfigError when the spec cannot be realized.
void validate(const SyntheticSpec& spec);

/// Piecewise-stationary utterances whose segment edges are the annotation
/// boundaries. Adjacent segments always carry different labels; each label
/// owns a spectral profile whose center frequency sits on a 500 Hz grid.
/// Samples are rounded to float precision so float32 WAV round-trips are
/// exact.
std::vector<Utterance> synth_corpus(const SyntheticSpec& spec);

GeneratorKind parse_generator_kind(std::string_view name);
std::string_view to_string(GeneratorKind kind);

// Corpus manifest: one JSON file listing utterances, audio paths (relative to
// the manifest) and interior boundary sample indices.

struct ManifestEntry {
  std::string id;
  std::string wav;
  long num_samples = 0;
  int sample_rate_hz = 16000;
  std::vector<long> boundaries;
  std::vector<std::string> labels;

  double duration_ms() const { return 1000.0 * static_cast<double>(num_samples) / sample_rate_hz; }
  std::vector<double> boundary_times_ms() const;
};

struct CorpusManifest {
  static constexpr int kFormatVersion = 1;
  std::vector<ManifestEntry> utterances;
  nlohmann::json config = nlohmann::json::object();
};

ManifestEntry make_manifest_entry(const Utterance& utt, std::string wav_path);

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& path);

}  // namespace gasseg
