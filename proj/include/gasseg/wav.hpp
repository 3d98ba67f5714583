#pragma once

#include <filesystem>
#include <vector>

namespace gasseg {

/// Mono PCM audio held as doubles. Samples read from disk are in [-1, 1];
/// derived waveforms (e.g. after noise injection) are only required to be
/// finite.
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 16000;

  double duration_ms() const {
    return 1000.0 * static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// Throws DataError if the waveform is empty, has non-finite samples, or a
/// non-positive sample rate.
void validate(const Waveform& wave);

enum class WavEncoding { pcm16, float32 };

/// Reads RIFF/WAVE (PCM 16-bit or IEEE float 32-bit, mono) and NIST SPHERE
/// files with uncompressed 16-bit samples (the original TIMIT distribution).
Waveform read_wav(const std::filesystem::path& path);

/// Writes RIFF/WAVE. pcm16 clips to [-1, 1]; float32 stores samples as-is.
void write_wav(const std::filesystem::path& path, const Waveform& wave,
               WavEncoding encoding = WavEncoding::float32);

}  // namespace gasseg
