#pragma once

#include <filesystem>
#include <string>

#include "gasseg/common.hpp"
#include "gasseg/wav.hpp"

namespace gasseg {

inline constexpr int kFeatureDim = 39;
inline constexpr int kStaticCoefficients = 13;

struct FrameConfig {
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;
};

/// T x 39 frames (13 cepstra incl. c0, then 13 deltas, then 13 delta-deltas).
struct FeatureSequence {
  std::string utterance_id;
  Matrix frames;
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;
  int origin_sample_rate_hz = 16000;

  Eigen::Index num_frames() const { return frames.rows(); }
};

/// Number of full analysis windows that fit in `num_samples`.
long frame_count(long num_samples, int sample_rate_hz, const FrameConfig& framing = {});

/// 39-dim MFCC: per-frame pre-emphasis 0.97, Hamming window, 512-point power
/// spectrum, 26 mel filters, log with 1e-10 floor, orthonormal DCT-II keeping
/// c0..c12, then +-2 frame regression deltas and delta-deltas with edge
/// replication. Throws DataError when shorter than two analysis windows.
FeatureSequence mfcc39(const Waveform& wave, const FrameConfig& framing = {});

/// Regression deltas over +-`window` frames with edge replication.
Matrix deltas(const Matrix& frames, int window = 2);

/// Per-dimension zero mean / unit variance; constant dimensions become zero.
FeatureSequence cmvn(FeatureSequence features);

/// Center time of a frame in milliseconds.
double frame_time(long frame_index, double frame_shift_ms, double frame_length_ms);

/// Index of the frame whose center is nearest to `time_ms` (clamped at 0).
long nearest_frame(double time_ms, double frame_shift_ms, double frame_length_ms);

// Feature cache: one JSON header line followed by little-endian float64
// values, row-major T x dims.

struct FeatureCacheHeader {
  long num_frames = 0;
  int dims = kFeatureDim;
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;
  int origin_sample_rate_hz = 16000;
  long source_samples = 0;
};

void write_feature_cache(const std::filesystem::path& path, const FeatureSequence& features,
                         long source_samples);
/// Throws DataError on a malformed or truncated file.
FeatureSequence read_feature_cache(const std::filesystem::path& path, std::string utterance_id);
FeatureCacheHeader read_feature_cache_header(const std::filesystem::path& path);

}  // namespace gasseg
