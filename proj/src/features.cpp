#include "gasseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <vector>

#include <fftw3.h>

#include "json.hpp"

namespace gasseg {

namespace {

constexpr int kFftSize = 512;
constexpr int kMelFilters = 26;
constexpr double kPreEmphasis = 0.97;
constexpr double kLogFloor = 1e-10;
constexpr double kVarianceFloor = 1e-20;

// FFTW planning is not thread-safe; execution with the new-array API is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  RealFft() : in_(kFftSize), out_(kFftSize / 2 + 1) {
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(kFftSize, in_.data(),
                                 reinterpret_cast<fftw_complex*>(out_.data()), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::vector<double>& input() { return in_; }

  void power_spectrum(std::vector<double>& power) {
    fftw_execute(plan_);
    power.resize(out_.size());
    for (std::size_t k = 0; k < out_.size(); ++k) power[k] = std::norm(out_[k]);
  }

 private:
  std::vector<double> in_;
  std::vector<std::complex<double>> out_;
  fftw_plan plan_;
};

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

// kMelFilters x (kFftSize/2 + 1) triangular weights, triangles on the mel axis.
Matrix mel_filterbank(int sample_rate_hz) {
  const int bins = kFftSize / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate_hz / 2.0);
  const double step = mel_hi / (kMelFilters + 1);
  Matrix fb = Matrix::Zero(kMelFilters, bins);
  for (int m = 0; m < kMelFilters; ++m) {
    const double left = m * step, center = (m + 1) * step, right = (m + 2) * step;
    for (int k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate_hz / kFftSize);
      if (mel > left && mel < right)
        fb(m, k) = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
    }
  }
  return fb;
}

Matrix dct_matrix() {
  Matrix d(kStaticCoefficients, kMelFilters);
  for (int i = 0; i < kStaticCoefficients; ++i) {
    const double scale = std::sqrt((i == 0 ? 1.0 : 2.0) / kMelFilters);
    for (int m = 0; m < kMelFilters; ++m)
      d(i, m) = scale * std::cos(std::numbers::pi * i * (m + 0.5) / kMelFilters);
  }
  return d;
}

long samples_for(double ms, int rate) { return std::lround(ms * rate / 1000.0); }

}  // namespace

long frame_count(long num_samples, int sample_rate_hz, const FrameConfig& framing) {
  const long len = samples_for(framing.frame_length_ms, sample_rate_hz);
  const long shift = samples_for(framing.frame_shift_ms, sample_rate_hz);
  if (num_samples < len) return 0;
  return (num_samples - len) / shift + 1;
}

FeatureSequence mfcc39(const Waveform& wave, const FrameConfig& framing) {
  validate(wave);
  const int rate = wave.sample_rate_hz;
  const long len = samples_for(framing.frame_length_ms, rate);
  const long shift = samples_for(framing.frame_shift_ms, rate);
  if (len <= 0 || shift <= 0 || len > kFftSize)
    throw ConfigError("frame length must fit the 512-point FFT and shift must be positive");
  const long frames = frame_count(static_cast<long>(wave.samples.size()), rate, framing);
  if (frames < 2) throw DataError("waveform shorter than two analysis windows");

  std::vector<double> window(static_cast<std::size_t>(len));
  for (long n = 0; n < len; ++n)
    window[static_cast<std::size_t>(n)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(len - 1));
  const Matrix filterbank = mel_filterbank(rate);
  const Matrix dct = dct_matrix();

  RealFft fft;
  std::vector<double> power;
  std::vector<double> frame(static_cast<std::size_t>(len));
  Matrix cepstra(frames, kStaticCoefficients);
  Vector log_mel(kMelFilters);
  for (long t = 0; t < frames; ++t) {
    std::copy_n(wave.samples.begin() + t * shift, len, frame.begin());
    for (long n = len - 1; n > 0; --n)
      frame[static_cast<std::size_t>(n)] -= kPreEmphasis * frame[static_cast<std::size_t>(n - 1)];
    frame[0] -= kPreEmphasis * frame[0];

    auto& in = fft.input();
    std::fill(in.begin(), in.end(), 0.0);
    for (long n = 0; n < len; ++n)
      in[static_cast<std::size_t>(n)] = frame[static_cast<std::size_t>(n)] * window[static_cast<std::size_t>(n)];
    fft.power_spectrum(power);

    const Eigen::Map<const Vector> spectrum(power.data(), static_cast<Eigen::Index>(power.size()));
    log_mel = (filterbank * spectrum).array().max(kLogFloor).log();
    cepstra.row(t) = (dct * log_mel).transpose();
  }

  FeatureSequence out;
  out.frame_shift_ms = framing.frame_shift_ms;
  out.frame_length_ms = framing.frame_length_ms;
  out.origin_sample_rate_hz = rate;
  out.frames.resize(frames, kFeatureDim);
  const Matrix d1 = deltas(cepstra);
  out.frames << cepstra, d1, deltas(d1);
  return out;
}

Matrix deltas(const Matrix& frames, int window) {
  const Eigen::Index t_max = frames.rows() - 1;
  double norm = 0.0;
  for (int n = 1; n <= window; ++n) norm += 2.0 * n * n;
  Matrix out = Matrix::Zero(frames.rows(), frames.cols());
  for (Eigen::Index t = 0; t <= t_max; ++t) {
    for (int n = 1; n <= window; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, t_max);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      out.row(t) += n * (frames.row(ahead) - frames.row(behind));
    }
  }
  return out / norm;
}

FeatureSequence cmvn(FeatureSequence features) {
  Matrix& x = features.frames;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto col = x.col(j);
    const double mean = col.sum() / n;
    col.array() -= mean;
    const double var = col.squaredNorm() / n;
    if (var <= kVarianceFloor)
      col.setZero();
    else
      col /= std::sqrt(var);
  }
  return features;
}

double frame_time(long frame_index, double frame_shift_ms, double frame_length_ms) {
  return static_cast<double>(frame_index) * frame_shift_ms + frame_length_ms / 2.0;
}

long nearest_frame(double time_ms, double frame_shift_ms, double frame_length_ms) {
  const double idx = std::round((time_ms - frame_length_ms / 2.0) / frame_shift_ms);
  return std::max(0L, static_cast<long>(idx));
}

void write_feature_cache(const std::filesystem::path& path, const FeatureSequence& features,
                         long source_samples) {
  nlohmann::json header = {{"T", features.frames.rows()},
                           {"dims", features.frames.cols()},
                           {"shift", features.frame_shift_ms},
                           {"length", features.frame_length_ms},
                           {"sample_rate_hz", features.origin_sample_rate_hz},
                           {"source_samples", source_samples}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature cache: " + path.string());
  out << header.dump() << '\n';
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor rows = features.frames;
  out.write(reinterpret_cast<const char*>(rows.data()),
            static_cast<std::streamsize>(rows.size() * sizeof(double)));
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {

FeatureCacheHeader parse_header(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty feature cache: " + path.string());
  FeatureCacheHeader h;
  try {
    const auto j = nlohmann::json::parse(line);
    h.num_frames = j.at("T").get<long>();
    h.dims = j.at("dims").get<int>();
    h.frame_shift_ms = j.at("shift").get<double>();
    h.frame_length_ms = j.at("length").get<double>();
    h.origin_sample_rate_hz = j.at("sample_rate_hz").get<int>();
    h.source_samples = j.at("source_samples").get<long>();
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("corrupt feature cache header " + path.string() + ": " + ex.what());
  }
  if (h.num_frames < 2 || h.dims <= 0) throw DataError("corrupt feature cache shape: " + path.string());
  return h;
}

}  // namespace

FeatureCacheHeader read_feature_cache_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature cache: " + path.string());
  return parse_header(in, path);
}

FeatureSequence read_feature_cache(const std::filesystem::path& path, std::string utterance_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature cache: " + path.string());
  const auto h = parse_header(in, path);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor rows(h.num_frames, h.dims);
  const auto bytes = static_cast<std::streamsize>(rows.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(rows.data()), bytes);
  if (in.gcount() != bytes) throw DataError("truncated feature cache: " + path.string());
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError("trailing bytes in feature cache: " + path.string());
  if (!rows.allFinite()) throw DataError("non-finite values in feature cache: " + path.string());
  FeatureSequence out;
  out.utterance_id = std::move(utterance_id);
  out.frames = rows;
  out.frame_shift_ms = h.frame_shift_ms;
  out.frame_length_ms = h.frame_length_ms;
  out.origin_sample_rate_hz = h.origin_sample_rate_hz;
  return out;
}

}  // namespace gasseg
