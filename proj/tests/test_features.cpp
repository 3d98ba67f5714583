#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"

#include "gasseg/features.hpp"

using namespace gasseg;
namespace fs = std::filesystem;

namespace {

Waveform noise_wave(long n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  for (auto& s : w.samples) s = u(rng);
  return w;
}

// Static cepstra of frame t by direct evaluation: naive DFT, mel triangles
// and DCT-II written out term by term.
std::vector<double> naive_cepstra(const Waveform& w, long t) {
  const double pi = std::numbers::pi;
  const int len = 400, shift = 160, nfft = 512, filters = 26, sr = w.sample_rate_hz;
  std::vector<double> x(len);
  for (int n = 0; n < len; ++n) {
    const double cur = w.samples[t * shift + n];
    const double prev = n == 0 ? cur : w.samples[t * shift + n - 1];
    x[n] = (cur - 0.97 * prev) * (0.54 - 0.46 * std::cos(2 * pi * n / (len - 1)));
  }
  std::vector<double> power(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int n = 0; n < len; ++n) acc += x[n] * std::polar(1.0, -2 * pi * k * n / nfft);
    power[k] = std::norm(acc);
  }
  auto mel = [](double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); };
  const double top = mel(sr / 2.0);
  std::vector<double> logmel(filters);
  for (int m = 0; m < filters; ++m) {
    const double l = top * m / (filters + 1), c = top * (m + 1) / (filters + 1), r = top * (m + 2) / (filters + 1);
    double e = 0.0;
    for (int k = 0; k <= nfft / 2; ++k) {
      const double f = mel(static_cast<double>(k) * sr / nfft);
      if (f > l && f <= c) e += power[k] * (f - l) / (c - l);
      else if (f > c && f < r) e += power[k] * (r - f) / (r - c);
    }
    logmel[m] = std::log(std::max(e, 1e-10));
  }
  std::vector<double> c(13);
  for (int i = 0; i < 13; ++i) {
    double acc = 0.0;
    for (int m = 0; m < filters; ++m) acc += logmel[m] * std::cos(pi * i * (m + 0.5) / filters);
    c[i] = acc * std::sqrt((i == 0 ? 1.0 : 2.0) / filters);
  }
  return c;
}

}  // namespace

TEST_CASE("frame count arithmetic") {
  CHECK(frame_count(16000, 16000) == 98);
  CHECK(frame_count(16000, 16000) == (16000 - 400) / 160 + 1);
  CHECK(frame_count(399, 16000) == 0);
  CHECK(frame_count(400, 16000) == 1);
  CHECK(frame_count(560, 16000) == 2);
  CHECK(mfcc39(noise_wave(16000, 1)).num_frames() == 98);
}

TEST_CASE("mfcc39 shape and short input") {
  const auto f = mfcc39(noise_wave(5000, 2));
  CHECK(f.frames.cols() == 39);
  CHECK(f.frames.allFinite());
  CHECK_THROWS_AS(mfcc39(noise_wave(500, 3)), DataError);
  CHECK_THROWS_AS(mfcc39(Waveform{}), DataError);
}

TEST_CASE("static cepstra match a direct DFT evaluation") {
  const auto w = noise_wave(4000, 4);
  const auto f = mfcc39(w);
  for (long t : {0L, 5L, f.num_frames() - 1}) {
    const auto want = naive_cepstra(w, t);
    for (int i = 0; i < 13; ++i) CHECK(std::abs(f.frames(t, i) - want[i]) < 1e-9);
  }
}

TEST_CASE("silence hits the log floor without NaN") {
  Waveform w;
  w.samples.assign(3200, 0.0);
  const auto f = mfcc39(w);
  CHECK(f.frames.allFinite());
  CHECK(f.frames(0, 0) == doctest::Approx(std::log(1e-10) * std::sqrt(26.0)));
}

TEST_CASE("deltas use the regression formula with edge replication") {
  Matrix x(6, 1);
  x << 1, 4, 9, 16, 25, 36;
  const Matrix d = deltas(x, 2);
  auto at = [&](long t) { return x(std::clamp<long>(t, 0, 5), 0); };
  for (long t = 0; t < 6; ++t) {
    const double want = (1 * (at(t + 1) - at(t - 1)) + 2 * (at(t + 2) - at(t - 2))) / 10.0;
    CHECK(d(t, 0) == doctest::Approx(want));
  }
  const auto f = mfcc39(noise_wave(4000, 5));
  const Matrix s = f.frames.leftCols(13);
  CHECK((deltas(s) - f.frames.middleCols(13, 13)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((deltas(deltas(s)) - f.frames.rightCols(13)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cmvn against direct statistics and idempotence") {
  FeatureSequence f;
  Rng rng(6);
  std::normal_distribution<double> n(3.0, 2.0);
  f.frames.resize(50, 4);
  for (long t = 0; t < 50; ++t)
    for (long k = 0; k < 4; ++k) f.frames(t, k) = n(rng);
  f.frames.col(2).setConstant(7.0);
  const auto c = cmvn(f);
  for (long k = 0; k < 4; ++k) {
    double mean = 0.0, var = 0.0;
    for (long t = 0; t < 50; ++t) mean += f.frames(t, k);
    mean /= 50;
    for (long t = 0; t < 50; ++t) var += (f.frames(t, k) - mean) * (f.frames(t, k) - mean);
    var /= 50;
    for (long t = 0; t < 50; ++t) {
      const double want = var <= 1e-20 ? 0.0 : (f.frames(t, k) - mean) / std::sqrt(var);
      CHECK(std::abs(c.frames(t, k) - want) < 1e-12);
    }
  }
  const auto twice = cmvn(c);
  CHECK((twice.frames - c.frames).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("frame times") {
  CHECK(frame_time(0, 10, 25) == 12.5);
  CHECK(frame_time(3, 10, 25) == 42.5);
  CHECK(nearest_frame(12.5, 10, 25) == 0);
  CHECK(nearest_frame(44.0, 10, 25) == 3);
  CHECK(nearest_frame(-5.0, 10, 25) == 0);
}

TEST_CASE("feature cache round trip and corruption") {
  const fs::path dir = fs::temp_directory_path() / "gasseg_feature_cache_test";
  fs::create_directories(dir);
  auto f = cmvn(mfcc39(noise_wave(4000, 7)));
  f.utterance_id = "u";
  const fs::path p = dir / "u.feat";
  write_feature_cache(p, f, 4000);
  const auto back = read_feature_cache(p, "u");
  CHECK(back.frames == f.frames);
  CHECK(back.frame_shift_ms == 10.0);
  const auto h = read_feature_cache_header(p);
  CHECK(h.num_frames == frame_count(4000, 16000));
  CHECK(h.source_samples == 4000);

  fs::resize_file(p, fs::file_size(p) - 8);
  CHECK_THROWS_AS(read_feature_cache(p, "u"), DataError);
  {
    std::ofstream junk(p, std::ios::binary);
    junk << "not a header";
  }
  CHECK_THROWS_AS(read_feature_cache(p, "u"), DataError);
  fs::remove_all(dir);
}
