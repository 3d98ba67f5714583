#include "gasseg/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include "gasseg/common.hpp"

namespace gasseg {

namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

Waveform decode_samples(const char* data, std::size_t bytes, std::uint16_t format,
                        std::uint16_t bits, int rate, const std::string& what) {
  Waveform wave;
  wave.sample_rate_hz = rate;
  if (format == kFormatPcm && bits == 16) {
    if (bytes % 2 != 0) throw DataError(what + ": truncated PCM16 data");
    wave.samples.resize(bytes / 2);
    for (std::size_t i = 0; i < wave.samples.size(); ++i)
      wave.samples[i] = load_le<std::int16_t>(data + 2 * i) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    if (bytes % 4 != 0) throw DataError(what + ": truncated float32 data");
    wave.samples.resize(bytes / 4);
    for (std::size_t i = 0; i < wave.samples.size(); ++i)
      wave.samples[i] = load_le<float>(data + 4 * i);
  } else {
    throw DataError(what + ": unsupported encoding (format " + std::to_string(format) +
                    ", " + std::to_string(bits) + " bits); need PCM16 or float32");
  }
  if (wave.samples.empty()) throw DataError(what + ": empty waveform");
  for (double s : wave.samples)
    if (!std::isfinite(s)) throw DataError(what + ": non-finite sample");
  return wave;
}

Waveform parse_riff(const std::vector<char>& buf, const std::string& what) {
  if (buf.size() < 12 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw DataError(what + ": not a RIFF/WAVE file");
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= buf.size()) {
    const char* id = buf.data() + pos;
    const auto size = load_le<std::uint32_t>(buf.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16 || body + size > buf.size()) throw DataError(what + ": truncated fmt chunk");
      format = load_le<std::uint16_t>(buf.data() + body);
      channels = load_le<std::uint16_t>(buf.data() + body + 2);
      rate = load_le<std::uint32_t>(buf.data() + body + 4);
      bits = load_le<std::uint16_t>(buf.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw DataError(what + ": truncated extensible fmt chunk");
        format = load_le<std::uint16_t>(buf.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw DataError(what + ": data chunk before fmt chunk");
      if (channels != 1)
        throw DataError(what + ": multi-channel audio (" + std::to_string(channels) +
                        " channels) is not supported");
      if (rate == 0) throw DataError(what + ": zero sample rate");
      if (body + size > buf.size()) throw DataError(what + ": truncated data chunk");
      return decode_samples(buf.data() + body, size, format, bits, static_cast<int>(rate), what);
    }
    pos = body + size + (size & 1U);
  }
  throw DataError(what + ": truncated file (no data chunk)");
}

Waveform parse_sphere(const std::vector<char>& buf, const std::string& what) {
  if (buf.size() < 16) throw DataError(what + ": truncated SPHERE header");
  const std::string head(buf.data(), std::min<std::size_t>(buf.size(), 1024));
  std::istringstream lines(head);
  std::string line;
  std::getline(lines, line);  // NIST_1A
  std::getline(lines, line);
  const std::size_t header_bytes = std::stoul(line);
  std::map<std::string, std::string> fields;
  while (std::getline(lines, line) && line.rfind("end_head", 0) != 0) {
    std::istringstream ls(line);
    std::string key, type, value;
    ls >> key >> type >> value;
    fields[key] = value;
  }
  auto get = [&](const std::string& k, const std::string& dflt) {
    auto it = fields.find(k);
    return it == fields.end() ? dflt : it->second;
  };
  if (get("channel_count", "1") != "1") throw DataError(what + ": multi-channel audio is not supported");
  if (get("sample_n_bytes", "2") != "2") throw DataError(what + ": unsupported SPHERE sample width");
  const std::string coding = get("sample_coding", "pcm");
  if (coding != "pcm") throw DataError(what + ": unsupported SPHERE coding " + coding);
  const std::string order = get("sample_byte_format", "01");
  const int rate = std::stoi(get("sample_rate", "16000"));
  if (header_bytes > buf.size()) throw DataError(what + ": truncated SPHERE file");
  std::vector<char> data(buf.begin() + static_cast<std::ptrdiff_t>(header_bytes), buf.end());
  if (order == "10")
    for (std::size_t i = 0; i + 1 < data.size(); i += 2) std::swap(data[i], data[i + 1]);
  return decode_samples(data.data(), data.size(), kFormatPcm, 16, rate, what);
}

void put(std::ofstream& out, const auto& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

void validate(const Waveform& wave) {
  if (wave.samples.empty()) throw DataError("empty waveform");
  if (wave.sample_rate_hz <= 0) throw DataError("sample rate must be positive");
  for (double s : wave.samples)
    if (!std::isfinite(s)) throw DataError("waveform has non-finite samples");
}

Waveform read_wav(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const std::string what = path.string();
  if (buf.size() >= 4 && std::memcmp(buf.data(), "RIFF", 4) == 0) return parse_riff(buf, what);
  if (buf.size() >= 7 && std::memcmp(buf.data(), "NIST_1A", 7) == 0) return parse_sphere(buf, what);
  throw DataError(what + ": unrecognized audio container");
}

void write_wav(const std::filesystem::path& path, const Waveform& wave, WavEncoding encoding) {
  validate(wave);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio file: " + path.string());
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * (bits / 8));
  const std::uint32_t rate = static_cast<std::uint32_t>(wave.sample_rate_hz);
  out.write("RIFF", 4);
  put(out, std::uint32_t{36 + data_bytes});
  out.write("WAVEfmt ", 8);
  put(out, std::uint32_t{16});
  put(out, format);
  put(out, std::uint16_t{1});
  put(out, rate);
  put(out, std::uint32_t{rate * (bits / 8U)});
  put(out, std::uint16_t(bits / 8));
  put(out, bits);
  out.write("data", 4);
  put(out, data_bytes);
  for (double s : wave.samples) {
    if (encoding == WavEncoding::pcm16) {
      const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      put(out, static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
    } else {
      put(out, static_cast<float>(s));
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace gasseg
