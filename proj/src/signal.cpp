#include "sedattack/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "sedattack/error.hpp"

namespace sedattack {

namespace {

constexpr double kPcmScale = 32768.0;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform::Waveform(std::vector<double> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (samples_.empty()) throw ValidationError("waveform must contain at least one sample");
  if (sample_rate_ <= 0) throw ValidationError("sample rate must be positive");
}

std::int16_t quantize_sample(double x) {
  const double code = std::round(x * kPcmScale);
  return static_cast<std::int16_t>(std::clamp(code, -32768.0, 32767.0));
}

Waveform quantize_to_pcm(const Waveform& w) {
  std::vector<double> out(w.samples());
  for (double& x : out) x = quantize_sample(x) / kPcmScale;
  return Waveform(std::move(out), w.sample_rate());
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();

  if (n < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw FormatError("malformed WAV header (missing RIFF/WAVE tag): " + path.string());
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint16_t format = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t chunk_size = read_u32(data + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > n) {
      throw FormatError("malformed WAV header (chunk overruns file): " + path.string());
    }
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw FormatError("malformed WAV header (short fmt chunk): " + path.string());
      format = read_u16(data + body);
      channels = read_u16(data + body + 2);
      rate = read_u32(data + body + 4);
      bits = read_u16(data + body + 14);
      have_fmt = true;
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("malformed WAV header (data before fmt): " + path.string());
      if (format != 1) throw FormatError("unsupported WAV encoding (not PCM): " + path.string());
      if (channels != 1) {
        throw FormatError("unsupported WAV channel count " + std::to_string(channels) +
                          " (mono required): " + path.string());
      }
      if (bits != 16) {
        throw FormatError("unsupported WAV bit depth " + std::to_string(bits) +
                          " (16-bit required): " + path.string());
      }
      if (chunk_size % 2 != 0) throw FormatError("malformed WAV data chunk size: " + path.string());
      std::vector<double> samples(chunk_size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto code = static_cast<std::int16_t>(read_u16(data + body + 2 * i));
        samples[i] = code / kPcmScale;
      }
      if (samples.empty()) throw FormatError("WAV file has no samples: " + path.string());
      return Waveform(std::move(samples), static_cast<int>(rate));
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw FormatError("malformed WAV header (no data chunk): " + path.string());
}

void save_wav(const Waveform& w, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] >= -1.0 && w[i] <= 1.0)) {
      throw ValidationError("sample " + std::to_string(i) + " = " + std::to_string(w[i]) +
                            " outside [-1, 1]; clamp before saving");
    }
  }
  const auto data_bytes = static_cast<std::uint32_t>(w.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate()));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate()) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples()) put_u16(out, static_cast<std::uint16_t>(quantize_sample(s)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write WAV file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

SnrDb snr_db(const Waveform& clean, const Waveform& perturbed) {
  if (clean.size() != perturbed.size()) {
    throw ShapeError("snr_db: length mismatch (" + std::to_string(clean.size()) + " vs " +
                     std::to_string(perturbed.size()) + ")");
  }
  if (clean.sample_rate() != perturbed.sample_rate()) {
    throw ShapeError("snr_db: sample rate mismatch");
  }
  double signal = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    signal += clean[i] * clean[i];
    const double d = clean[i] - perturbed[i];
    noise += d * d;
  }
  if (signal == 0.0) throw NumericError("snr_db: clean signal is all zeros, ratio undefined");
  if (noise == 0.0) return SnrDb::infinite();
  return SnrDb::finite(10.0 * std::log10(signal / noise));
}

Waveform clamp(const Waveform& w, double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("clamp: lo must be below hi");
  std::vector<double> out(w.samples());
  for (double& s : out) s = std::clamp(s, lo, hi);
  return Waveform(std::move(out), w.sample_rate());
}

Waveform mix(const Waveform& a, const Waveform& b, double gain_b) {
  if (a.sample_rate() != b.sample_rate()) throw ValidationError("mix: sample rate mismatch");
  if (b.size() > a.size()) throw ValidationError("mix: second signal longer than the first");
  std::vector<double> out(a.samples());
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += gain_b * b[i];
  return Waveform(std::move(out), a.sample_rate());
}

}  // namespace sedattack
