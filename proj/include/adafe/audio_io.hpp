// Copyright (c) 2026 The adafe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Audio decoding, the 16 kHz mono contract, and rectangular framing.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "adafe/error.hpp"

namespace adafe {

inline constexpr int kTargetRate = 16000;

struct Waveform {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = kTargetRate;
  std::string source_id;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// T x F matrix of contiguous, non-overlapping frames. The trailing partial
// frame is zero padded; valid_samples remembers the unpadded length.
struct FrameSequence {
  std::vector<float> data;  // row-major, num_frames * frame_len
  std::size_t num_frames = 0;
  std::size_t frame_len = 0;
  std::size_t valid_samples = 0;
  double frame_len_ms = 0.0;
  int sample_rate = kTargetRate;

  std::span<const float> frame(std::size_t t) const {
    return {data.data() + t * frame_len, frame_len};
  }
};

namespace detail {

inline std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

inline std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

inline bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

inline float float_from_bits(std::uint32_t bits) {
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline std::uint32_t bits_from_float(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return bits;
}

}  // namespace detail

inline constexpr std::uint16_t kWavPcm = 1;
inline constexpr std::uint16_t kWavFloat = 3;
inline constexpr std::uint16_t kWavExtensible = 0xfffe;

enum class WavEncoding { kPcm16, kFloat32 };

// Parses a RIFF/WAVE container holding mono 16-bit PCM or 32-bit float.
inline Waveform decode_wav(std::span<const std::uint8_t> bytes,
                           std::string source_id = {}) {
  using namespace detail;
  require(bytes.size() >= 12 && tag_is(bytes, 0, "RIFF") && tag_is(bytes, 8, "WAVE"),
          Errc::kMalformedHeader, "not a RIFF/WAVE stream");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::span<const std::uint8_t> payload;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (tag_is(bytes, pos, "fmt ")) {
      require(avail >= 16, Errc::kMalformedHeader, "fmt chunk too short");
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format == kWavExtensible) {
        require(avail >= 26, Errc::kMalformedHeader, "extensible fmt chunk too short");
        format = read_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      payload = bytes.subspan(body, avail);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  require(have_fmt, Errc::kMalformedHeader, "missing fmt chunk");
  require(have_data, Errc::kMalformedHeader, "missing data chunk");
  require(rate > 0, Errc::kMalformedHeader, "zero sample rate");
  require(channels == 1, Errc::kUnsupportedEncoding,
          [&] { return std::to_string(channels) + " channels (mono required)"; });
  const bool pcm16 = format == kWavPcm && bits == 16;
  const bool f32 = format == kWavFloat && bits == 32;
  require(pcm16 || f32, Errc::kUnsupportedEncoding,
          [&] { return "format tag " + std::to_string(format) + " with " + std::to_string(bits) + " bits"; });

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.source_id = std::move(source_id);
  if (pcm16) {
    const std::size_t n = payload.size() / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto raw = static_cast<std::int16_t>(read_u16(payload, 2 * i));
      w.samples[i] = static_cast<float>(raw) / 32768.0f;
    }
  } else {
    const std::size_t n = payload.size() / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) w.samples[i] = float_from_bits(read_u32(payload, 4 * i));
  }
  require(!w.samples.empty(), Errc::kEmptyAudio, "no samples in data chunk");
  return w;
}

inline std::int16_t to_pcm16(float x) {
  const double scaled = std::nearbyint(static_cast<double>(x) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline std::vector<std::uint8_t> encode_wav(const Waveform& w,
                                            WavEncoding enc = WavEncoding::kPcm16) {
  using namespace detail;
  const bool pcm = enc == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * bits / 8);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm ? kWavPcm : kWavFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * bits / 8);
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float x : w.samples) {
    if (pcm) {
      put_u16(out, static_cast<std::uint16_t>(to_pcm16(x)));
    } else {
      put_u32(out, bits_from_float(x));
    }
  }
  return out;
}

// Raw fixture format: "ADFE", u32 rate, u64 length, then float32 samples,
// all little endian.
inline std::vector<std::uint8_t> encode_raw(const Waveform& w) {
  using namespace detail;
  std::vector<std::uint8_t> out;
  out.reserve(16 + 4 * w.samples.size());
  put_tag(out, "ADFE");
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  const std::uint64_t n = w.samples.size();
  put_u32(out, static_cast<std::uint32_t>(n & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(n >> 32));
  for (float x : w.samples) put_u32(out, bits_from_float(x));
  return out;
}

inline Waveform decode_raw(std::span<const std::uint8_t> bytes, std::string source_id = {}) {
  using namespace detail;
  require(bytes.size() >= 16 && tag_is(bytes, 0, "ADFE"), Errc::kMalformedHeader,
          "not an ADFE raw stream");
  Waveform w;
  w.sample_rate = static_cast<int>(read_u32(bytes, 4));
  const std::uint64_t n = static_cast<std::uint64_t>(read_u32(bytes, 8)) |
                          (static_cast<std::uint64_t>(read_u32(bytes, 12)) << 32);
  require(bytes.size() >= 16 + 4 * n, Errc::kMalformedHeader, "truncated sample payload");
  require(n > 0, Errc::kEmptyAudio, "zero-length raw stream");
  w.samples.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) w.samples[i] = float_from_bits(read_u32(bytes, 16 + 4 * i));
  w.source_id = std::move(source_id);
  return w;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::kIo, [&] { return "cannot open " + path.string(); });
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::kIo, [&] { return "cannot write " + path.string(); });
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), Errc::kIo, [&] { return "short write to " + path.string(); });
}

// Decodes either a RIFF/WAVE or an ADFE raw file, chosen by magic.
inline Waveform load_audio(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "ADFE", 4) == 0) {
    return decode_raw(bytes, path.string());
  }
  return decode_wav(bytes, path.string());
}

inline constexpr std::array<int, 6> kAcceptedRates = {8000, 16000, 22050, 32000, 44100, 48000};

namespace detail {

// Hann-windowed sinc kernel; zero_crossings is the half-width measured in
// zero crossings of the (possibly narrowed) sinc.
inline double windowed_sinc(double x, double cutoff, double zero_crossings) {
  const double u = x * cutoff;
  if (std::abs(u) >= zero_crossings) return 0.0;
  const double win = 0.5 * (1.0 + std::cos(std::numbers::pi * u / zero_crossings));
  const double s = u == 0.0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
  return cutoff * s * win;
}

}  // namespace detail

// Resamples to 16 kHz. Integer ratios (x2 up, /2 and /3 down) use a
// windowed-sinc polyphase filter; 22.05/44.1 kHz fall back to linear
// interpolation, which does not band-limit.
inline Waveform ensure_16k(const Waveform& w) {
  require(std::find(kAcceptedRates.begin(), kAcceptedRates.end(), w.sample_rate) !=
              kAcceptedRates.end(),
          Errc::kUnsupportedRate, [&] { return std::to_string(w.sample_rate) + " Hz"; });
  if (w.sample_rate == kTargetRate) return w;

  Waveform out;
  out.sample_rate = kTargetRate;
  out.source_id = w.source_id;
  const auto& x = w.samples;
  const std::size_t n_in = x.size();
  const int rate = w.sample_rate;

  if (kTargetRate % rate == 0 || rate % kTargetRate == 0) {
    constexpr double kZeroCrossings = 16.0;
    const bool up = kTargetRate > rate;
    const int factor = up ? kTargetRate / rate : rate / kTargetRate;
    const double cutoff = up ? 1.0 : 1.0 / factor;  // in input-sample units
    const std::size_t n_out = up ? n_in * factor : (n_in + factor - 1) / factor;
    const double reach = kZeroCrossings / cutoff;
    out.samples.resize(n_out);

    // One kernel table per output phase.
    const int phases = up ? factor : 1;
    const long half = static_cast<long>(std::ceil(reach));
    std::vector<std::vector<double>> table(phases, std::vector<double>(2 * half + 1));
    for (int ph = 0; ph < phases; ++ph) {
      const double frac = up ? static_cast<double>(ph) / factor : 0.0;
      for (long k = -half; k <= half; ++k) {
        table[ph][k + half] = detail::windowed_sinc(frac - static_cast<double>(k), cutoff, kZeroCrossings);
      }
    }
    for (std::size_t n = 0; n < n_out; ++n) {
      const long base = up ? static_cast<long>(n / factor) : static_cast<long>(n * factor);
      const auto& h = table[up ? n % factor : 0];
      double acc = 0.0;
      for (long k = -half; k <= half; ++k) {
        const long m = base + k;
        if (m < 0 || m >= static_cast<long>(n_in)) continue;
        acc += h[k + half] * x[m];
      }
      out.samples[n] = static_cast<float>(acc);
    }
  } else {
    const double step = static_cast<double>(rate) / kTargetRate;
    const auto n_out = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_in) * kTargetRate / rate));
    out.samples.resize(n_out);
    for (std::size_t n = 0; n < n_out; ++n) {
      const double pos = n * step;
      const auto i = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i);
      const float a = x[std::min(i, n_in - 1)];
      const float b = x[std::min(i + 1, n_in - 1)];
      out.samples[n] = static_cast<float>(a + frac * (b - a));
    }
  }
  return out;
}

inline std::size_t frame_length_samples(double frame_len_ms, int sample_rate) {
  return static_cast<std::size_t>(std::llround(frame_len_ms * sample_rate / 1000.0));
}

inline FrameSequence frame_signal(const Waveform& w, double frame_len_ms = 11.0) {
  require(!w.samples.empty(), Errc::kEmptyAudio, "cannot frame an empty waveform");
  require(frame_len_ms > 0.0, Errc::kInvalidConfig, "frame length must be positive");
  FrameSequence fs;
  fs.frame_len = frame_length_samples(frame_len_ms, w.sample_rate);
  require(fs.frame_len >= 1, Errc::kInvalidConfig, "frame shorter than one sample");
  fs.frame_len_ms = frame_len_ms;
  fs.sample_rate = w.sample_rate;
  fs.valid_samples = w.samples.size();
  fs.num_frames = (w.samples.size() + fs.frame_len - 1) / fs.frame_len;
  fs.data.assign(fs.num_frames * fs.frame_len, 0.0f);
  std::copy(w.samples.begin(), w.samples.end(), fs.data.begin());
  return fs;
}

// Inverse of frame_signal: concatenates frames and trims the padding.
inline std::vector<float> unframe(const FrameSequence& fs) {
  return {fs.data.begin(), fs.data.begin() + static_cast<std::ptrdiff_t>(fs.valid_samples)};
}

}  // namespace adafe
