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


#include <algorithm>
#include <cstring>

#include "adafe/audio_io.hpp"
#include "test_util.hpp"

namespace adafe {
namespace {

using testing::sine;
using testing::wave;

// Hand-assembled RIFF/WAVE stream, independent of encode_wav.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                    std::uint16_t bits, const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> b;
  auto u16 = [&](std::uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back(v >> 8);
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
  };
  auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
  tag("RIFF");
  u32(static_cast<std::uint32_t>(36 + payload.size()));
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  tag("data");
  u32(static_cast<std::uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

std::vector<std::uint8_t> pcm16_payload(const std::vector<std::int16_t>& s) {
  std::vector<std::uint8_t> p;
  for (std::int16_t v : s) {
    const auto u = static_cast<std::uint16_t>(v);
    p.push_back(u & 0xff);
    p.push_back(u >> 8);
  }
  return p;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no adafe::Error thrown";
  return Errc::kIo;
}

TEST(DecodeWav, FullScalePcmNormalizesByPowerOfTwo) {
  const auto w = decode_wav(wav_bytes(1, 1, 16000, 16, pcm16_payload({32767, 0, -32768})));
  ASSERT_EQ(w.samples.size(), 3u);
  EXPECT_FLOAT_EQ(w.samples[0], 32767.0f / 32768.0f);
  EXPECT_EQ(w.samples[1], 0.0f);
  EXPECT_EQ(w.samples[2], -1.0f);
  EXPECT_EQ(w.sample_rate, 16000);
}

TEST(DecodeWav, ReadsRateFromHeader) {
  EXPECT_EQ(decode_wav(wav_bytes(1, 1, 44100, 16, pcm16_payload({1}))).sample_rate, 44100);
}

TEST(DecodeWav, SineRoundTripKeepsAmplitudeWithinOneLsb) {
  const double amp = 0.8;
  const auto w = wave(sine(440.0, 16000, amp));
  const auto back = decode_wav(encode_wav(w));
  ASSERT_EQ(back.samples.size(), 16000u);
  float peak = 0.0f;
  for (float v : back.samples) peak = std::max(peak, std::abs(v));
  float ref = 0.0f;
  for (float v : w.samples) ref = std::max(ref, std::abs(v));
  EXPECT_NEAR(peak, ref, 1.0 / 32768.0);
}

TEST(DecodeWav, PcmRoundTripIsWithinOneLsbEverywhere) {
  const auto x = testing::noise(11, 4000, -1.0, 1.0);
  Waveform w = wave(std::vector<float>(x.begin(), x.end()));
  const auto back = decode_wav(encode_wav(w));
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(back.samples[i], w.samples[i], 1.0 / 32768.0) << i;
}

TEST(DecodeWav, FloatRoundTripIsExact) {
  const auto x = testing::noise(12, 1000);
  Waveform w = wave(std::vector<float>(x.begin(), x.end()), 8000);
  const auto back = decode_wav(encode_wav(w, WavEncoding::kFloat32));
  EXPECT_EQ(back.samples, w.samples);
  EXPECT_EQ(back.sample_rate, 8000);
}

TEST(DecodeWav, RejectsNonWav) {
  const std::vector<std::uint8_t> junk = {'O', 'g', 'g', 'S', 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(code_of([&] { decode_wav(junk); }), Errc::kMalformedHeader);
  EXPECT_EQ(code_of([&] { decode_wav(std::vector<std::uint8_t>{}); }), Errc::kMalformedHeader);
}

TEST(DecodeWav, RejectsStereoAndCompressed) {
  EXPECT_EQ(code_of([&] { decode_wav(wav_bytes(1, 2, 16000, 16, pcm16_payload({1, 2}))); }),
            Errc::kUnsupportedEncoding);
  EXPECT_EQ(code_of([&] { decode_wav(wav_bytes(2, 1, 16000, 4, {0x12, 0x34})); }), Errc::kUnsupportedEncoding);
  EXPECT_EQ(code_of([&] { decode_wav(wav_bytes(1, 1, 16000, 8, {0x80})); }), Errc::kUnsupportedEncoding);
}

TEST(DecodeWav, RejectsEmptyData) {
  EXPECT_EQ(code_of([&] { decode_wav(wav_bytes(1, 1, 16000, 16, {})); }), Errc::kEmptyAudio);
}

TEST(RawFormat, RoundTripsAndIsDetectedByMagic) {
  testing::ScratchDir dir("raw");
  const auto x = testing::noise(5, 777);
  Waveform w = wave(std::vector<float>(x.begin(), x.end()), 22050);
  write_file_bytes(dir.path() / "clip.raw", encode_raw(w));
  const auto back = load_audio(dir.path() / "clip.raw");
  EXPECT_EQ(back.samples, w.samples);
  EXPECT_EQ(back.sample_rate, 22050);
  const auto bytes = encode_raw(w);
  EXPECT_EQ(std::memcmp(bytes.data(), "ADFE", 4), 0);
  EXPECT_EQ(bytes.size(), 16 + 4 * x.size());
}

TEST(Ensure16k, PassesThroughBitIdentical) {
  const auto x = testing::noise(3, 1234);
  Waveform w = wave(std::vector<float>(x.begin(), x.end()));
  const auto out = ensure_16k(w);
  EXPECT_EQ(out.samples, w.samples);
  EXPECT_EQ(out.sample_rate, 16000);
}

TEST(Ensure16k, DownsampledToneKeepsItsDftPeak) {
  const auto out = ensure_16k(wave(sine(1000.0, 16000, 0.5, 32000.0), 32000));
  ASSERT_EQ(out.sample_rate, 16000);
  ASSERT_EQ(out.samples.size(), 8000u);
  // 4000-point DFT of the first 0.25 s: 4 Hz bins, 1 kHz sits at bin 250.
  std::vector<float> head(out.samples.begin(), out.samples.begin() + 4000);
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t k = 1; k < 2000; ++k) {
    const double m = testing::dft_mag(head, k, 4000);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  EXPECT_EQ(best, 250u);
}

TEST(Ensure16k, LengthScalesWithRateRatio) {
  const auto up = ensure_16k(wave(sine(300.0, 4000, 0.5, 8000.0), 8000));
  EXPECT_NEAR(static_cast<double>(up.samples.size()), 8000.0, 1.0);
  for (int rate : {22050, 44100, 48000}) {
    const auto n_in = static_cast<std::size_t>(rate / 2);
    const auto out = ensure_16k(wave(sine(300.0, n_in, 0.5, rate), rate));
    EXPECT_NEAR(static_cast<double>(out.samples.size()), 8000.0, 1.0) << rate;
  }
}

TEST(Ensure16k, RejectsUnsupportedRate) {
  EXPECT_EQ(code_of([&] { ensure_16k(wave({0.1f, 0.2f}, 11025)); }), Errc::kUnsupportedRate);
}

TEST(FrameSignal, OneSecondGives91FramesWith16PaddedZeros) {
  const auto fs = frame_signal(wave(std::vector<float>(16000, 0.25f)), 11.0);
  EXPECT_EQ(fs.frame_len, 176u);
  EXPECT_EQ(fs.num_frames, (16000u + 175u) / 176u);
  EXPECT_EQ(fs.num_frames, 91u);
  const auto last = fs.frame(90);
  const std::size_t used = 16000 - 90 * 176;
  for (std::size_t i = 0; i < 176; ++i) EXPECT_EQ(last[i], i < used ? 0.25f : 0.0f) << i;
  EXPECT_EQ(176 - used, 16u);
}

TEST(FrameSignal, ExactAndDegenerateLengths) {
  const auto one = frame_signal(wave(std::vector<float>(176, 1.0f)));
  EXPECT_EQ(one.num_frames, 1u);
  EXPECT_TRUE(std::all_of(one.data.begin(), one.data.end(), [](float v) { return v == 1.0f; }));
  const auto tiny = frame_signal(wave({0.5f}));
  EXPECT_EQ(tiny.num_frames, 1u);
  EXPECT_EQ(tiny.data[0], 0.5f);
  EXPECT_EQ(std::count(tiny.data.begin(), tiny.data.end(), 0.0f), 175);
}

TEST(FrameSignal, RejectsEmptyInput) {
  EXPECT_EQ(code_of([&] { frame_signal(wave({})); }), Errc::kEmptyAudio);
}

TEST(FrameSignalProperty, UnframeRestoresInputExactly) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(3000);
    const auto x = testing::noise(100 + trial, n);
    Waveform w = wave(std::vector<float>(x.begin(), x.end()));
    EXPECT_EQ(unframe(frame_signal(w)), w.samples) << n;
  }
}

TEST(FrameSignalProperty, FrameCountIsMonotoneInLength) {
  std::size_t prev = 0;
  for (std::size_t n = 1; n <= 1000; ++n) {
    const std::size_t t = frame_signal(wave(std::vector<float>(n, 0.0f))).num_frames;
    ASSERT_GE(t, prev) << n;
    prev = t;
  }
}

}  // namespace
}  // namespace adafe
