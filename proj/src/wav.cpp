// src/wav.cpp

// Copyright 2026  The mcsep Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "mcsep/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace mcsep {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T ReadLe(const unsigned char *p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void WriteLe(std::ostream &out, T v) {
  out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

}  // namespace

WavData ReadWav(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::kIoError, name + " is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char *data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char *chunk = bytes.data() + pos;
    const std::uint32_t size = ReadLe<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size())
      throw Error(ErrorCode::kIoError, name + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::kIoError, name + ": short fmt chunk");
      format = ReadLe<std::uint16_t>(bytes.data() + body);
      channels = ReadLe<std::uint16_t>(bytes.data() + body + 2);
      rate = ReadLe<std::uint32_t>(bytes.data() + body + 4);
      bits = ReadLe<std::uint16_t>(bytes.data() + body + 14);
      if (format == kFormatExtensible && size >= 26)
        format = ReadLe<std::uint16_t>(bytes.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!data || channels == 0)
    throw Error(ErrorCode::kIoError, name + ": missing fmt or data chunk");

  WavData wav;
  wav.sample_rate = rate;
  wav.channels.assign(channels, {});
  if (format == kFormatPcm && bits == 16) {
    const std::size_t frames = data_size / (2u * channels);
    for (auto &ch : wav.channels) ch.resize(frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::size_t c = 0; c < channels; ++c)
        wav.channels[c][i] =
            ReadLe<std::int16_t>(data + 2 * (i * channels + c)) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t frames = data_size / (4u * channels);
    for (auto &ch : wav.channels) ch.resize(frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::size_t c = 0; c < channels; ++c)
        wav.channels[c][i] = ReadLe<float>(data + 4 * (i * channels + c));
  } else {
    throw Error(ErrorCode::kIoError,
                name + ": only 16-bit PCM and 32-bit float are supported");
  }
  return wav;
}

void WriteWav(const std::filesystem::path &path, const WavData &wav) {
  if (wav.channels.empty())
    throw Error(ErrorCode::kInvalidArgument, "cannot write a WAV with no channels");
  const std::size_t frames = wav.channels[0].size();
  for (const auto &ch : wav.channels)
    if (ch.size() != frames)
      throw Error(ErrorCode::kDimensionMismatch, "channels differ in length");
  const auto channels = static_cast<std::uint16_t>(wav.channels.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(wav.sample_rate));
  const std::uint32_t data_size = static_cast<std::uint32_t>(frames * channels * 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  out.write("RIFF", 4);
  WriteLe<std::uint32_t>(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  WriteLe<std::uint32_t>(out, 16);
  WriteLe<std::uint16_t>(out, kFormatFloat);
  WriteLe<std::uint16_t>(out, channels);
  WriteLe<std::uint32_t>(out, rate);
  WriteLe<std::uint32_t>(out, rate * channels * 4);
  WriteLe<std::uint16_t>(out, static_cast<std::uint16_t>(channels * 4));
  WriteLe<std::uint16_t>(out, 32);
  out.write("data", 4);
  WriteLe<std::uint32_t>(out, data_size);
  for (std::size_t i = 0; i < frames; ++i)
    for (const auto &ch : wav.channels) WriteLe<float>(out, static_cast<float>(ch[i]));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

void RequireRate(const WavData &wav, double expected_rate) {
  if (std::abs(wav.sample_rate - expected_rate) > 0.5)
    throw Error(ErrorCode::kUnsupportedRate,
                "file rate " + std::to_string(wav.sample_rate) + " Hz, expected " +
                    std::to_string(expected_rate) + " Hz (resampling is not supported)");
}

}  // namespace mcsep
