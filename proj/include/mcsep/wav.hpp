// include/mcsep/wav.hpp

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

#pragma once

#include <filesystem>

#include "mcsep/stft.hpp"

namespace mcsep {

struct WavData {
  double sample_rate = 16000.0;
  Signal channels;  // one vector per channel, samples in [-1, 1] for PCM
};

// Reads PCM 16-bit or IEEE float32 RIFF/WAVE (plain or extensible format).
WavData ReadWav(const std::filesystem::path &path);

// Writes IEEE float32 samples; output bytes depend only on the input values.
void WriteWav(const std::filesystem::path &path, const WavData &wav);

// Throws kUnsupportedRate when the file rate differs from `expected_rate`.
void RequireRate(const WavData &wav, double expected_rate);

}  // namespace mcsep
