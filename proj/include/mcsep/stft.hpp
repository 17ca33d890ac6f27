// include/mcsep/stft.hpp

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

#include <cstddef>
#include <span>
#include <vector>

#include "mcsep/core.hpp"

namespace mcsep {

enum class WindowType { kHann, kRectangular };

// Analysis/synthesis configuration. The defaults are the 16 kHz, 512/160
// setup used throughout the project.
struct StftConfig {
  std::size_t window_size = 512;
  std::size_t hop = 160;
  WindowType window = WindowType::kHann;
  double sample_rate = 16000.0;

  std::size_t num_freqs() const { return window_size / 2 + 1; }
  // Number of frames produced for a signal of `length` samples.
  std::size_t num_frames(std::size_t length) const { return 1 + length / hop; }
  double frame_rate() const { return sample_rate / static_cast<double>(hop); }

  // Throws kInvalidArgument unless 0 < hop <= window_size, window_size is
  // even, and the squared window overlap-adds to a strictly positive sum.
  void Validate() const;
};

// Periodic window of length cfg.window_size.
std::vector<double> MakeWindow(const StftConfig &cfg);

// Multichannel real signal, one vector per channel.
using Signal = std::vector<std::vector<double>>;

// Frames are centered at t * hop after reflect-padding window_size/2 samples
// on each side, so T = 1 + length / hop.
Spectrogram Stft(const Signal &signal, const StftConfig &cfg);

// Weighted overlap-add inverse; returns `length` samples per channel.
Signal Istft(const Spectrogram &spec, const StftConfig &cfg, std::size_t length);

}  // namespace mcsep
