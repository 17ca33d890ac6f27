// include/mcsep/wpe.hpp

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

#include "mcsep/core.hpp"

namespace mcsep {

struct WpeConfig {
  std::size_t taps = 10;
  std::size_t delay = 3;
  std::size_t iterations = 3;
  double epsilon = 1e-8;

  void Validate() const;
};

// Iterative weighted-prediction-error dereverberation. Each frequency is
// solved independently: the per-frame variance of the current estimate
// weights a multichannel linear-prediction problem over `taps` frames that
// start `delay` frames in the past, and the prediction is subtracted.
Spectrogram Dereverberate(const Spectrogram &spec, const WpeConfig &cfg);

}  // namespace mcsep
