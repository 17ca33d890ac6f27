// src/core.cpp

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

#include "mcsep/core.hpp"

#include <cmath>

namespace mcsep {

const char *ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kManifestMismatch: return "ManifestMismatch";
    case ErrorCode::kSignalTooShort: return "SignalTooShort";
    case ErrorCode::kTooFewFrames: return "TooFewFrames";
    case ErrorCode::kSingularCorrelation: return "SingularCorrelation";
    case ErrorCode::kAllSourcesMaskedAtFrame: return "AllSourcesMaskedAtFrame";
    case ErrorCode::kNumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::kNonInvertibleDiagonalizer: return "NonInvertibleDiagonalizer";
    case ErrorCode::kNonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::kEvenWidth: return "EvenWidth";
    case ErrorCode::kEmptyReference: return "EmptyReference";
    case ErrorCode::kZeroReference: return "ZeroReference";
    case ErrorCode::kInvalidSnr: return "InvalidSnr";
    case ErrorCode::kTooManySpeakers: return "TooManySpeakers";
    case ErrorCode::kMissingMasks: return "MissingMasks";
    case ErrorCode::kUnsupportedRate: return "UnsupportedRate";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

Spectrogram Spectrogram::FromData(std::size_t num_freqs, std::size_t num_frames,
                                  std::size_t num_channels,
                                  std::vector<cdouble> data, double sample_rate,
                                  std::size_t hop) {
  Spectrogram spec;
  spec.num_freqs_ = num_freqs;
  spec.num_frames_ = num_frames;
  spec.num_channels_ = num_channels;
  spec.sample_rate_ = sample_rate;
  spec.hop_ = hop;
  spec.data_ = std::move(data);
  return spec;
}

void ValidateSpectrogram(const Spectrogram &spec) {
  const std::size_t F = spec.num_freqs(), T = spec.num_frames(),
                    M = spec.num_channels();
  if (F == 0 || T == 0 || M == 0)
    throw Error(ErrorCode::kDimensionMismatch,
                "spectrogram dimensions must be positive");
  if (spec.data().size() != F * T * M)
    throw Error(ErrorCode::kDimensionMismatch,
                "data length " + std::to_string(spec.data().size()) +
                    " != F*T*M = " + std::to_string(F * T * M));
  const auto &data = spec.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i].real()) || !std::isfinite(data[i].imag())) {
      const std::size_t m = i % M, t = (i / M) % T, f = i / (M * T);
      throw Error(ErrorCode::kNonFiniteValue,
                  "entry (f=" + std::to_string(f) + ", t=" + std::to_string(t) +
                      ", m=" + std::to_string(m) + ") is not finite");
    }
  }
}

ActivityMask ActivityMask::WithNoiseRow() const {
  ActivityMask out(num_sources_ + 1, num_frames_);
  std::copy(data_.begin(), data_.end(), out.data_.begin());
  for (std::size_t t = 0; t < num_frames_; ++t) out.set(num_sources_, t, true);
  return out;
}

ActivityMask ActivityMask::Permuted(std::span<const std::size_t> order) const {
  ActivityMask out(order.size(), num_frames_);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t t = 0; t < num_frames_; ++t)
      out.set(i, t, active(order[i], t));
  return out;
}

cdouble Rng::ComplexNormal(double variance) {
  const double scale = std::sqrt(variance / 2.0);
  const double re = Normal();
  const double im = Normal();
  return {scale * re, scale * im};
}

double SquaredNorm(std::span<const cdouble> values) {
  double sum = 0.0;
  for (const auto &v : values) sum += std::norm(v);
  return sum;
}

double SquaredNorm(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return sum;
}

}  // namespace mcsep
