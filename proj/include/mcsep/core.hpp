// include/mcsep/core.hpp

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

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsep {

using cdouble = std::complex<double>;

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kNonFiniteValue,
  kIoError,
  kManifestMismatch,
  kSignalTooShort,
  kTooFewFrames,
  kSingularCorrelation,
  kAllSourcesMaskedAtFrame,
  kNumericalUnderflow,
  kNonInvertibleDiagonalizer,
  kNonPositiveVariance,
  kEvenWidth,
  kEmptyReference,
  kZeroReference,
  kInvalidSnr,
  kTooManySpeakers,
  kMissingMasks,
  kUnsupportedRate,
  kLengthMismatch,
};

const char *ErrorCodeName(ErrorCode code);

// All library failures are reported through this exception type; the code
// identifies the failure class named in the module contracts.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Complex time-frequency tensor of a multichannel signal, stored (f, t, m)
// row-major with the channel index fastest.
class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(std::size_t num_freqs, std::size_t num_frames,
              std::size_t num_channels, double sample_rate = 16000.0,
              std::size_t hop = 160)
      : num_freqs_(num_freqs),
        num_frames_(num_frames),
        num_channels_(num_channels),
        sample_rate_(sample_rate),
        hop_(hop),
        data_(num_freqs * num_frames * num_channels) {}

  std::size_t num_freqs() const { return num_freqs_; }
  std::size_t num_frames() const { return num_frames_; }
  std::size_t num_channels() const { return num_channels_; }
  double sample_rate() const { return sample_rate_; }
  std::size_t hop() const { return hop_; }

  std::size_t index(std::size_t f, std::size_t t, std::size_t m) const {
    return (f * num_frames_ + t) * num_channels_ + m;
  }
  cdouble &operator()(std::size_t f, std::size_t t, std::size_t m) {
    return data_[index(f, t, m)];
  }
  const cdouble &operator()(std::size_t f, std::size_t t, std::size_t m) const {
    return data_[index(f, t, m)];
  }

  // The M channel values of bin (f, t).
  std::span<cdouble> bin(std::size_t f, std::size_t t) {
    return {data_.data() + index(f, t, 0), num_channels_};
  }
  std::span<const cdouble> bin(std::size_t f, std::size_t t) const {
    return {data_.data() + index(f, t, 0), num_channels_};
  }

  std::vector<cdouble> &data() { return data_; }
  const std::vector<cdouble> &data() const { return data_; }

  bool same_shape(const Spectrogram &other) const {
    return num_freqs_ == other.num_freqs_ && num_frames_ == other.num_frames_ &&
           num_channels_ == other.num_channels_;
  }

  // Builds a spectrogram around an existing buffer without checking it; use
  // ValidateSpectrogram before trusting foreign data.
  static Spectrogram FromData(std::size_t num_freqs, std::size_t num_frames,
                              std::size_t num_channels,
                              std::vector<cdouble> data,
                              double sample_rate = 16000.0,
                              std::size_t hop = 160);

 private:
  std::size_t num_freqs_ = 0;
  std::size_t num_frames_ = 0;
  std::size_t num_channels_ = 0;
  double sample_rate_ = 16000.0;
  std::size_t hop_ = 160;
  std::vector<cdouble> data_;
};

// Throws kDimensionMismatch or kNonFiniteValue (with the flat index of the
// first offending entry).
void ValidateSpectrogram(const Spectrogram &spec);

// Binary speaker-activity matrix indexed (n, t).
class ActivityMask {
 public:
  ActivityMask() = default;
  ActivityMask(std::size_t num_sources, std::size_t num_frames,
               std::uint8_t fill = 0)
      : num_sources_(num_sources),
        num_frames_(num_frames),
        data_(num_sources * num_frames, fill ? 1 : 0) {}

  std::size_t num_sources() const { return num_sources_; }
  std::size_t num_frames() const { return num_frames_; }

  bool active(std::size_t n, std::size_t t) const {
    return data_[n * num_frames_ + t] != 0;
  }
  void set(std::size_t n, std::size_t t, bool value) {
    data_[n * num_frames_ + t] = value ? 1 : 0;
  }
  double value(std::size_t n, std::size_t t) const {
    return active(n, t) ? 1.0 : 0.0;
  }

  const std::vector<std::uint8_t> &data() const { return data_; }

  // Returns a copy with an extra always-active row appended (noise source).
  ActivityMask WithNoiseRow() const;
  // Returns a copy with row order given by order[i] = source row of output i.
  ActivityMask Permuted(std::span<const std::size_t> order) const;

  bool operator==(const ActivityMask &other) const = default;

 private:
  std::size_t num_sources_ = 0;
  std::size_t num_frames_ = 0;
  std::vector<std::uint8_t> data_;
};

// Real matrix stored row-major, used for per-(n, t) probabilities.
struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RealMatrix() = default;
  RealMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
};

// Explicitly seeded generator; every stochastic routine takes one of these
// (or a seed) as an argument.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double Uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double Normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  // Circular complex Gaussian with E|z|^2 = variance.
  cdouble ComplexNormal(double variance = 1.0);
  double Exponential() { return std::exponential_distribution<double>(1.0)(engine_); }
  std::uint64_t NextSeed() { return engine_(); }
  std::mt19937_64 &engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

double SquaredNorm(std::span<const cdouble> values);
double SquaredNorm(std::span<const double> values);

}  // namespace mcsep
