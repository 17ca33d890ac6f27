// src/stft.cpp

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

#include "mcsep/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <numbers>

namespace mcsep {

namespace {

// Owns one pair of FFTW plans for a given size; plans are created with
// FFTW_ESTIMATE so that results do not depend on planner timing.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        time_(static_cast<double *>(fftw_malloc(sizeof(double) * n))),
        freq_(static_cast<fftw_complex *>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), time_, freq_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq_, time_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  double *time() { return time_; }
  cdouble freq(std::size_t k) const { return {freq_[k][0], freq_[k][1]}; }
  void set_freq(std::size_t k, cdouble v) {
    freq_[k][0] = v.real();
    freq_[k][1] = v.imag();
  }
  void Forward() { fftw_execute(forward_); }
  // Unnormalized c2r; caller divides by n.
  void Inverse() { fftw_execute(inverse_); }

 private:
  std::size_t n_;
  double *time_;
  fftw_complex *freq_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

// Reflect index into [0, length), numpy "reflect" convention (edge not repeated).
std::size_t Reflect(long long i, std::size_t length) {
  const long long n = static_cast<long long>(length);
  if (n == 1) return 0;
  const long long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

void StftConfig::Validate() const {
  if (window_size == 0 || window_size % 2 != 0)
    throw Error(ErrorCode::kInvalidArgument, "window_size must be even and positive");
  if (hop == 0 || hop > window_size)
    throw Error(ErrorCode::kInvalidArgument, "hop must satisfy 0 < hop <= window_size");
  if (!(sample_rate > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "sample_rate must be positive");
  const auto w = MakeWindow(*this);
  for (std::size_t i = 0; i < hop; ++i) {
    double sum = 0.0;
    for (std::size_t j = i; j < window_size; j += hop) sum += w[j] * w[j];
    if (!(sum > 1e-10))
      throw Error(ErrorCode::kInvalidArgument,
                  "window/hop pair does not overlap-add to a positive envelope");
  }
}

std::vector<double> MakeWindow(const StftConfig &cfg) {
  std::vector<double> w(cfg.window_size, 1.0);
  if (cfg.window == WindowType::kHann) {
    const double n = static_cast<double>(cfg.window_size);
    for (std::size_t i = 0; i < cfg.window_size; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  }
  return w;
}

Spectrogram Stft(const Signal &signal, const StftConfig &cfg) {
  cfg.Validate();
  if (signal.empty())
    throw Error(ErrorCode::kDimensionMismatch, "signal has no channels");
  const std::size_t length = signal[0].size();
  for (const auto &ch : signal)
    if (ch.size() != length)
      throw Error(ErrorCode::kDimensionMismatch, "channels differ in length");
  if (length < cfg.window_size)
    throw Error(ErrorCode::kSignalTooShort,
                "signal has " + std::to_string(length) + " samples, need at least " +
                    std::to_string(cfg.window_size));

  const std::size_t N = cfg.window_size, F = cfg.num_freqs(),
                    T = cfg.num_frames(length), M = signal.size();
  const long long pad = static_cast<long long>(N / 2);
  const auto window = MakeWindow(cfg);
  Spectrogram spec(F, T, M, cfg.sample_rate, cfg.hop);
  RealFft fft(N);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t t = 0; t < T; ++t) {
      const long long start = static_cast<long long>(t * cfg.hop) - pad;
      for (std::size_t i = 0; i < N; ++i)
        fft.time()[i] = window[i] * signal[m][Reflect(start + static_cast<long long>(i), length)];
      fft.Forward();
      for (std::size_t f = 0; f < F; ++f) spec(f, t, m) = fft.freq(f);
    }
  }
  return spec;
}

Signal Istft(const Spectrogram &spec, const StftConfig &cfg, std::size_t length) {
  cfg.Validate();
  if (spec.num_freqs() != cfg.num_freqs())
    throw Error(ErrorCode::kDimensionMismatch,
                "spectrogram has " + std::to_string(spec.num_freqs()) +
                    " bins, config implies " + std::to_string(cfg.num_freqs()));
  const std::size_t N = cfg.window_size, F = cfg.num_freqs(), T = spec.num_frames(),
                    M = spec.num_channels();
  const std::size_t pad = N / 2;
  const std::size_t padded_len = (T - 1) * cfg.hop + N;
  const auto window = MakeWindow(cfg);

  std::vector<double> envelope(padded_len, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i) envelope[t * cfg.hop + i] += window[i] * window[i];

  Signal out(M, std::vector<double>(length, 0.0));
  RealFft fft(N);
  std::vector<double> acc(padded_len);
  for (std::size_t m = 0; m < M; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        cdouble v = spec(f, t, m);
        // DC and Nyquist of a real frame are real.
        if (f == 0 || f == F - 1) v = {v.real(), 0.0};
        fft.set_freq(f, v);
      }
      fft.Inverse();
      const double scale = 1.0 / static_cast<double>(N);
      for (std::size_t i = 0; i < N; ++i)
        acc[t * cfg.hop + i] += window[i] * fft.time()[i] * scale;
    }
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t j = i + pad;
      if (j < padded_len && envelope[j] > 1e-10) out[m][i] = acc[j] / envelope[j];
    }
  }
  return out;
}

}  // namespace mcsep
