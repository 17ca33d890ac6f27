// include/mcsep/cacgmm.hpp

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
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mcsep/core.hpp"

namespace mcsep {

// Fitted complex angular central Gaussian mixture. Shape matrices are indexed
// [n * F + f]; weights (n, f); responsibilities (n, f, t) flattened as
// (n * F + f) * T + t.
struct CacgmmParams {
  std::size_t num_sources = 0;
  std::size_t num_freqs = 0;
  std::size_t num_frames = 0;
  std::size_t num_channels = 0;
  std::vector<Eigen::MatrixXcd> shape_matrices;
  std::vector<double> weights;
  std::vector<double> responsibilities;
  std::optional<ActivityMask> guide;

  const Eigen::MatrixXcd &shape(std::size_t n, std::size_t f) const {
    return shape_matrices[n * num_freqs + f];
  }
  Eigen::MatrixXcd &shape(std::size_t n, std::size_t f) {
    return shape_matrices[n * num_freqs + f];
  }
  double weight(std::size_t n, std::size_t f) const { return weights[n * num_freqs + f]; }
  double &weight(std::size_t n, std::size_t f) { return weights[n * num_freqs + f]; }
  double responsibility(std::size_t n, std::size_t f, std::size_t t) const {
    return responsibilities[(n * num_freqs + f) * num_frames + t];
  }
  double &responsibility(std::size_t n, std::size_t f, std::size_t t) {
    return responsibilities[(n * num_freqs + f) * num_frames + t];
  }

  // Frame-level activity: responsibilities averaged over frequency, (n, t).
  RealMatrix FrameMasks() const;
};

struct CacgmmOptions {
  std::size_t iterations = 30;
  std::uint64_t seed = 0;
  double eigenvalue_floor = 1e-6;
  // Overrides the default initialization (guide or Dirichlet(1) draws);
  // laid out like CacgmmParams::responsibilities. Guide zeros still apply.
  std::optional<std::vector<double>> initial_responsibilities;
};

struct CacgmmFit {
  CacgmmParams params;
  // Log-likelihood after each iteration's M-step.
  std::vector<double> log_likelihood_trace;
  // Bins with zero norm; they are excluded from all updates.
  std::size_t degenerate_bins = 0;
};

// EM for the mixture over normalized observation directions. With a guide,
// responsibilities of source n at frame t are zero wherever the guide is
// inactive (guided source separation); without, the fit is blind.
CacgmmFit FitCacgmm(const Spectrogram &spec, std::size_t num_sources,
                    const std::optional<ActivityMask> &guide,
                    const CacgmmOptions &options);

// Sum over non-degenerate bins of log sum_n w_nft * ACG(z_ft; B_nf), where
// w_nft is the (guide-gated, renormalized) mixture weight.
double CacgmmLogLikelihood(const Spectrogram &spec, const CacgmmParams &params);

// log density of a unit-norm z under the complex angular central Gaussian
// with shape matrix B: log Γ(M) - log(2 π^M) - log det B - M log(z^H B^-1 z).
double AcgLogDensity(const Eigen::VectorXcd &z, const Eigen::MatrixXcd &shape);

// Mask-based source images: out[n](f, t, m) = γ_nft x_ftm.
std::vector<Spectrogram> ApplyResponsibilities(const Spectrogram &spec,
                                               const CacgmmParams &params);

}  // namespace mcsep
