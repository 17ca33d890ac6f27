// include/mcsep/jdsep.hpp

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

#include "mcsep/arrays.hpp"
#include "mcsep/core.hpp"

namespace mcsep {

/// Parameters of the jointly diagonalized full-rank spatial model with
/// speaker-activity masks. The covariance of bin (f, t) is
///
///   Q_f^-1 diag(y_ft) Q_f^-H,   y_ftm = sum_n mask_nt * psd_nft * gain_nfm,
///
/// with y floored at `psd_floor`. Gains are (n, f, m), PSDs (n, f, t).
struct JdParams {
  std::size_t num_sources = 0;
  std::size_t num_freqs = 0;
  std::size_t num_frames = 0;
  std::size_t num_channels = 0;
  std::vector<Eigen::MatrixXcd> diagonalizers;  // one M x M per frequency
  std::vector<double> gains;
  std::vector<double> psd;
  ActivityMask masks;
  double psd_floor = 1e-10;

  JdParams() = default;
  JdParams(std::size_t N, std::size_t F, std::size_t T, std::size_t M);

  double gain(std::size_t n, std::size_t f, std::size_t m) const {
    return gains[(n * num_freqs + f) * num_channels + m];
  }
  double &gain(std::size_t n, std::size_t f, std::size_t m) {
    return gains[(n * num_freqs + f) * num_channels + m];
  }
  double psd_at(std::size_t n, std::size_t f, std::size_t t) const {
    return psd[(n * num_freqs + f) * num_frames + t];
  }
  double &psd_at(std::size_t n, std::size_t f, std::size_t t) {
    return psd[(n * num_freqs + f) * num_frames + t];
  }

  // Throws kDimensionMismatch, kInvalidArgument (negative entries) or
  // kNonInvertibleDiagonalizer.
  void Validate() const;
  void ValidateAgainst(const Spectrogram &spec) const;
};

/// Nonnegative factorization of the PSDs: psd_nft = sum_k W_nfk H_nkt.
struct NmfPsd {
  std::size_t num_sources = 0;
  std::size_t num_freqs = 0;
  std::size_t num_basis = 0;
  std::size_t num_frames = 0;
  std::vector<double> basis;       // (n, f, k)
  std::vector<double> activation;  // (n, k, t)

  double &w(std::size_t n, std::size_t f, std::size_t k) {
    return basis[(n * num_freqs + f) * num_basis + k];
  }
  double w(std::size_t n, std::size_t f, std::size_t k) const {
    return basis[(n * num_freqs + f) * num_basis + k];
  }
  double &h(std::size_t n, std::size_t k, std::size_t t) {
    return activation[(n * num_basis + k) * num_frames + t];
  }
  double h(std::size_t n, std::size_t k, std::size_t t) const {
    return activation[(n * num_basis + k) * num_frames + t];
  }

  void ComposeInto(JdParams &params) const;
};

struct NllResult {
  double value = 0.0;
  // Number of (f, t, m) entries whose model power was raised to the floor.
  std::size_t floored = 0;
};

/// Exact negative log-likelihood including the M T F log(pi) constant:
///   sum_{f,t,m} [log y_ftm + |(Q_f x_ft)_m|^2 / y_ftm]
///   - T sum_f log|det Q_f Q_f^H| + M T F log(pi).
double NegLogLikelihood(const Spectrogram &spec, const JdParams &params);
NllResult NegLogLikelihoodDetail(const Spectrogram &spec, const JdParams &params);

/// One iterative-source-steering step on row `row` of every Q_f: the rows of
/// Q_f x are re-steered by a rank-1 update that exactly minimizes the NLL
/// over the update vector. A row whose weighted output power is zero is left
/// untouched.
JdParams IssUpdate(const Spectrogram &spec, JdParams params, std::size_t row);

/// Multiplicative majorization-minimization updates of the PSDs and of the
/// gains. Sources masked out at a frame contribute nothing to either update.
JdParams UpdatePsd(const Spectrogram &spec, JdParams params);
JdParams UpdateGain(const Spectrogram &spec, JdParams params);

/// Moves the scale of each Q_f into the PSDs (trace(Q Q^H) = M afterwards)
/// and the scale of each gain vector into the PSDs (sum_m g_nfm = M).
/// NLL-invariant and idempotent.
JdParams Normalize(JdParams params);

struct JdFitOptions {
  std::size_t iterations = 100;
  std::uint64_t seed = 0;
  double psd_floor = 1e-10;
  bool whitening_init = false;
  // FastMNMF2 shares each source's gain vector across frequencies.
  bool tie_gains = true;
};

struct JdFit {
  JdParams params;
  std::optional<NmfPsd> nmf;
  // NLL at initialization followed by the NLL after every iteration.
  std::vector<double> nll_trace;
};

/// Coordinate descent with oracle activity masks: ISS over all rows, PSD
/// update, gain update, normalization. The last mask row is the noise source
/// and must be active at every frame.
JdFit FitMaskedFca(const Spectrogram &spec, const ActivityMask &masks,
                   const JdFitOptions &options);

/// FastMNMF2: masks fixed to one, PSDs factorized with K bases per source.
JdFit FitFastMnmf2(const Spectrogram &spec, std::size_t num_sources,
                   std::size_t num_basis, const JdFitOptions &options);

/// Multichannel Wiener extraction of every source image. The per-channel
/// gains in the diagonalized space sum to one, so the outputs add up to the
/// input; masked sources receive zero at inactive frames.
std::vector<Spectrogram> WienerSeparate(const Spectrogram &spec,
                                        const JdParams &params);

/// Initial parameters used by FitMaskedFca (exposed for tests and for
/// zero-iteration runs).
JdParams InitMaskedFca(const Spectrogram &spec, const ActivityMask &masks,
                       const JdFitOptions &options);

void PutJdParams(ArrayArchive &archive, const JdParams &params,
                 const std::optional<NmfPsd> &nmf = std::nullopt);
JdParams GetJdParams(const ArrayArchive &archive);

}  // namespace mcsep
