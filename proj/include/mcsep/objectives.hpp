// include/mcsep/objectives.hpp

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
#include <functional>
#include <span>
#include <vector>

#include "mcsep/core.hpp"
#include "mcsep/jdsep.hpp"

namespace mcsep {

// Latent dimensions used by the separation model for speakers and noise.
inline constexpr std::size_t kSpeakerLatentDim = 64;
inline constexpr std::size_t kNoiseLatentDim = 10;
inline constexpr double kDefaultGamma = 1.0;
inline constexpr double kActivityEpsilon = 1e-7;

// Diagonal Gaussian posteriors over per-frame latent source features and
// Bernoulli activity posteriors. Source n has its own latent size.
struct PosteriorParams {
  std::size_t num_sources = 0;
  std::size_t num_frames = 0;
  std::vector<std::size_t> latent_dims;
  std::vector<std::vector<double>> mean;      // [n][t * D_n + d]
  std::vector<std::vector<double>> variance;  // [n][t * D_n + d]
  RealMatrix activity;                        // (n, t), in [0, 1]

  PosteriorParams() = default;
  PosteriorParams(std::size_t N, std::size_t T, std::vector<std::size_t> dims);

  // Speakers get kSpeakerLatentDim, the last (noise) source kNoiseLatentDim.
  static PosteriorParams WithDefaultDims(std::size_t N, std::size_t T);

  std::span<const double> mean_at(std::size_t n, std::size_t t) const {
    return {mean[n].data() + t * latent_dims[n], latent_dims[n]};
  }
  std::span<const double> variance_at(std::size_t n, std::size_t t) const {
    return {variance[n].data() + t * latent_dims[n], latent_dims[n]};
  }

  // Throws kNonPositiveVariance or kInvalidArgument (activity outside [0,1]).
  void Validate() const;
};

// Maps one latent sample z_nt to the PSDs of source n at frame t over all
// frequencies.
using PsdDecoder = std::function<void(std::size_t n, std::size_t t,
                                      std::span<const double> z,
                                      std::span<double> psd_over_freq)>;

// psd_nft = exp(bias_nf + sum_d weight_nfd z_ntd).
struct ExpAffineDecoder {
  std::size_t num_freqs = 0;
  std::vector<std::size_t> latent_dims;
  std::vector<double> bias;                 // (n, f)
  std::vector<std::vector<double>> weight;  // [n][f * D_n + d]

  void operator()(std::size_t n, std::size_t t, std::span<const double> z,
                  std::span<double> psd_over_freq) const;
  PsdDecoder AsDecoder() const;
};

// sum_{n,t,d} (mu^2 + sigma^2 - log sigma^2 - 1) / 2.
double KlToStandardNormal(const PosteriorParams &post);

// Reparameterized estimate of the expected log-likelihood of the masked JD
// model: T sum_f log|Q_f Q_f^H| - sum_{f,t,m} [log y_ftm + |x~_ftm|^2 / y_ftm]
// with y built from decoded samples z = mu + sigma * eps, averaged over
// `num_samples` draws. The PSDs stored in `jd` are ignored; its masks act as
// teacher forcing. Equals -NegLogLikelihood + M T F log(pi) when sigma -> 0.
double ExpectedLogLikelihood(const Spectrogram &spec, const JdParams &jd,
                             const PosteriorParams &post, const PsdDecoder &decoder,
                             std::uint64_t seed, std::size_t num_samples = 1);

// sum_{n,t} -[m log eta + (1 - m) log(1 - eta)]; each log argument is floored
// at kActivityEpsilon.
double BceDiarization(const ActivityMask &mask, const RealMatrix &activity);

// cost(i, j) = BCE between reference row i and estimated row j.
RealMatrix PairwiseBce(const ActivityMask &mask, const RealMatrix &activity);

enum class PitMethod { kAssignment, kBruteForce };

struct PitResult {
  // permutation[i] = estimate assigned to reference i.
  std::vector<std::size_t> permutation;
  double cost = 0.0;
};

// Minimum-cost assignment of every reference row to a distinct estimate
// column (rows <= cols). Brute force is limited to 10 columns.
PitResult SolveAssignment(const RealMatrix &cost, PitMethod method = PitMethod::kAssignment);

// BCE-based alignment of estimated activities to reference activities. When
// `exclude_noise` is set the last row of both stays fixed and only speakers
// permute.
PitResult PitAlign(const ActivityMask &mask, const RealMatrix &activity,
                   bool exclude_noise = true, PitMethod method = PitMethod::kAssignment);

struct ObjectiveReport {
  double l_sep = 0.0;
  double l_diar = 0.0;
  double l_total = 0.0;
  double gamma = kDefaultGamma;
  std::vector<std::size_t> permutation;
};

// l_total = l_sep / (T F) + gamma l_diar / (T N).
ObjectiveReport CombinedObjective(double l_sep, double l_diar, std::size_t num_frames,
                                  std::size_t num_freqs, std::size_t num_sources,
                                  double gamma = kDefaultGamma);

// Full multitask objective: l_sep = ELL - KL, l_diar = -BCE under the PIT
// permutation of the activity rows against jd.masks.
ObjectiveReport EvaluateObjective(const Spectrogram &spec, const JdParams &jd,
                                  const PosteriorParams &post, const PsdDecoder &decoder,
                                  double gamma, std::uint64_t seed,
                                  std::size_t num_samples = 1);

}  // namespace mcsep
