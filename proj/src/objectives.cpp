// src/objectives.cpp

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

#include "mcsep/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mcsep {

PosteriorParams::PosteriorParams(std::size_t N, std::size_t T, std::vector<std::size_t> dims)
    : num_sources(N), num_frames(T), latent_dims(std::move(dims)), activity(N, T, 0.5) {
  if (latent_dims.size() != N)
    throw Error(ErrorCode::kDimensionMismatch, "one latent size per source is required");
  mean.resize(N);
  variance.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    mean[n].assign(T * latent_dims[n], 0.0);
    variance[n].assign(T * latent_dims[n], 1.0);
  }
}

PosteriorParams PosteriorParams::WithDefaultDims(std::size_t N, std::size_t T) {
  std::vector<std::size_t> dims(N, kSpeakerLatentDim);
  if (N > 0) dims.back() = kNoiseLatentDim;
  return PosteriorParams(N, T, std::move(dims));
}

void PosteriorParams::Validate() const {
  if (latent_dims.size() != num_sources || mean.size() != num_sources ||
      variance.size() != num_sources || activity.rows != num_sources ||
      activity.cols != num_frames)
    throw Error(ErrorCode::kDimensionMismatch, "posterior arrays disagree with dimensions");
  for (std::size_t n = 0; n < num_sources; ++n) {
    if (mean[n].size() != num_frames * latent_dims[n] ||
        variance[n].size() != num_frames * latent_dims[n])
      throw Error(ErrorCode::kDimensionMismatch,
                  "posterior of source " + std::to_string(n) + " has the wrong size");
    for (double v : variance[n])
      if (!(v > 0.0) || !std::isfinite(v))
        throw Error(ErrorCode::kNonPositiveVariance,
                    "posterior variance of source " + std::to_string(n) + " is not positive");
    for (double m : mean[n])
      if (!std::isfinite(m))
        throw Error(ErrorCode::kNonFiniteValue, "posterior mean is not finite");
  }
  for (double a : activity.data)
    if (!(a >= 0.0 && a <= 1.0))
      throw Error(ErrorCode::kInvalidArgument, "activity probabilities must lie in [0, 1]");
}

void ExpAffineDecoder::operator()(std::size_t n, std::size_t /*t*/, std::span<const double> z,
                                  std::span<double> psd_over_freq) const {
  const std::size_t D = latent_dims[n];
  for (std::size_t f = 0; f < num_freqs; ++f) {
    double a = bias[n * num_freqs + f];
    const double *w = weight[n].data() + f * D;
    for (std::size_t d = 0; d < D; ++d) a += w[d] * z[d];
    psd_over_freq[f] = std::exp(a);
  }
}

PsdDecoder ExpAffineDecoder::AsDecoder() const {
  return [self = *this](std::size_t n, std::size_t t, std::span<const double> z,
                        std::span<double> out) { self(n, t, z, out); };
}

double KlToStandardNormal(const PosteriorParams &post) {
  post.Validate();
  double kl = 0.0;
  for (std::size_t n = 0; n < post.num_sources; ++n)
    for (std::size_t i = 0; i < post.mean[n].size(); ++i) {
      const double mu = post.mean[n][i], var = post.variance[n][i];
      kl += 0.5 * (mu * mu + var - std::log(var) - 1.0);
    }
  return kl;
}

double ExpectedLogLikelihood(const Spectrogram &spec, const JdParams &jd,
                             const PosteriorParams &post, const PsdDecoder &decoder,
                             std::uint64_t seed, std::size_t num_samples) {
  jd.ValidateAgainst(spec);
  post.Validate();
  if (post.num_sources != jd.num_sources || post.num_frames != jd.num_frames)
    throw Error(ErrorCode::kDimensionMismatch, "posterior does not match the JD parameters");
  if (num_samples == 0) throw Error(ErrorCode::kInvalidArgument, "num_samples must be >= 1");
  const std::size_t N = jd.num_sources, F = jd.num_freqs, T = jd.num_frames,
                    M = jd.num_channels;

  // Sample-independent parts: diagonalized power and the log-det term.
  std::vector<double> power(F * T * M);
  double log_det = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    const Eigen::MatrixXcd &Q = jd.diagonalizers[f];
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Q);
    const cdouble det = lu.determinant();
    const double abs_det = std::abs(det);
    if (!(abs_det > 0.0))
      throw Error(ErrorCode::kNonInvertibleDiagonalizer,
                  "Q at frequency " + std::to_string(f) + " is singular");
    log_det += 2.0 * std::log(abs_det);
    for (std::size_t t = 0; t < T; ++t) {
      Eigen::VectorXcd x(M);
      for (std::size_t m = 0; m < M; ++m) x(m) = spec(f, t, m);
      const Eigen::VectorXcd y = Q * x;
      for (std::size_t m = 0; m < M; ++m) power[(f * T + t) * M + m] = std::norm(y(m));
    }
  }

  Rng rng(seed);
  std::vector<double> model(F * T * M);
  std::vector<double> z, lambda(F);
  double accumulated = 0.0;
  for (std::size_t s = 0; s < num_samples; ++s) {
    std::fill(model.begin(), model.end(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t D = post.latent_dims[n];
      z.resize(D);
      for (std::size_t t = 0; t < T; ++t) {
        const auto mu = post.mean_at(n, t);
        const auto var = post.variance_at(n, t);
        for (std::size_t d = 0; d < D; ++d) z[d] = mu[d] + std::sqrt(var[d]) * rng.Normal();
        if (!jd.masks.active(n, t)) continue;
        decoder(n, t, z, lambda);
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t m = 0; m < M; ++m)
            model[(f * T + t) * M + m] += lambda[f] * jd.gain(n, f, m);
      }
    }
    double value = static_cast<double>(T) * log_det;
    for (std::size_t i = 0; i < model.size(); ++i) {
      const double y = std::max(model[i], jd.psd_floor);
      value -= std::log(y) + power[i] / y;
    }
    accumulated += value;
  }
  return accumulated / static_cast<double>(num_samples);
}

namespace {

double BceTerm(bool target, double eta) {
  const double p = target ? eta : 1.0 - eta;
  return -std::log(std::max(p, kActivityEpsilon));
}

}  // namespace

double BceDiarization(const ActivityMask &mask, const RealMatrix &activity) {
  if (mask.num_sources() != activity.rows || mask.num_frames() != activity.cols)
    throw Error(ErrorCode::kDimensionMismatch, "mask and activity shapes differ");
  double total = 0.0;
  for (std::size_t n = 0; n < activity.rows; ++n)
    for (std::size_t t = 0; t < activity.cols; ++t)
      total += BceTerm(mask.active(n, t), activity(n, t));
  return total;
}

RealMatrix PairwiseBce(const ActivityMask &mask, const RealMatrix &activity) {
  if (mask.num_frames() != activity.cols)
    throw Error(ErrorCode::kDimensionMismatch, "mask and activity lengths differ");
  RealMatrix cost(mask.num_sources(), activity.rows);
  for (std::size_t i = 0; i < mask.num_sources(); ++i)
    for (std::size_t j = 0; j < activity.rows; ++j) {
      double c = 0.0;
      for (std::size_t t = 0; t < mask.num_frames(); ++t)
        c += BceTerm(mask.active(i, t), activity(j, t));
      cost(i, j) = c;
    }
  return cost;
}

namespace {

// Shortest augmenting path (Hungarian) for rows <= cols; 1-indexed internally.
PitResult Hungarian(const RealMatrix &cost) {
  const std::size_t n = cost.rows, m = cost.cols;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  PitResult r;
  r.permutation.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) r.permutation[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) r.cost += cost(i, r.permutation[i]);
  return r;
}

PitResult BruteForce(const RealMatrix &cost) {
  const std::size_t n = cost.rows, m = cost.cols;
  if (m > 10)
    throw Error(ErrorCode::kInvalidArgument, "brute-force alignment is limited to 10 sources");
  std::vector<std::size_t> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  PitResult best;
  best.cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost(i, cols[i]);
    if (c < best.cost) {
      best.cost = c;
      best.permutation.assign(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(n));
    }
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace

PitResult SolveAssignment(const RealMatrix &cost, PitMethod method) {
  if (cost.rows > cost.cols)
    throw Error(ErrorCode::kDimensionMismatch,
                "more references than estimates (" + std::to_string(cost.rows) + " > " +
                    std::to_string(cost.cols) + ")");
  if (cost.rows == 0) return {};
  return method == PitMethod::kBruteForce ? BruteForce(cost) : Hungarian(cost);
}

PitResult PitAlign(const ActivityMask &mask, const RealMatrix &activity, bool exclude_noise,
                   PitMethod method) {
  const RealMatrix cost = PairwiseBce(mask, activity);
  if (!exclude_noise || mask.num_sources() == 0) return SolveAssignment(cost, method);
  if (activity.rows == 0)
    throw Error(ErrorCode::kDimensionMismatch, "no estimated activities");
  const std::size_t speakers = mask.num_sources() - 1, candidates = activity.rows - 1;
  RealMatrix speaker_cost(speakers, candidates);
  for (std::size_t i = 0; i < speakers; ++i)
    for (std::size_t j = 0; j < candidates; ++j) speaker_cost(i, j) = cost(i, j);
  PitResult r = SolveAssignment(speaker_cost, method);
  r.permutation.push_back(candidates);
  r.cost += cost(speakers, candidates);
  return r;
}

ObjectiveReport CombinedObjective(double l_sep, double l_diar, std::size_t num_frames,
                                  std::size_t num_freqs, std::size_t num_sources, double gamma) {
  if (num_frames == 0 || num_freqs == 0 || num_sources == 0)
    throw Error(ErrorCode::kInvalidArgument, "T, F and N must be positive");
  ObjectiveReport r;
  r.l_sep = l_sep;
  r.l_diar = l_diar;
  r.gamma = gamma;
  const double T = static_cast<double>(num_frames);
  r.l_total = l_sep / (T * static_cast<double>(num_freqs)) +
              gamma * l_diar / (T * static_cast<double>(num_sources));
  return r;
}

ObjectiveReport EvaluateObjective(const Spectrogram &spec, const JdParams &jd,
                                  const PosteriorParams &post, const PsdDecoder &decoder,
                                  double gamma, std::uint64_t seed, std::size_t num_samples) {
  const double ell = ExpectedLogLikelihood(spec, jd, post, decoder, seed, num_samples);
  const double l_sep = ell - KlToStandardNormal(post);
  const PitResult pit = PitAlign(jd.masks, post.activity, /*exclude_noise=*/true);
  ObjectiveReport r = CombinedObjective(l_sep, -pit.cost, jd.num_frames, jd.num_freqs,
                                        jd.num_sources, gamma);
  r.permutation = pit.permutation;
  return r;
}

}  // namespace mcsep
