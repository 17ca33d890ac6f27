// src/cacgmm.cpp

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

#include "mcsep/cacgmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mcsep {

namespace {

constexpr double kDegenerateNorm = 1e-300;

struct ShapeCache {
  Eigen::MatrixXcd inverse;
  double log_det = 0.0;
};

ShapeCache Factor(const Eigen::MatrixXcd &shape) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(shape);
  const auto &values = eig.eigenvalues();
  ShapeCache c;
  c.log_det = values.array().log().sum();
  c.inverse = eig.eigenvectors() * values.cwiseInverse().asDiagonal() *
              eig.eigenvectors().adjoint();
  return c;
}

double LogNormalizer(std::size_t M) {
  const double m = static_cast<double>(M);
  return std::lgamma(m) - std::log(2.0) - m * std::log(std::numbers::pi);
}

// Unit-norm observation directions for one frequency; invalid[t] marks
// zero-norm bins.
void Directions(const Spectrogram &spec, std::size_t f, Eigen::MatrixXcd &Z,
                std::vector<bool> &invalid) {
  const std::size_t T = spec.num_frames(), M = spec.num_channels();
  Z.resize(M, T);
  invalid.assign(T, false);
  for (std::size_t t = 0; t < T; ++t) {
    const auto x = spec.bin(f, t);
    const double norm = std::sqrt(SquaredNorm(x));
    if (!(norm > kDegenerateNorm)) {
      invalid[t] = true;
      Z.col(t).setZero();
      continue;
    }
    for (std::size_t m = 0; m < M; ++m) Z(m, t) = x[m] / norm;
  }
}

void CheckGuide(const ActivityMask &guide, std::size_t N, std::size_t T) {
  if (guide.num_sources() != N || guide.num_frames() != T)
    throw Error(ErrorCode::kDimensionMismatch,
                "guide is " + std::to_string(guide.num_sources()) + "x" +
                    std::to_string(guide.num_frames()) + ", expected " +
                    std::to_string(N) + "x" + std::to_string(T));
  for (std::size_t t = 0; t < T; ++t) {
    bool any = false;
    for (std::size_t n = 0; n < N && !any; ++n) any = guide.active(n, t);
    if (!any)
      throw Error(ErrorCode::kAllSourcesMaskedAtFrame,
                  "guide has no active source at frame " + std::to_string(t));
  }
}

bool Gate(const std::optional<ActivityMask> &guide, std::size_t n, std::size_t t) {
  return !guide || guide->active(n, t);
}

// E-step for one frequency. Writes responsibilities and returns the summed
// log-likelihood of the valid bins.
double EStep(const Eigen::MatrixXcd &Z, const std::vector<bool> &invalid,
             std::size_t f, CacgmmParams &p, bool write) {
  const std::size_t N = p.num_sources, T = p.num_frames, M = p.num_channels;
  const double normalizer = LogNormalizer(M);
  std::vector<ShapeCache> cache(N);
  for (std::size_t n = 0; n < N; ++n) cache[n] = Factor(p.shape(n, f));

  double total = 0.0;
  std::vector<double> log_terms(N);
  for (std::size_t t = 0; t < T; ++t) {
    double weight_sum = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      if (Gate(p.guide, n, t)) weight_sum += p.weight(n, f);
    if (invalid[t]) {
      if (!write) continue;
      std::size_t active = 0;
      for (std::size_t n = 0; n < N; ++n) active += Gate(p.guide, n, t);
      for (std::size_t n = 0; n < N; ++n)
        p.responsibility(n, f, t) = Gate(p.guide, n, t) ? 1.0 / static_cast<double>(active) : 0.0;
      continue;
    }
    const auto z = Z.col(static_cast<Eigen::Index>(t));
    double max_term = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < N; ++n) {
      const double w = Gate(p.guide, n, t) ? p.weight(n, f) / weight_sum : 0.0;
      if (!(w > 0.0)) {
        log_terms[n] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double quad = std::max((z.adjoint() * cache[n].inverse * z)(0, 0).real(),
                                   std::numeric_limits<double>::min());
      log_terms[n] = std::log(w) + normalizer - cache[n].log_det -
                     static_cast<double>(M) * std::log(quad);
      max_term = std::max(max_term, log_terms[n]);
    }
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      if (std::isfinite(log_terms[n])) sum += std::exp(log_terms[n] - max_term);
    const double lse = max_term + std::log(sum);
    if (!std::isfinite(lse))
      throw Error(ErrorCode::kNumericalUnderflow,
                  "log-likelihood is not finite at bin (" + std::to_string(f) + ", " +
                      std::to_string(t) + ")");
    total += lse;
    if (write)
      for (std::size_t n = 0; n < N; ++n)
        p.responsibility(n, f, t) =
            std::isfinite(log_terms[n]) ? std::exp(log_terms[n] - lse) : 0.0;
  }
  return total;
}

void MStep(const Eigen::MatrixXcd &Z, const std::vector<bool> &invalid,
           std::size_t f, CacgmmParams &p, double eigenvalue_floor) {
  const std::size_t N = p.num_sources, T = p.num_frames, M = p.num_channels;
  const double dM = static_cast<double>(M);

  // Mixture weights: minorize-maximize step for the gated weights
  // w_nft = a_nf g_nt / sum_k a_kf g_kt. Without a guide it reduces to the
  // usual time average of the responsibilities.
  std::vector<double> old_weights(N);
  for (std::size_t n = 0; n < N; ++n) old_weights[n] = p.weight(n, f);
  std::vector<double> counts(N, 0.0), exposure(N, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    if (invalid[t]) continue;
    double active_sum = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      if (Gate(p.guide, n, t)) active_sum += old_weights[n];
    for (std::size_t n = 0; n < N; ++n) {
      counts[n] += p.responsibility(n, f, t);
      if (Gate(p.guide, n, t)) exposure[n] += 1.0 / active_sum;
    }
  }
  double weight_total = 0.0;
  std::vector<double> new_weights(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    new_weights[n] = exposure[n] > 0.0 ? counts[n] / exposure[n] : 0.0;
    weight_total += new_weights[n];
  }
  if (weight_total > 0.0)
    for (std::size_t n = 0; n < N; ++n) p.weight(n, f) = new_weights[n] / weight_total;

  // Shape matrices: weighted fixed-point step, trace normalized to M.
  for (std::size_t n = 0; n < N; ++n) {
    const ShapeCache cache = Factor(p.shape(n, f));
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(M, M);
    double mass = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double g = p.responsibility(n, f, t);
      if (invalid[t] || g == 0.0) continue;
      const auto z = Z.col(static_cast<Eigen::Index>(t));
      const double quad = std::max((z.adjoint() * cache.inverse * z)(0, 0).real(),
                                   std::numeric_limits<double>::min());
      acc.noalias() += (g / quad) * z * z.adjoint();
      mass += g;
    }
    if (!(mass > 0.0)) continue;
    Eigen::MatrixXcd shape = (dM / mass) * acc;
    shape = 0.5 * (shape + shape.adjoint().eval());
    shape *= dM / shape.trace().real();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(shape);
    Eigen::VectorXd values = eig.eigenvalues().cwiseMax(eigenvalue_floor);
    shape = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().adjoint();
    p.shape(n, f) = 0.5 * (shape + shape.adjoint().eval());
  }
}

}  // namespace

RealMatrix CacgmmParams::FrameMasks() const {
  RealMatrix out(num_sources, num_frames, 0.0);
  for (std::size_t n = 0; n < num_sources; ++n)
    for (std::size_t f = 0; f < num_freqs; ++f)
      for (std::size_t t = 0; t < num_frames; ++t)
        out(n, t) += responsibility(n, f, t) / static_cast<double>(num_freqs);
  return out;
}

double AcgLogDensity(const Eigen::VectorXcd &z, const Eigen::MatrixXcd &shape) {
  const std::size_t M = static_cast<std::size_t>(z.size());
  const ShapeCache c = Factor(shape);
  const double quad = (z.adjoint() * c.inverse * z)(0, 0).real();
  return LogNormalizer(M) - c.log_det - static_cast<double>(M) * std::log(quad);
}

CacgmmFit FitCacgmm(const Spectrogram &spec, std::size_t num_sources,
                    const std::optional<ActivityMask> &guide,
                    const CacgmmOptions &options) {
  ValidateSpectrogram(spec);
  const std::size_t F = spec.num_freqs(), T = spec.num_frames(),
                    M = spec.num_channels(), N = num_sources;
  if (M < 2)
    throw Error(ErrorCode::kInvalidArgument, "cACGMM needs at least two channels");
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one source");
  if (guide) CheckGuide(*guide, N, T);

  CacgmmFit fit;
  CacgmmParams &p = fit.params;
  p.num_sources = N;
  p.num_freqs = F;
  p.num_frames = T;
  p.num_channels = M;
  p.guide = guide;
  p.shape_matrices.assign(N * F, Eigen::MatrixXcd::Identity(M, M));
  p.weights.assign(N * F, 1.0 / static_cast<double>(N));
  p.responsibilities.assign(N * F * T, 0.0);

  if (options.initial_responsibilities &&
      options.initial_responsibilities->size() != N * F * T)
    throw Error(ErrorCode::kDimensionMismatch, "initial responsibilities have the wrong size");
  Rng rng(options.seed);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t) {
      double sum = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        double v;
        if (options.initial_responsibilities)
          v = (*options.initial_responsibilities)[(n * F + f) * T + t] *
              (Gate(guide, n, t) ? 1.0 : 0.0);
        else if (guide)
          v = guide->value(n, t);
        else
          v = rng.Exponential();  // normalized exponentials are Dirichlet(1)
        p.responsibility(n, f, t) = v;
        sum += v;
      }
      for (std::size_t n = 0; n < N; ++n) p.responsibility(n, f, t) /= sum;
    }

  Eigen::MatrixXcd Z;
  std::vector<bool> invalid;
  for (std::size_t f = 0; f < F; ++f) {
    Directions(spec, f, Z, invalid);
    for (std::size_t t = 0; t < T; ++t) {
      if (!invalid[t]) continue;
      ++fit.degenerate_bins;
      std::size_t active = 0;
      for (std::size_t n = 0; n < N; ++n) active += Gate(guide, n, t);
      for (std::size_t n = 0; n < N; ++n)
        p.responsibility(n, f, t) = Gate(guide, n, t) ? 1.0 / static_cast<double>(active) : 0.0;
    }
  }

  const double valid_bins = static_cast<double>(F * T - fit.degenerate_bins);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    double total = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      Directions(spec, f, Z, invalid);
      MStep(Z, invalid, f, p, options.eigenvalue_floor);
      total += EStep(Z, invalid, f, p, /*write=*/true);
    }
    fit.log_likelihood_trace.push_back(valid_bins > 0 ? total / valid_bins : 0.0);
  }
  return fit;
}

double CacgmmLogLikelihood(const Spectrogram &spec, const CacgmmParams &params) {
  ValidateSpectrogram(spec);
  if (spec.num_channels() < 2)
    throw Error(ErrorCode::kInvalidArgument, "cACG density is undefined for M = 1");
  if (spec.num_freqs() != params.num_freqs || spec.num_frames() != params.num_frames ||
      spec.num_channels() != params.num_channels)
    throw Error(ErrorCode::kDimensionMismatch, "params do not match the spectrogram");
  CacgmmParams scratch = params;
  Eigen::MatrixXcd Z;
  std::vector<bool> invalid;
  double total = 0.0;
  for (std::size_t f = 0; f < params.num_freqs; ++f) {
    Directions(spec, f, Z, invalid);
    total += EStep(Z, invalid, f, scratch, /*write=*/false);
  }
  return total;
}

std::vector<Spectrogram> ApplyResponsibilities(const Spectrogram &spec,
                                               const CacgmmParams &params) {
  std::vector<Spectrogram> out(params.num_sources,
                               Spectrogram(spec.num_freqs(), spec.num_frames(),
                                           spec.num_channels(), spec.sample_rate(),
                                           spec.hop()));
  for (std::size_t n = 0; n < params.num_sources; ++n)
    for (std::size_t f = 0; f < spec.num_freqs(); ++f)
      for (std::size_t t = 0; t < spec.num_frames(); ++t) {
        const double g = params.responsibility(n, f, t);
        for (std::size_t m = 0; m < spec.num_channels(); ++m)
          out[n](f, t, m) = g * spec(f, t, m);
      }
  return out;
}

}  // namespace mcsep
