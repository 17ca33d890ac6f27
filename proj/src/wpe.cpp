// src/wpe.cpp

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

#include "mcsep/wpe.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace mcsep {

void WpeConfig::Validate() const {
  if (taps < 1 || delay < 1 || iterations < 1 || !(epsilon > 0.0))
    throw Error(ErrorCode::kInvalidArgument,
                "WPE requires taps >= 1, delay >= 1, iterations >= 1, epsilon > 0");
}

Spectrogram Dereverberate(const Spectrogram &spec, const WpeConfig &cfg) {
  cfg.Validate();
  ValidateSpectrogram(spec);
  const std::size_t F = spec.num_freqs(), T = spec.num_frames(),
                    M = spec.num_channels(), K = cfg.taps, D = cfg.delay;
  if (T <= K + D)
    throw Error(ErrorCode::kTooFewFrames,
                std::to_string(T) + " frames, need more than taps + delay = " +
                    std::to_string(K + D));
  const std::size_t dim = M * K;

  Spectrogram out = spec;
  Eigen::MatrixXcd X(M, T);             // observation for one frequency
  Eigen::MatrixXcd Y(M, T);             // current estimate
  Eigen::MatrixXcd stacked(dim, T);     // delayed taps, zero before t = 0
  std::vector<double> inv_power(T);

  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t m = 0; m < M; ++m) X(m, t) = spec(f, t, m);
    stacked.setZero();
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < K; ++k) {
        if (t < D + k) continue;
        const std::size_t src = t - D - k;
        stacked.block(k * M, t, M, 1) = X.col(static_cast<Eigen::Index>(src));
      }

    Y = X;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      for (std::size_t t = 0; t < T; ++t)
        inv_power[t] = 1.0 / std::max(Y.col(t).squaredNorm() / static_cast<double>(M),
                                      cfg.epsilon);
      Eigen::Map<const Eigen::VectorXd> weights(inv_power.data(),
                                                static_cast<Eigen::Index>(T));
      const Eigen::MatrixXcd weighted = stacked * weights.cast<cdouble>().asDiagonal();
      Eigen::MatrixXcd R = weighted * stacked.adjoint();
      const Eigen::MatrixXcd P = weighted * X.adjoint();
      const double trace = R.trace().real();
      if (!(trace > 0.0)) {
        Y = X;  // silent bin: nothing to predict from
        break;
      }
      R.diagonal().array() += cfg.epsilon * trace / static_cast<double>(dim);
      Eigen::LDLT<Eigen::MatrixXcd> solver(R);
      if (solver.info() != Eigen::Success || !solver.isPositive())
        throw Error(ErrorCode::kSingularCorrelation,
                    "correlation matrix at bin " + std::to_string(f) +
                        " is singular after regularization");
      const Eigen::MatrixXcd G = solver.solve(P);
      if (!G.allFinite())
        throw Error(ErrorCode::kSingularCorrelation,
                    "non-finite prediction filter at bin " + std::to_string(f));
      Y = X - G.adjoint() * stacked;
    }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t m = 0; m < M; ++m) out(f, t, m) = Y(m, t);
  }
  return out;
}

}  // namespace mcsep
