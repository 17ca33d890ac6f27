// tests/test_jdsep.cpp

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

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mcsep/jdsep.hpp"
#include "mcsep/simulate.hpp"
#include "test_util.hpp"

using namespace mcsep;
using namespace mcsep::testing;

namespace {

MixtureScene SmallScene(std::size_t speakers, std::size_t mics, std::uint64_t seed,
                        double duration = 1.5) {
  SceneConfig cfg;
  cfg.geometry = ArrayGeometry::Circular(mics, 0.1);
  cfg.num_speakers = speakers;
  cfg.duration_s = duration;
  cfg.snr_db = 20.0;
  cfg.seed = seed;
  return SynthesizeScene(cfg);
}

}  // namespace

TEST_CASE("negative log-likelihood equals the dense Gaussian density") {
  Rng rng(101);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t M = 2 + trial % 2, N = 1 + trial % 3;
    const JdParams p = RandomJdParams(N, 5, 8, M, rng);
    const Spectrogram x = RandomSpectrogram(5, 8, M, rng);
    const double dense = DenseNegLogLikelihood(x, p);
    CHECK(RelativeError(NegLogLikelihood(x, p), dense) < 1e-8);
  }
}

TEST_CASE("floored bins are counted") {
  Rng rng(3);
  JdParams p = RandomJdParams(2, 3, 4, 2, rng);
  for (std::size_t n = 0; n < 2; ++n) p.masks.set(n, 1, false);
  const Spectrogram x = RandomSpectrogram(3, 4, 2, rng);
  const NllResult r = NegLogLikelihoodDetail(x, p);
  CHECK(r.floored == 3 * 2);  // one frame, every frequency and channel
  CHECK(std::isfinite(r.value));
}

TEST_CASE("each coordinate step does not increase the NLL") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t M = 2 + trial % 3, N = 1 + trial % 4;
    JdParams p = RandomJdParams(N, 4, 30, M, rng);
    const Spectrogram x = RandomSpectrogram(4, 30, M, rng);
    double prev = NegLogLikelihood(x, p);
    for (std::size_t k = 0; k < M; ++k) {
      p = IssUpdate(x, p, k);
      const double now = NegLogLikelihood(x, p);
      CHECK(now <= prev + 1e-9 * std::abs(prev));
      prev = now;
    }
    p = UpdatePsd(x, p);
    double now = NegLogLikelihood(x, p);
    CHECK(now <= prev + 1e-9 * std::abs(prev));
    prev = now;
    p = UpdateGain(x, p);
    now = NegLogLikelihood(x, p);
    CHECK(now <= prev + 1e-9 * std::abs(prev));
  }
}

TEST_CASE("iterative source steering is optimal along its own update family") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t M = 3;
    const JdParams p0 = RandomJdParams(2, 3, 40, M, rng);
    const Spectrogram x = RandomSpectrogram(3, 40, M, rng);
    const std::size_t k = trial % M;
    const JdParams best = IssUpdate(x, p0, k);
    const double nll = NegLogLikelihood(x, best);
    // Any further rank-1 change of the form Q - d q_k^T stays in the family.
    for (int probe = 0; probe < 5; ++probe) {
      JdParams moved = best;
      for (std::size_t f = 0; f < 3; ++f) {
        Eigen::VectorXcd d(M);
        for (std::size_t m = 0; m < M; ++m) d(m) = 0.05 * rng.ComplexNormal();
        const Eigen::RowVectorXcd q_k = moved.diagonalizers[f].row(k);
        moved.diagonalizers[f] -= d * q_k;
      }
      CHECK(NegLogLikelihood(x, moved) >= nll - 1e-9 * std::abs(nll));
    }
  }
}

TEST_CASE("masked frames keep their PSD and receive no Wiener output") {
  Rng rng(5);
  JdParams p = RandomJdParams(3, 4, 20, 2, rng);
  const Spectrogram x = RandomSpectrogram(4, 20, 2, rng);
  const JdParams q = UpdatePsd(x, p);
  const auto images = WienerSeparate(x, q);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t t = 0; t < 20; ++t) {
      if (p.masks.active(n, t)) continue;
      for (std::size_t f = 0; f < 4; ++f) {
        CHECK(q.psd_at(n, f, t) == p.psd_at(n, f, t));
        for (std::size_t m = 0; m < 2; ++m) CHECK(images[n](f, t, m) == cdouble(0.0));
      }
    }
  CHECK(ConsistencyError(images, x) < 1e-12);
}

TEST_CASE("normalization is NLL invariant and idempotent") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t M = 2 + trial % 3;
    JdParams p = RandomJdParams(2, 3, 10, M, rng);
    for (auto &Q : p.diagonalizers) Q *= rng.Uniform(0.2, 5.0);
    const Spectrogram x = RandomSpectrogram(3, 10, M, rng);
    const JdParams n1 = Normalize(p);
    CHECK(RelativeError(NegLogLikelihood(x, n1), NegLogLikelihood(x, p)) < 1e-10);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(n1.diagonalizers[f].squaredNorm() == doctest::Approx(static_cast<double>(M)));
      for (std::size_t n = 0; n < 2; ++n) {
        double sum = 0.0;
        for (std::size_t m = 0; m < M; ++m) sum += n1.gain(n, f, m);
        CHECK(sum == doctest::Approx(static_cast<double>(M)));
      }
    }
    const JdParams n2 = Normalize(n1);
    for (std::size_t i = 0; i < n1.psd.size(); ++i)
      CHECK(n2.psd[i] == doctest::Approx(n1.psd[i]).epsilon(1e-12));
  }
}

TEST_CASE("masked FCA fit is monotone and separates a small scene") {
  const MixtureScene scene = SmallScene(2, 3, 21);
  JdFitOptions opts;
  opts.iterations = 40;
  const JdFit fit = FitMaskedFca(scene.mixture, scene.masks.WithNoiseRow(), opts);
  REQUIRE(fit.nll_trace.size() == 41);
  std::size_t bad = 0;
  CHECK_MESSAGE(NonIncreasing(fit.nll_trace, 1e-9, &bad), "rise at iteration " << bad);
  CHECK(RelativeError(fit.nll_trace.back(), NegLogLikelihood(scene.mixture, fit.params)) <
        1e-10);
  const auto images = WienerSeparate(scene.mixture, fit.params);
  CHECK(ConsistencyError(images, scene.mixture) < 1e-10);
  const OracleReport report = OracleEvaluate(scene, images, Alignment::kSiSdr);
  MESSAGE("SI-SDR improvement " << report.mean_improvement << " dB");
  CHECK(report.mean_improvement > 6.0);
}

TEST_CASE("FastMNMF2 fit is monotone; zero iterations is the initialization") {
  const MixtureScene scene = SmallScene(2, 3, 22);
  JdFitOptions opts;
  opts.iterations = 40;
  opts.seed = 4;
  const JdFit fit = FitFastMnmf2(scene.mixture, 3, 4, opts);
  std::size_t bad = 0;
  CHECK_MESSAGE(NonIncreasing(fit.nll_trace, 1e-9, &bad), "rise at iteration " << bad);
  REQUIRE(fit.nmf.has_value());
  // PSDs are the NMF product.
  JdParams composed = fit.params;
  fit.nmf->ComposeInto(composed);
  for (std::size_t i = 0; i < composed.psd.size(); i += 97)
    CHECK(composed.psd[i] == doctest::Approx(fit.params.psd[i]).epsilon(1e-12));
  // Gains are shared across frequency.
  for (std::size_t f = 1; f < fit.params.num_freqs; f += 50)
    CHECK(fit.params.gain(1, f, 2) == doctest::Approx(fit.params.gain(1, 0, 2)));
  CHECK(ConsistencyError(WienerSeparate(scene.mixture, fit.params), scene.mixture) < 1e-10);

  opts.iterations = 0;
  const JdFit init = FitFastMnmf2(scene.mixture, 3, 4, opts);
  CHECK(init.nll_trace.size() == 1);
  CHECK(init.nll_trace[0] == fit.nll_trace[0]);
  opts.iterations = 40;
  const JdFit again = FitFastMnmf2(scene.mixture, 3, 4, opts);
  CHECK(again.nll_trace == fit.nll_trace);
}

TEST_CASE("parameter persistence round trip") {
  Rng rng(11);
  const JdParams p = RandomJdParams(3, 4, 6, 2, rng);
  ArrayArchive archive;
  PutJdParams(archive, p);
  const JdParams q = GetJdParams(archive);
  CHECK(q.psd == p.psd);
  CHECK(q.gains == p.gains);
  CHECK(q.masks == p.masks);
  for (std::size_t f = 0; f < 4; ++f) CHECK(q.diagonalizers[f] == p.diagonalizers[f]);
}

TEST_CASE("errors") {
  Rng rng(13);
  JdParams p = RandomJdParams(2, 3, 5, 2, rng);
  const Spectrogram wrong = RandomSpectrogram(3, 6, 2, rng);
  try {
    NegLogLikelihood(wrong, p);
    FAIL("expected DimensionMismatch");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kDimensionMismatch);
  }
  p.diagonalizers[1].setZero();
  const Spectrogram x = RandomSpectrogram(3, 5, 2, rng);
  try {
    NegLogLikelihood(x, p);
    FAIL("expected NonInvertibleDiagonalizer");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kNonInvertibleDiagonalizer);
  }
  ActivityMask masks(2, 5, true);
  masks.set(1, 3, false);  // the noise row must always be active
  CHECK_THROWS_AS(FitMaskedFca(x, masks, JdFitOptions{}), Error);
  CHECK_THROWS_AS(FitMaskedFca(x, ActivityMask(2, 4, true), JdFitOptions{}), Error);
  CHECK_THROWS_AS(IssUpdate(x, RandomJdParams(2, 3, 5, 2, rng), 2), Error);
}
