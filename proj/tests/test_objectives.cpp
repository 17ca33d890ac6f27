// tests/test_objectives.cpp

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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "mcsep/objectives.hpp"
#include "test_util.hpp"

using namespace mcsep;
using namespace mcsep::testing;

namespace {

PosteriorParams RandomPosterior(std::size_t N, std::size_t T, std::vector<std::size_t> dims,
                                Rng &rng, double max_var = 2.0) {
  PosteriorParams post(N, T, dims);
  for (std::size_t n = 0; n < N; ++n) {
    for (auto &m : post.mean[n]) m = rng.Uniform(-1.5, 1.5);
    for (auto &v : post.variance[n]) v = rng.Uniform(0.05, max_var);
  }
  for (auto &a : post.activity.data) a = rng.Uniform();
  return post;
}

ExpAffineDecoder RandomDecoder(std::size_t F, const std::vector<std::size_t> &dims, Rng &rng,
                               double weight_scale) {
  ExpAffineDecoder dec;
  dec.num_freqs = F;
  dec.latent_dims = dims;
  dec.bias.resize(dims.size() * F);
  for (auto &b : dec.bias) b = rng.Uniform(-1.0, 1.0);
  for (std::size_t n = 0; n < dims.size(); ++n) {
    dec.weight.emplace_back(F * dims[n]);
    for (auto &w : dec.weight.back()) w = weight_scale * rng.Uniform(-1.0, 1.0);
  }
  return dec;
}

// Monte-Carlo KL(q || N(0, I)) = E_q[log q(z) - log p(z)].
double MonteCarloKl(const PosteriorParams &post, std::size_t samples, Rng &rng) {
  double total = 0.0;
  for (std::size_t n = 0; n < post.num_sources; ++n)
    for (std::size_t t = 0; t < post.num_frames; ++t) {
      const auto mu = post.mean_at(n, t);
      const auto var = post.variance_at(n, t);
      for (std::size_t d = 0; d < mu.size(); ++d) {
        double acc = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
          const double eps = rng.Normal();
          const double z = mu[d] + std::sqrt(var[d]) * eps;
          // log q - log p; the 2 pi terms cancel.
          acc += -0.5 * std::log(var[d]) - 0.5 * eps * eps + 0.5 * z * z;
        }
        total += acc / static_cast<double>(samples);
      }
    }
  return total;
}

}  // namespace

TEST_CASE("KL closed form agrees with Monte Carlo") {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const PosteriorParams post = RandomPosterior(2, 3, {4, 2}, rng);
    const double closed = KlToStandardNormal(post);
    const double mc = MonteCarloKl(post, 100000, rng);
    CHECK(RelativeError(mc, closed) < 0.01);
  }
  PosteriorParams prior(1, 2, {3});
  for (auto &v : prior.variance[0]) v = 1.0;
  CHECK(KlToStandardNormal(prior) == 0.0);
}

TEST_CASE("default latent sizes") {
  const PosteriorParams post = PosteriorParams::WithDefaultDims(4, 5);
  CHECK(post.latent_dims == std::vector<std::size_t>{64, 64, 64, 10});
  CHECK(post.mean[0].size() == 5 * 64);
  CHECK(post.mean[3].size() == 5 * 10);
}

TEST_CASE("BCE values") {
  ActivityMask one(1, 1, true);
  RealMatrix half(1, 1, 0.5);
  CHECK(std::abs(BceDiarization(one, half) - std::log(2.0)) <= 1e-12);
  RealMatrix zero(1, 1, 0.0);
  CHECK(BceDiarization(one, zero) == doctest::Approx(-std::log(kActivityEpsilon)));
  ActivityMask off(1, 1, false);
  RealMatrix sure(1, 1, 1.0);
  CHECK(BceDiarization(off, sure) == doctest::Approx(-std::log(kActivityEpsilon)));
  CHECK(BceDiarization(off, zero) == 0.0);
  CHECK(BceDiarization(one, sure) == 0.0);
  // Hand-computed 2 x 2 case.
  ActivityMask m(2, 2);
  m.set(0, 0, true);
  m.set(1, 1, true);
  RealMatrix a(2, 2);
  a(0, 0) = 0.9;
  a(0, 1) = 0.2;
  a(1, 0) = 0.3;
  a(1, 1) = 0.6;
  const double expected = -(std::log(0.9) + std::log(0.8) + std::log(0.7) + std::log(0.6));
  CHECK(BceDiarization(m, a) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("assignment equals exhaustive search") {
  Rng rng(3);
  for (std::size_t rows : {2u, 4u, 6u})
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t cols = rows + trial % 3;
      RealMatrix cost(rows, cols);
      for (auto &c : cost.data) c = trial % 2 ? rng.Uniform() : std::floor(rng.Uniform(0, 4));
      const PitResult fast = SolveAssignment(cost, PitMethod::kAssignment);
      const PitResult slow = SolveAssignment(cost, PitMethod::kBruteForce);
      CHECK(fast.cost == doctest::Approx(slow.cost).epsilon(1e-12));
      double recomputed = 0.0;
      std::vector<std::size_t> used = fast.permutation;
      for (std::size_t i = 0; i < rows; ++i) recomputed += cost(i, fast.permutation[i]);
      CHECK(recomputed == doctest::Approx(fast.cost).epsilon(1e-12));
      std::sort(used.begin(), used.end());
      CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
    }
  CHECK_THROWS_AS(SolveAssignment(RealMatrix(3, 2)), Error);
}

TEST_CASE("PIT keeps the noise row fixed and recovers a shuffle") {
  Rng rng(4);
  ActivityMask mask(4, 50);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t t = 0; t < 50; ++t) mask.set(n, t, rng.Uniform() < 0.5);
  for (std::size_t t = 0; t < 50; ++t) mask.set(3, t, true);
  const std::vector<std::size_t> shuffle{2, 0, 1, 3};
  RealMatrix activity(4, 50);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t t = 0; t < 50; ++t)
      activity(j, t) = mask.active(shuffle[j], t) ? 0.8 : 0.1;
  const PitResult r = PitAlign(mask, activity);
  CHECK(r.permutation == std::vector<std::size_t>{1, 2, 0, 3});
  for (std::size_t i = 0; i < 4; ++i) CHECK(shuffle[r.permutation[i]] == i);
  const PitResult all = PitAlign(mask, activity, /*exclude_noise=*/false);
  CHECK(all.cost <= r.cost + 1e-12);
}

TEST_CASE("combined objective arithmetic and default weight") {
  CHECK(kDefaultGamma == 1.0);
  const ObjectiveReport r = CombinedObjective(-500.0, -20.0, 10, 5, 4);
  CHECK(r.gamma == 1.0);
  CHECK(r.l_total == doctest::Approx(-500.0 / 50.0 - 20.0 / 40.0));
  const ObjectiveReport g = CombinedObjective(-500.0, -20.0, 10, 5, 4, 0.25);
  CHECK(g.l_total == doctest::Approx(-10.0 - 0.25 * 0.5));
}

TEST_CASE("ELL with vanishing variance equals the JD log-likelihood") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t N = 2 + trial % 2, F = 4, T = 6, M = 2;
    JdParams jd = RandomJdParams(N, F, T, M, rng);
    std::vector<std::size_t> dims(N, 3);
    const ExpAffineDecoder dec = RandomDecoder(F, dims, rng, 0.5);
    PosteriorParams post = RandomPosterior(N, T, dims, rng);
    for (auto &v : post.variance) std::fill(v.begin(), v.end(), 1e-300);
    // Put the decoded PSDs into jd so that the plain NLL sees the same model.
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> psd(F);
        dec(n, t, post.mean_at(n, t), psd);
        for (std::size_t f = 0; f < F; ++f) jd.psd_at(n, f, t) = psd[f];
      }
    const Spectrogram x = RandomSpectrogram(F, T, M, rng);
    const double ell = ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 1);
    const double expected = -NegLogLikelihood(x, jd) +
                            static_cast<double>(M * T * F) * std::log(std::numbers::pi);
    CHECK(RelativeError(ell, expected) < 1e-10);
  }
}

TEST_CASE("single-source ELL matches its log-normal closed form") {
  // With N = 1 and y = g exp(b + w.z): E[log y] = log g + b + w.mu and
  // E[1/y] = exp(-b - w.mu + sum_d w_d^2 var_d / 2) / g.
  Rng rng(6);
  const std::size_t F = 3, T = 4, M = 2, D = 2;
  JdParams jd = RandomJdParams(1, F, T, M, rng);
  const ExpAffineDecoder dec = RandomDecoder(F, {D}, rng, 0.4);
  const PosteriorParams post = RandomPosterior(1, T, {D}, rng, 0.5);
  const Spectrogram x = RandomSpectrogram(F, T, M, rng);
  double exact = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    const Eigen::MatrixXcd &Q = jd.diagonalizers[f];
    exact += static_cast<double>(T) * std::log(std::norm(Q.determinant()));
    for (std::size_t t = 0; t < T; ++t) {
      Eigen::VectorXcd xv(M);
      for (std::size_t m = 0; m < M; ++m) xv(m) = x(f, t, m);
      const Eigen::VectorXcd y = Q * xv;
      double mean_exponent = dec.bias[f], half_var = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double w = dec.weight[0][f * D + d];
        mean_exponent += w * post.mean_at(0, t)[d];
        half_var += 0.5 * w * w * post.variance_at(0, t)[d];
      }
      for (std::size_t m = 0; m < M; ++m) {
        const double g = jd.gain(0, f, m);
        exact -= std::log(g) + mean_exponent;
        exact -= std::norm(y(m)) * std::exp(-mean_exponent + half_var) / g;
      }
    }
  }
  const double mc = ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 9, 200000);
  MESSAGE("closed form " << exact << ", Monte Carlo " << mc);
  CHECK(RelativeError(mc, exact) < 2e-3);
}

TEST_CASE("objective report: perfect activities cost nothing") {
  Rng rng(7);
  const std::size_t N = 3, F = 4, T = 6, M = 2;
  JdParams jd = RandomJdParams(N, F, T, M, rng);
  std::vector<std::size_t> dims{3, 3, 2};
  const ExpAffineDecoder dec = RandomDecoder(F, dims, rng, 0.3);
  PosteriorParams post = RandomPosterior(N, T, dims, rng);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < T; ++t) post.activity(n, t) = jd.masks.value(n, t);
  const Spectrogram x = RandomSpectrogram(F, T, M, rng);
  const ObjectiveReport r = EvaluateObjective(x, jd, post, dec.AsDecoder(), kDefaultGamma, 3);
  CHECK(r.l_diar == 0.0);
  CHECK(r.permutation == std::vector<std::size_t>{0, 1, 2});
  CHECK(r.l_total == doctest::Approx(r.l_sep / (T * F)));
  const double ell = ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 3);
  CHECK(r.l_sep == doctest::Approx(ell - KlToStandardNormal(post)));
  post.activity(0, 0) = 0.5;
  const ObjectiveReport half = EvaluateObjective(x, jd, post, dec.AsDecoder(), 2.0, 3);
  CHECK(half.l_diar < 0.0);
  CHECK(half.l_total == doctest::Approx(half.l_sep / (T * F) + 2.0 * half.l_diar / (T * N)));
}

TEST_CASE("posterior validation") {
  PosteriorParams post(1, 2, {2});
  for (auto &v : post.variance[0]) v = 1.0;
  CHECK_NOTHROW(post.Validate());
  post.variance[0][1] = 0.0;
  try {
    post.Validate();
    FAIL("expected NonPositiveVariance");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kNonPositiveVariance);
  }
  post.variance[0][1] = 1.0;
  post.activity(0, 1) = 1.5;
  CHECK_THROWS_AS(post.Validate(), Error);
}

TEST_CASE("KL hand values and nonnegativity") {
  PosteriorParams one(1, 1, {1});
  one.mean[0][0] = 1.0;
  one.variance[0][0] = 1.0;
  CHECK(KlToStandardNormal(one) == 0.5);
  Rng rng(12);
  for (int k = 0; k < 50; ++k) CHECK(KlToStandardNormal(RandomPosterior(2, 4, {3, 1}, rng, 5.0)) >= 0.0);
}

TEST_CASE("combined objective hand values") {
  const ObjectiveReport r = CombinedObjective(-6.0 * 7.0, -6.0 * 3.0, 6, 7, 3);
  CHECK(r.l_total == doctest::Approx(-2.0));
  const ObjectiveReport z = CombinedObjective(-42.0, -100.0, 6, 7, 3, 0.0);
  CHECK(z.l_total == doctest::Approx(-1.0));
  CHECK_THROWS_AS(CombinedObjective(1.0, 1.0, 0, 1, 1), Error);
}

TEST_CASE("ELL on a single bin by hand") {
  // One source, one channel: y = g exp(b) with mu = 0 and zero weights.
  JdParams jd(1, 1, 1, 1);
  jd.diagonalizers[0](0, 0) = cdouble(0.0, 2.0);
  jd.gain(0, 0, 0) = 0.5;
  ExpAffineDecoder dec;
  dec.num_freqs = 1;
  dec.latent_dims = {2};
  dec.bias = {std::log(3.0)};
  dec.weight = {{0.0, 0.0}};
  PosteriorParams post(1, 1, {2});
  for (auto &v : post.variance[0]) v = 0.7;
  Spectrogram x(1, 1, 1);
  x(0, 0, 0) = cdouble(1.0, -1.0);
  // log|q|^2 - log(1.5) - |q x|^2 / 1.5 with |q x|^2 = 8.
  const double expected = std::log(4.0) - std::log(1.5) - 8.0 / 1.5;
  CHECK(ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 1) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("single-sample ELL estimates scatter around their mean") {
  Rng rng(13);
  const std::size_t F = 3, T = 4, M = 2;
  JdParams jd = RandomJdParams(2, F, T, M, rng);
  const ExpAffineDecoder dec = RandomDecoder(F, {2, 2}, rng, 0.3);
  const PosteriorParams post = RandomPosterior(2, T, {2, 2}, rng, 0.5);
  const Spectrogram x = RandomSpectrogram(F, T, M, rng);
  const int draws = 10000;
  double sum = 0.0, sq = 0.0;
  for (int s = 0; s < draws; ++s) {
    const double v = ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 1000 + s);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / draws;
  const double sd = std::sqrt((sq / draws - mean * mean) / (draws - 1.0) * draws);
  const double a = ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 1);
  const double b = ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 2);
  CHECK(a != b);
  // Each single draw lies within 3 sampling standard deviations of the mean.
  CHECK(std::abs(a - mean) < 3.0 * sd);
  CHECK(std::abs(b - mean) < 3.0 * sd);
  // The many-sample estimator agrees with the mean of single draws.
  const double many = ExpectedLogLikelihood(x, jd, post, dec.AsDecoder(), 77, 10000);
  CHECK(std::abs(many - mean) < 3.0 * sd * std::sqrt(2.0 / draws));
}

TEST_CASE("BCE equals a double loop and is permutation equivariant") {
  Rng rng(14);
  ActivityMask mask(3, 5);
  RealMatrix act(3, 5);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t t = 0; t < 5; ++t) {
      mask.set(n, t, rng.Uniform() < 0.5);
      act(n, t) = rng.Uniform();
    }
  double loop = 0.0;
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t t = 0; t < 5; ++t)
      loop -= mask.active(n, t) ? std::log(act(n, t)) : std::log(1.0 - act(n, t));
  CHECK(std::abs(BceDiarization(mask, act) - loop) <= 1e-12 * loop);
  const std::vector<std::size_t> order{2, 0, 1};
  RealMatrix act_p(3, 5);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t t = 0; t < 5; ++t) act_p(n, t) = act(order[n], t);
  CHECK(BceDiarization(mask.Permuted(order), act_p) ==
        doctest::Approx(BceDiarization(mask, act)).epsilon(1e-14));
}

TEST_CASE("PIT on exact activities") {
  Rng rng(15);
  ActivityMask mask(4, 30);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t t = 0; t < 30; ++t) mask.set(n, t, n == 3 || rng.Uniform() < 0.5);
  RealMatrix exact(4, 30), swapped(4, 30);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t t = 0; t < 30; ++t) {
      exact(n, t) = mask.value(n, t);
      swapped(n == 0 ? 1 : n == 1 ? 0 : n, t) = mask.value(n, t);
    }
  const PitResult id = PitAlign(mask, exact);
  CHECK(id.permutation == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(id.cost == 0.0);
  const PitResult sw = PitAlign(mask, swapped);
  CHECK(sw.permutation == std::vector<std::size_t>{1, 0, 2, 3});
  CHECK(sw.cost == 0.0);
}
