// src/simulate.cpp

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

#include "mcsep/simulate.hpp"

#include <cmath>
#include <numbers>

#include "mcsep/diarize.hpp"

namespace mcsep {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::uint64_t kPsdStream = 0x9E3779B97F4A7C15ull;

}  // namespace

ArrayGeometry ArrayGeometry::Circular(std::size_t num_mics, double radius) {
  ArrayGeometry g;
  g.shape = "circular";
  for (std::size_t m = 0; m < num_mics; ++m) {
    const double angle = kTwoPi * static_cast<double>(m) / static_cast<double>(num_mics);
    g.mic_positions.push_back({radius * std::cos(angle), radius * std::sin(angle), 0.0});
  }
  return g;
}

std::vector<cdouble> SteeringVector(const ArrayGeometry &geometry, double azimuth,
                                    double freq_hz) {
  if (!(freq_hz >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "frequency must be >= 0");
  const double ux = std::cos(azimuth), uy = std::sin(azimuth);
  std::vector<cdouble> a(geometry.num_mics());
  for (std::size_t m = 0; m < a.size(); ++m) {
    const auto &p = geometry.mic_positions[m];
    // Mics displaced toward the source hear it earlier.
    const double tau = -(p[0] * ux + p[1] * uy) / kSpeedOfSound;
    a[m] = std::polar(1.0, -kTwoPi * freq_hz * tau);
  }
  return a;
}

ActivityPattern ParseActivityPattern(const std::string &name) {
  if (name == "full-overlap") return ActivityPattern::kFullOverlap;
  if (name == "sequential") return ActivityPattern::kSequential;
  if (name == "partial-overlap") return ActivityPattern::kPartialOverlap;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown activity pattern '" + name +
                  "' (expected full-overlap, sequential or partial-overlap)");
}

const char *ActivityPatternName(ActivityPattern pattern) {
  switch (pattern) {
    case ActivityPattern::kFullOverlap: return "full-overlap";
    case ActivityPattern::kSequential: return "sequential";
    case ActivityPattern::kPartialOverlap: return "partial-overlap";
  }
  return "?";
}

ActivityMask MakeActivity(ActivityPattern pattern, std::size_t num_speakers,
                          std::size_t num_frames) {
  ActivityMask mask(num_speakers, num_frames);
  const std::size_t S = num_speakers, T = num_frames;
  for (std::size_t n = 0; n < S; ++n)
    for (std::size_t t = 0; t < T; ++t) {
      bool on = true;
      switch (pattern) {
        case ActivityPattern::kFullOverlap:
          on = true;
          break;
        case ActivityPattern::kSequential:
          // Equal turns, one speaker at a time.
          on = t * S / T == n;
          break;
        case ActivityPattern::kPartialOverlap: {
          // S + 1 segments; speaker n talks in segments n and n + 1.
          const std::size_t segment = t * (S + 1) / T;
          on = segment == n || segment == n + 1;
          break;
        }
      }
      mask.set(n, t, on);
    }
  return mask;
}

MixtureScene SynthesizeScene(const SceneConfig &config) {
  const std::size_t S = config.num_speakers;
  if (S > kMaxSpeakers)
    throw Error(ErrorCode::kTooManySpeakers,
                std::to_string(S) + " speakers requested; at most " +
                    std::to_string(kMaxSpeakers) + " are supported");
  if (S == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one speaker");
  if (!(config.duration_s >= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "duration must be at least 1 s");
  if (std::isnan(config.snr_db) || config.snr_db == -std::numeric_limits<double>::infinity())
    throw Error(ErrorCode::kInvalidSnr, "SNR must be a number or +inf");
  config.stft.Validate();
  const std::size_t M = config.geometry.num_mics();
  if (M == 0) throw Error(ErrorCode::kInvalidArgument, "geometry has no microphones");
  if (config.steering_override) {
    if (config.steering_override->size() != S)
      throw Error(ErrorCode::kDimensionMismatch, "one steering vector per speaker is required");
    for (const auto &a : *config.steering_override)
      if (a.size() != M)
        throw Error(ErrorCode::kDimensionMismatch, "steering override has the wrong length");
  }

  MixtureScene scene;
  scene.seed = config.seed;
  scene.stft = config.stft;
  scene.num_samples =
      static_cast<std::size_t>(std::llround(config.duration_s * config.stft.sample_rate));
  const std::size_t F = config.stft.num_freqs(), T = config.stft.num_frames(scene.num_samples);
  const double sr = config.stft.sample_rate;

  if (config.activity_override) {
    if (config.activity_override->num_sources() != S ||
        config.activity_override->num_frames() != T)
      throw Error(ErrorCode::kDimensionMismatch, "activity override has the wrong shape");
    scene.masks = *config.activity_override;
  } else {
    scene.masks = MakeActivity(config.pattern, S, T);
  }

  Rng psd_rng(config.psd_seed.value_or(config.seed) ^ kPsdStream);
  const double base = psd_rng.Uniform(0.0, kTwoPi);
  for (std::size_t n = 0; n < S; ++n)
    scene.azimuths.push_back(base + kTwoPi * static_cast<double>(n) / static_cast<double>(S) +
                             psd_rng.Uniform(-0.2, 0.2));

  const PsdModel &pm = config.psd_model;
  scene.psd.assign(S * F * T, 0.0);
  for (std::size_t n = 0; n < S; ++n) {
    const double theta = kTwoPi * psd_rng.Uniform(pm.min_formant_hz, pm.max_formant_hz) / sr;
    const double r = pm.pole_radius;
    std::vector<double> envelope(F);
    double mean = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      const double w = std::numbers::pi * static_cast<double>(f) / static_cast<double>(F - 1);
      const cdouble z1 = std::polar(1.0, -w), z2 = std::polar(1.0, -2.0 * w);
      envelope[f] = 1.0 / std::norm(1.0 - 2.0 * r * std::cos(theta) * z1 + r * r * z2);
      mean += envelope[f];
    }
    mean /= static_cast<double>(F);
    bool high = psd_rng.Uniform() < 0.5;
    for (std::size_t t = 0; t < T; ++t) {
      if (psd_rng.Uniform() < pm.switch_probability) high = !high;
      const double gain = high ? 1.0 : pm.low_gain;
      for (std::size_t f = 0; f < F; ++f)
        scene.psd[(n * F + f) * T + t] = pm.source_power * envelope[f] / mean * gain;
    }
  }

  scene.steering.assign(S * F * M, cdouble{});
  for (std::size_t n = 0; n < S; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      const auto a = config.steering_override
                         ? (*config.steering_override)[n]
                         : SteeringVector(config.geometry, scene.azimuths[n],
                                          sr * static_cast<double>(f) /
                                              static_cast<double>(config.stft.window_size));
      for (std::size_t m = 0; m < M; ++m) scene.steering[(n * F + f) * M + m] = a[m];
    }

  Rng draw_rng(config.seed);
  const std::size_t hop = config.stft.hop;
  scene.source_images.assign(S, Spectrogram(F, T, M, sr, hop));
  for (std::size_t n = 0; n < S; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t t = 0; t < T; ++t) {
        // Always draw so that the random stream does not depend on the masks.
        const cdouble s = draw_rng.ComplexNormal(scene.psd[(n * F + f) * T + t]);
        if (!scene.masks.active(n, t)) continue;
        for (std::size_t m = 0; m < M; ++m)
          scene.source_images[n](f, t, m) = scene.steering[(n * F + f) * M + m] * s;
      }

  scene.noise = Spectrogram(F, T, M, sr, hop);
  if (std::isfinite(config.snr_db)) {
    double image_power = 0.0;
    for (const auto &img : scene.source_images) image_power += SquaredNorm(img.data());
    image_power /= static_cast<double>(F * T * M);
    scene.noise_variance = image_power / std::pow(10.0, config.snr_db / 10.0);
    for (auto &v : scene.noise.data()) v = draw_rng.ComplexNormal(scene.noise_variance);
  }

  scene.mixture = scene.noise;
  for (const auto &img : scene.source_images)
    for (std::size_t i = 0; i < img.data().size(); ++i) scene.mixture.data()[i] += img.data()[i];
  return scene;
}

OracleReport OracleEvaluate(const MixtureScene &scene, const std::vector<Spectrogram> &estimates,
                            Alignment alignment, std::size_t ref_channel) {
  const std::size_t S = scene.source_images.size();
  if (estimates.size() < S)
    throw Error(ErrorCode::kDimensionMismatch, "fewer estimates than speakers");
  for (const auto &e : estimates)
    if (!e.same_shape(scene.mixture))
      throw Error(ErrorCode::kDimensionMismatch, "estimate shape differs from the mixture");
  if (ref_channel >= scene.mixture.num_channels())
    throw Error(ErrorCode::kInvalidArgument, "reference channel out of range");

  auto channel = [&](const Spectrogram &spec) {
    return Istft(spec, scene.stft, scene.num_samples)[ref_channel];
  };
  std::vector<std::vector<double>> refs, ests;
  for (const auto &img : scene.source_images) refs.push_back(channel(img));
  for (const auto &e : estimates) ests.push_back(channel(e));
  const std::vector<double> mix = channel(scene.mixture);

  const RealMatrix activity = EnergyActivity(estimates);
  OracleReport report;
  RealMatrix cost(S, estimates.size());
  if (alignment == Alignment::kActivityPit) {
    cost = PairwiseBce(scene.masks, activity);
  } else {
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < estimates.size(); ++j) cost(i, j) = -SiSdr(ests[j], refs[i]);
  }
  report.permutation = SolveAssignment(cost).permutation;

  RealMatrix aligned(S, scene.masks.num_frames());
  double improvement = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    const std::size_t j = report.permutation[i];
    report.si_sdr.push_back(SiSdr(ests[j], refs[i]));
    report.si_sdr_mixture.push_back(SiSdr(mix, refs[i]));
    improvement += report.si_sdr.back() - report.si_sdr_mixture.back();
    for (std::size_t t = 0; t < aligned.cols; ++t) aligned(i, t) = activity(j, t);
  }
  report.mean_improvement = S ? improvement / static_cast<double>(S) : 0.0;
  report.der = DiarizationErrorRate(Threshold(aligned, 0.5), scene.masks);
  return report;
}

}  // namespace mcsep
