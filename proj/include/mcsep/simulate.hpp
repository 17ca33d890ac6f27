// include/mcsep/simulate.hpp

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

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mcsep/core.hpp"
#include "mcsep/objectives.hpp"
#include "mcsep/stft.hpp"

namespace mcsep {

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr std::size_t kMaxSpeakers = 5;

struct ArrayGeometry {
  std::vector<std::array<double, 3>> mic_positions;  // meters
  std::string shape = "custom";

  std::size_t num_mics() const { return mic_positions.size(); }

  // Uniform circle in the horizontal plane; mic m at angle 2 pi m / M.
  static ArrayGeometry Circular(std::size_t num_mics = 8, double radius = 0.10);
};

// Far-field plane-wave steering vector for a source at `azimuth` radians:
// a_m = exp(-2 pi i f tau_m), tau_m the arrival delay at mic m relative to
// the array origin.
std::vector<cdouble> SteeringVector(const ArrayGeometry &geometry, double azimuth,
                                    double freq_hz);

enum class ActivityPattern { kFullOverlap, kSequential, kPartialOverlap };

ActivityPattern ParseActivityPattern(const std::string &name);
const char *ActivityPatternName(ActivityPattern pattern);
ActivityMask MakeActivity(ActivityPattern pattern, std::size_t num_speakers,
                          std::size_t num_frames);

// Speech-like PSD generator: an AR(2) spectral envelope per speaker times a
// two-state Markov temporal gain.
struct PsdModel {
  double pole_radius = 0.9;
  double min_formant_hz = 300.0;
  double max_formant_hz = 3000.0;
  double low_gain = 0.2;
  double switch_probability = 0.03;
  double source_power = 1.0;
};

struct SceneConfig {
  ArrayGeometry geometry = ArrayGeometry::Circular();
  std::size_t num_speakers = 2;
  double duration_s = 10.0;
  ActivityPattern pattern = ActivityPattern::kPartialOverlap;
  PsdModel psd_model;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  // Seed for the PSDs and azimuths only; defaults to `seed`.
  std::optional<std::uint64_t> psd_seed;
  StftConfig stft;
  // Frequency-independent steering per speaker (M entries each); replaces
  // the plane-wave model when set.
  std::optional<std::vector<std::vector<cdouble>>> steering_override;
  // Replaces the preset activity pattern when set (speakers x frames).
  std::optional<ActivityMask> activity_override;
};

struct MixtureScene {
  Spectrogram mixture;
  std::vector<Spectrogram> source_images;  // masked, one per speaker
  Spectrogram noise;
  ActivityMask masks;
  std::vector<cdouble> steering;  // (n, f, m)
  std::vector<double> psd;        // (n, f, t), before masking
  std::vector<double> azimuths;
  double noise_variance = 0.0;
  std::uint64_t seed = 0;
  StftConfig stft;
  std::size_t num_samples = 0;  // time-domain length
};

// Draws s_nft ~ CN(0, psd_nft), masks it, mixes through the steering vectors
// and adds spatially white noise at `snr_db` (infinite = no noise).
MixtureScene SynthesizeScene(const SceneConfig &config);

enum class Alignment { kActivityPit, kSiSdr };

struct OracleReport {
  std::vector<double> si_sdr;          // per speaker, aligned estimate
  std::vector<double> si_sdr_mixture;  // per speaker, mixture baseline
  double mean_improvement = 0.0;
  double der = 0.0;
  std::vector<std::size_t> permutation;  // speaker -> estimate index
};

// Scores separated images against the scene. Estimates are aligned to the
// speakers either by BCE-PIT on their energy activity or by maximizing the
// total SI-SDR; SI-SDR is computed in the time domain on `ref_channel`.
OracleReport OracleEvaluate(const MixtureScene &scene, const std::vector<Spectrogram> &estimates,
                            Alignment alignment = Alignment::kActivityPit,
                            std::size_t ref_channel = 0);

}  // namespace mcsep
