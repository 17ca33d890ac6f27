// include/mcsep/diarize.hpp

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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcsep/core.hpp"

namespace mcsep {

// Sliding median per source row with edge replication. Width must be odd.
RealMatrix MedianSmooth(const RealMatrix &activity, std::size_t width);

// 1 where activity >= threshold.
ActivityMask Threshold(const RealMatrix &activity, double threshold = 0.5);

struct DiarizationResult {
  ActivityMask activity;
  double frame_rate = 100.0;
  double clip_length = 0.0;  // seconds
};

// Median smoothing followed by thresholding.
DiarizationResult Diarize(const RealMatrix &activity, double threshold,
                          std::size_t median_width, double frame_rate);

struct DerBreakdown {
  double missed = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double reference_speech = 0.0;
  double rate() const {
    return (missed + false_alarm + confusion) / reference_speech;
  }
};

// Frame-level diarization error without collar. Row n of `hypothesis` is
// taken to be the same speaker as row n of `reference`; surplus rows on
// either side only ever count as missed or false-alarm speech.
DerBreakdown ScoreDiarization(const ActivityMask &hypothesis,
                              const ActivityMask &reference);
double DiarizationErrorRate(const ActivityMask &hypothesis,
                            const ActivityMask &reference);

// Splits both masks into consecutive clips of `clip_frames` frames (the last
// clip may be shorter) and returns the fraction of clips whose speaker count
// matches. A speaker counts when active for at least `min_active` frames of
// the clip (or of the whole clip when it is shorter than that).
double SourceCountingAccuracy(const ActivityMask &hypothesis,
                              const ActivityMask &reference,
                              std::size_t clip_frames,
                              std::size_t min_active = 10);

// Scale-invariant SDR in dB, clamped to [-300, 300].
double SiSdr(std::span<const double> estimate, std::span<const double> reference);
constexpr double kSiSdrCap = 300.0;

// Per-frame energy activity of separated images: 1 where the frame energy is
// within `relative_db` of the source's loudest frame, else 0.
RealMatrix EnergyActivity(const std::vector<Spectrogram> &images,
                          double relative_db = -30.0);

// Frame-level CSV: one row per source, one column per frame.
void WriteMatrixCsv(const std::filesystem::path &path, const RealMatrix &matrix);
RealMatrix ReadMatrixCsv(const std::filesystem::path &path);
ActivityMask MaskFromMatrix(const RealMatrix &matrix);
RealMatrix MatrixFromMask(const ActivityMask &mask);

// RTTM segments. Frame t covers [t, t + 1) / frame_rate seconds; on reading,
// a frame is active when its start time falls inside a segment. Speakers are
// labelled spk<index>.
void WriteRttm(const std::filesystem::path &path, const ActivityMask &mask,
               double frame_rate, const std::string &file_id = "mixture");
ActivityMask ReadRttm(const std::filesystem::path &path, std::size_t num_frames,
                      double frame_rate);

// Dispatches on extension (.rttm or anything else as CSV).
ActivityMask ReadMaskFile(const std::filesystem::path &path, std::size_t num_frames,
                          double frame_rate);

}  // namespace mcsep
