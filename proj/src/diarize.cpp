// src/diarize.cpp

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

#include "mcsep/diarize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mcsep {

RealMatrix MedianSmooth(const RealMatrix &activity, std::size_t width) {
  if (width == 0 || width % 2 == 0)
    throw Error(ErrorCode::kEvenWidth,
                "median width must be odd and positive, got " + std::to_string(width));
  const std::size_t half = width / 2, T = activity.cols;
  RealMatrix out(activity.rows, T);
  std::vector<double> window(width);
  for (std::size_t n = 0; n < activity.rows; ++n)
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < width; ++k) {
        const long long idx = static_cast<long long>(t + k) - static_cast<long long>(half);
        const std::size_t clamped = static_cast<std::size_t>(
            std::clamp<long long>(idx, 0, static_cast<long long>(T) - 1));
        window[k] = activity(n, clamped);
      }
      std::nth_element(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(half),
                       window.end());
      out(n, t) = window[half];
    }
  return out;
}

ActivityMask Threshold(const RealMatrix &activity, double threshold) {
  ActivityMask mask(activity.rows, activity.cols);
  for (std::size_t n = 0; n < activity.rows; ++n)
    for (std::size_t t = 0; t < activity.cols; ++t)
      mask.set(n, t, activity(n, t) >= threshold);
  return mask;
}

DiarizationResult Diarize(const RealMatrix &activity, double threshold,
                          std::size_t median_width, double frame_rate) {
  DiarizationResult r;
  r.activity = Threshold(MedianSmooth(activity, median_width), threshold);
  r.frame_rate = frame_rate;
  r.clip_length = static_cast<double>(activity.cols) / frame_rate;
  return r;
}

DerBreakdown ScoreDiarization(const ActivityMask &hypothesis,
                              const ActivityMask &reference) {
  if (hypothesis.num_frames() != reference.num_frames())
    throw Error(ErrorCode::kLengthMismatch,
                "hypothesis has " + std::to_string(hypothesis.num_frames()) +
                    " frames, reference " + std::to_string(reference.num_frames()));
  DerBreakdown d;
  const std::size_t shared = std::min(hypothesis.num_sources(), reference.num_sources());
  for (std::size_t t = 0; t < reference.num_frames(); ++t) {
    std::size_t n_ref = 0, n_hyp = 0, n_correct = 0;
    for (std::size_t n = 0; n < reference.num_sources(); ++n) n_ref += reference.active(n, t);
    for (std::size_t n = 0; n < hypothesis.num_sources(); ++n) n_hyp += hypothesis.active(n, t);
    for (std::size_t n = 0; n < shared; ++n)
      n_correct += reference.active(n, t) && hypothesis.active(n, t);
    d.reference_speech += static_cast<double>(n_ref);
    if (n_ref > n_hyp) d.missed += static_cast<double>(n_ref - n_hyp);
    if (n_hyp > n_ref) d.false_alarm += static_cast<double>(n_hyp - n_ref);
    d.confusion += static_cast<double>(std::min(n_ref, n_hyp) - n_correct);
  }
  if (!(d.reference_speech > 0.0))
    throw Error(ErrorCode::kEmptyReference, "reference contains no speech frames");
  return d;
}

double DiarizationErrorRate(const ActivityMask &hypothesis, const ActivityMask &reference) {
  return ScoreDiarization(hypothesis, reference).rate();
}

double SourceCountingAccuracy(const ActivityMask &hypothesis, const ActivityMask &reference,
                              std::size_t clip_frames, std::size_t min_active) {
  if (clip_frames == 0) throw Error(ErrorCode::kInvalidArgument, "clip_frames must be >= 1");
  if (hypothesis.num_frames() != reference.num_frames())
    throw Error(ErrorCode::kLengthMismatch, "hypothesis and reference lengths differ");
  const std::size_t T = reference.num_frames();
  auto count = [&](const ActivityMask &mask, std::size_t begin, std::size_t end) {
    const std::size_t needed = std::min(min_active, end - begin);
    std::size_t speakers = 0;
    for (std::size_t n = 0; n < mask.num_sources(); ++n) {
      std::size_t active = 0;
      for (std::size_t t = begin; t < end; ++t) active += mask.active(n, t);
      speakers += active >= needed && active > 0;
    }
    return speakers;
  };
  std::size_t clips = 0, correct = 0;
  for (std::size_t begin = 0; begin < T; begin += clip_frames) {
    const std::size_t end = std::min(T, begin + clip_frames);
    ++clips;
    correct += count(hypothesis, begin, end) == count(reference, begin, end);
  }
  return clips ? static_cast<double>(correct) / static_cast<double>(clips) : 0.0;
}

double SiSdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size())
    throw Error(ErrorCode::kLengthMismatch, "estimate and reference lengths differ");
  double ref_energy = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    cross += estimate[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) throw Error(ErrorCode::kZeroReference, "reference is silent");
  const double alpha = cross / ref_energy;
  double target = 0.0, error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    target += s * s;
    error += (s - estimate[i]) * (s - estimate[i]);
  }
  if (!(error > 0.0)) return target > 0.0 ? kSiSdrCap : -kSiSdrCap;
  if (!(target > 0.0)) return -kSiSdrCap;
  return std::clamp(10.0 * std::log10(target / error), -kSiSdrCap, kSiSdrCap);
}

RealMatrix EnergyActivity(const std::vector<Spectrogram> &images, double relative_db) {
  if (images.empty()) return {};
  const std::size_t N = images.size(), T = images[0].num_frames();
  RealMatrix energy(N, T);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < images[n].num_freqs(); ++f)
      for (std::size_t t = 0; t < T; ++t) energy(n, t) += SquaredNorm(images[n].bin(f, t));
  const double ratio = std::pow(10.0, relative_db / 10.0);
  RealMatrix out(N, T);
  for (std::size_t n = 0; n < N; ++n) {
    double peak = 0.0;
    for (std::size_t t = 0; t < T; ++t) peak = std::max(peak, energy(n, t));
    if (!(peak > 0.0)) continue;
    for (std::size_t t = 0; t < T; ++t) out(n, t) = energy(n, t) >= ratio * peak ? 1.0 : 0.0;
  }
  return out;
}

void WriteMatrixCsv(const std::filesystem::path &path, const RealMatrix &matrix) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    for (std::size_t c = 0; c < matrix.cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.10g", matrix(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

RealMatrix ReadMatrixCsv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception &) {
        throw Error(ErrorCode::kIoError, path.string() + ": bad value '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw Error(ErrorCode::kDimensionMismatch, path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  RealMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = rows[r][c];
  return m;
}

ActivityMask MaskFromMatrix(const RealMatrix &matrix) {
  ActivityMask mask(matrix.rows, matrix.cols);
  for (std::size_t r = 0; r < matrix.rows; ++r)
    for (std::size_t c = 0; c < matrix.cols; ++c) {
      const double v = matrix(r, c);
      if (v != 0.0 && v != 1.0)
        throw Error(ErrorCode::kInvalidArgument, "mask entries must be 0 or 1");
      mask.set(r, c, v == 1.0);
    }
  return mask;
}

RealMatrix MatrixFromMask(const ActivityMask &mask) {
  RealMatrix m(mask.num_sources(), mask.num_frames());
  for (std::size_t n = 0; n < mask.num_sources(); ++n)
    for (std::size_t t = 0; t < mask.num_frames(); ++t) m(n, t) = mask.value(n, t);
  return m;
}

void WriteRttm(const std::filesystem::path &path, const ActivityMask &mask, double frame_rate,
               const std::string &file_id) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  char buf[256];
  for (std::size_t n = 0; n < mask.num_sources(); ++n) {
    std::size_t t = 0;
    while (t < mask.num_frames()) {
      if (!mask.active(n, t)) {
        ++t;
        continue;
      }
      const std::size_t begin = t;
      while (t < mask.num_frames() && mask.active(n, t)) ++t;
      std::snprintf(buf, sizeof(buf), "SPEAKER %s 1 %.6f %.6f <NA> <NA> spk%zu <NA> <NA>\n",
                    file_id.c_str(), static_cast<double>(begin) / frame_rate,
                    static_cast<double>(t - begin) / frame_rate, n);
      out << buf;
    }
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

ActivityMask ReadRttm(const std::filesystem::path &path, std::size_t num_frames,
                      double frame_rate) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  struct Segment {
    std::size_t speaker;
    double onset, duration;
  };
  std::vector<Segment> segments;
  std::map<std::string, std::size_t> labels;
  std::vector<std::string> order;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string type, file, channel, onset, duration, ortho, stype, name;
    if (!(ss >> type) || type != "SPEAKER") continue;
    if (!(ss >> file >> channel >> onset >> duration >> ortho >> stype >> name))
      throw Error(ErrorCode::kIoError, path.string() + ": malformed line '" + line + "'");
    if (!labels.count(name)) {
      labels[name] = order.size();
      order.push_back(name);
    }
    try {
      segments.push_back({labels[name], std::stod(onset), std::stod(duration)});
    } catch (const std::exception &) {
      throw Error(ErrorCode::kIoError, path.string() + ": bad time in '" + line + "'");
    }
  }
  // spk<k> labels map to row k; any other labelling uses first-appearance order.
  bool indexed = !order.empty();
  std::size_t rows = order.size();
  std::vector<std::size_t> row_of(order.size());
  for (std::size_t i = 0; i < order.size() && indexed; ++i) {
    const std::string &l = order[i];
    if (l.size() < 4 || l.compare(0, 3, "spk") != 0 ||
        !std::all_of(l.begin() + 3, l.end(), ::isdigit)) {
      indexed = false;
      break;
    }
    row_of[i] = std::stoul(l.substr(3));
  }
  if (indexed) {
    rows = 0;
    for (auto r : row_of) rows = std::max(rows, r + 1);
  } else {
    for (std::size_t i = 0; i < order.size(); ++i) row_of[i] = i;
  }
  ActivityMask mask(rows, num_frames);
  constexpr double kEps = 1e-6;
  for (const auto &s : segments)
    for (std::size_t t = 0; t < num_frames; ++t) {
      const double start = static_cast<double>(t) / frame_rate;
      if (start >= s.onset - kEps && start < s.onset + s.duration - kEps)
        mask.set(row_of[s.speaker], t, true);
    }
  return mask;
}

ActivityMask ReadMaskFile(const std::filesystem::path &path, std::size_t num_frames,
                          double frame_rate) {
  if (path.extension() == ".rttm") return ReadRttm(path, num_frames, frame_rate);
  ActivityMask mask = MaskFromMatrix(ReadMatrixCsv(path));
  if (mask.num_frames() != num_frames)
    throw Error(ErrorCode::kLengthMismatch,
                path.string() + " has " + std::to_string(mask.num_frames()) +
                    " frames, expected " + std::to_string(num_frames));
  return mask;
}

}  // namespace mcsep
