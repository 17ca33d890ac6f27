// src/cli.cpp

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

#include "mcsep/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcsep/arrays.hpp"
#include "mcsep/cacgmm.hpp"
#include "mcsep/diarize.hpp"
#include "mcsep/jdsep.hpp"
#include "mcsep/objectives.hpp"
#include "mcsep/simulate.hpp"
#include "mcsep/stft.hpp"
#include "mcsep/wav.hpp"
#include "mcsep/wpe.hpp"

namespace mcsep {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string Trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void WriteText(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void EmitJson(const ojson &report, const std::string &out_path, std::ostream &out) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    if (fs::path(out_path).has_parent_path())
      fs::create_directories(fs::path(out_path).parent_path());
    WriteText(out_path, text);
  }
}

// Flags shared by the commands that run an STFT.
struct StftFlags {
  std::size_t window = 512;
  std::size_t hop = 160;

  void Add(CLI::App *app) {
    app->add_option("--stft-window", window, "STFT window length in samples")
        ->capture_default_str();
    app->add_option("--stft-hop", hop, "STFT hop in samples")->capture_default_str();
  }
  StftConfig Config() const {
    StftConfig cfg;
    cfg.window_size = window;
    cfg.hop = hop;
    cfg.Validate();
    return cfg;
  }
};

WavData SignalToWav(const Signal &signal, double sample_rate) {
  WavData wav;
  wav.sample_rate = sample_rate;
  wav.channels = signal;
  return wav;
}

void WriteImage(const fs::path &path, const Spectrogram &image, const StftConfig &cfg,
                std::size_t length) {
  WriteWav(path, SignalToWav(Istft(image, cfg, length), cfg.sample_rate));
}

Spectrogram LoadSpectrogramWav(const fs::path &path, const StftConfig &cfg,
                               std::size_t *length = nullptr) {
  const WavData wav = ReadWav(path);
  RequireRate(wav, cfg.sample_rate);
  if (wav.channels.empty() || wav.channels[0].empty())
    throw Error(ErrorCode::kSignalTooShort, path.string() + " has no samples");
  if (length) *length = wav.channels[0].size();
  return Stft(wav.channels, cfg);
}

// Per-frame share of each output's energy; rows sum to one at every frame.
RealMatrix EnergyShare(const std::vector<Spectrogram> &images) {
  const std::size_t N = images.size(), T = images.empty() ? 0 : images[0].num_frames();
  RealMatrix share(N, T);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < images[n].num_freqs(); ++f)
      for (std::size_t t = 0; t < T; ++t) share(n, t) += SquaredNorm(images[n].bin(f, t));
  for (std::size_t t = 0; t < T; ++t) {
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) total += share(n, t);
    for (std::size_t n = 0; n < N; ++n)
      share(n, t) = total > 0.0 ? share(n, t) / total : 1.0 / static_cast<double>(N);
  }
  return share;
}

void PutCacgmmParams(ArrayArchive &archive, const CacgmmParams &p) {
  const std::size_t N = p.num_sources, F = p.num_freqs, M = p.num_channels;
  std::vector<cdouble> shapes;
  shapes.reserve(N * F * M * M);
  for (const auto &B : p.shape_matrices)
    for (Eigen::Index r = 0; r < B.rows(); ++r)
      for (Eigen::Index c = 0; c < B.cols(); ++c) shapes.push_back(B(r, c));
  archive.PutComplex("shape_matrices", shapes, {N, F, M, M});
  archive.PutReal("weights", p.weights, {N, F});
  archive.PutReal("responsibilities", p.responsibilities, {N, F, p.num_frames});
  if (p.guide) PutMask(archive, "guide", *p.guide);
}

ojson StftJson(const StftConfig &cfg) {
  ojson j;
  j["window_size"] = cfg.window_size;
  j["hop"] = cfg.hop;
  j["sample_rate"] = cfg.sample_rate;
  return j;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::size_t speakers = 2;
  double duration = 10.0;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t mics = 8;
  double radius = 0.10;
  double snr = 20.0;
  std::string pattern = "partial-overlap";
  StftFlags stft;
};

void AddSimulate(CLI::App &app, SimulateArgs &a) {
  auto *sub = app.add_subcommand("simulate", "synthesize an anechoic multichannel mixture");
  sub->add_option("--speakers", a.speakers, "number of speakers")
      ->capture_default_str()
      ->check(CLI::Validator(
          [](std::string &v) -> std::string {
            std::size_t n = 0;
            if (!CLI::detail::lexical_cast(v, n)) return "not a count: " + v;
            if (n < 1 || n > kMaxSpeakers)
              return "at most " + std::to_string(kMaxSpeakers) +
                     " speakers are supported (got " + v + ")";
            return {};
          },
          "1.." + std::to_string(kMaxSpeakers)));
  sub->add_option("--duration", a.duration, "length in seconds")
      ->capture_default_str()
      ->check(CLI::Range(1.0, 3600.0));
  sub->add_option("--seed", a.seed, "random seed")->capture_default_str();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--mics", a.mics, "microphones on the circular array")
      ->capture_default_str()
      ->check(CLI::Range(1, 64));
  sub->add_option("--radius", a.radius, "array radius in meters")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--snr", a.snr, "signal-to-noise ratio in dB (inf for no noise)")
      ->capture_default_str();
  sub->add_option("--pattern", a.pattern, "activity pattern")
      ->capture_default_str()
      ->check(CLI::IsMember({"full-overlap", "sequential", "partial-overlap"}));
  a.stft.Add(sub);
}

int RunSimulate(const SimulateArgs &a, std::ostream &out) {
  SceneConfig cfg;
  cfg.geometry = ArrayGeometry::Circular(a.mics, a.radius);
  cfg.num_speakers = a.speakers;
  cfg.duration_s = a.duration;
  cfg.pattern = ParseActivityPattern(a.pattern);
  cfg.snr_db = a.snr;
  cfg.seed = a.seed;
  cfg.stft = a.stft.Config();
  const MixtureScene scene = SynthesizeScene(cfg);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  WriteImage(dir / "mixture.wav", scene.mixture, scene.stft, scene.num_samples);
  for (std::size_t n = 0; n < scene.source_images.size(); ++n)
    WriteImage(dir / ("source_" + std::to_string(n) + ".wav"), scene.source_images[n],
               scene.stft, scene.num_samples);
  WriteImage(dir / "noise.wav", scene.noise, scene.stft, scene.num_samples);
  WriteMatrixCsv(dir / "masks.csv", MatrixFromMask(scene.masks));
  WriteRttm(dir / "masks.rttm", scene.masks, scene.stft.frame_rate(), "mixture");

  const std::size_t S = a.speakers, F = scene.mixture.num_freqs(),
                    T = scene.mixture.num_frames(), M = scene.mixture.num_channels();
  ArrayArchive archive;
  archive.metadata["kind"] = "scene";
  archive.metadata["seed"] = a.seed;
  archive.metadata["num_speakers"] = S;
  archive.metadata["duration_s"] = a.duration;
  archive.metadata["num_samples"] = scene.num_samples;
  archive.metadata["pattern"] = a.pattern;
  archive.metadata["snr_db"] = std::isfinite(a.snr) ? ojson(a.snr) : ojson("inf");
  archive.metadata["noise_variance"] = scene.noise_variance;
  archive.metadata["stft"] = StftJson(scene.stft);
  PutSpectrogram(archive, "mixture", scene.mixture);
  archive.PutComplex("steering", scene.steering, {S, F, M});
  archive.PutReal("psd", scene.psd, {S, F, T});
  PutMask(archive, "masks", scene.masks);
  archive.PutReal("azimuths", scene.azimuths, {S});
  std::vector<double> positions;
  for (const auto &p : cfg.geometry.mic_positions) positions.insert(positions.end(), p.begin(), p.end());
  archive.PutReal("mic_positions", positions, {M, 3});
  SaveArrays(archive, dir / "scene.json");
  out << "wrote scene with " << S << " speakers, " << M << " channels, " << T
      << " frames to " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- separate

struct SeparateArgs {
  std::string input;
  std::string method = "fastmnmf2";
  std::string masks;
  std::size_t sources = 6;
  std::size_t nmf_basis = 4;
  std::size_t iters = 0;
  CLI::Option *iters_opt = nullptr;
  std::uint64_t seed = 0;
  bool no_wpe = false;
  WpeConfig wpe;
  std::string out;
  StftFlags stft;
};

void AddSeparate(CLI::App &app, SeparateArgs &a) {
  auto *sub = app.add_subcommand("separate", "separate a multichannel recording");
  sub->add_option("--input", a.input, "mixture WAV")->required()->check(CLI::ExistingFile);
  sub->add_option("--method", a.method, "separation method")
      ->capture_default_str()
      ->check(CLI::IsMember({"gss", "cacgmm", "fastmnmf2", "fca-mask"}));
  sub->add_option("--masks", a.masks, "speaker activity (frame CSV or RTTM)");
  sub->add_option("--sources", a.sources, "sources for the blind methods")
      ->capture_default_str()
      ->check(CLI::Range(1, 64));
  sub->add_option("--nmf-basis", a.nmf_basis, "NMF bases per source (fastmnmf2)")
      ->capture_default_str()
      ->check(CLI::Range(1, 1024));
  a.iters_opt = sub->add_option("--iters", a.iters,
                                "iterations (default 100 for fastmnmf2/fca-mask, 30 for cacgmm/gss)");
  sub->add_option("--seed", a.seed, "random seed")->capture_default_str();
  sub->add_flag("--no-wpe", a.no_wpe, "skip dereverberation");
  sub->add_option("--wpe-taps", a.wpe.taps, "WPE filter taps")->capture_default_str();
  sub->add_option("--wpe-delay", a.wpe.delay, "WPE prediction delay")->capture_default_str();
  sub->add_option("--wpe-iters", a.wpe.iterations, "WPE iterations")->capture_default_str();
  sub->add_option("--out", a.out, "output directory")->required();
  a.stft.Add(sub);
}

int RunSeparate(const SeparateArgs &a, std::ostream &out) {
  const bool guided = a.method == "gss" || a.method == "fca-mask";
  if (guided && a.masks.empty())
    throw Error(ErrorCode::kMissingMasks, "method " + a.method + " needs --masks");
  const StftConfig cfg = a.stft.Config();
  std::size_t length = 0;
  Spectrogram spec = LoadSpectrogramWav(a.input, cfg, &length);
  if (!a.no_wpe) {
    a.wpe.Validate();
    spec = Dereverberate(spec, a.wpe);
  }
  std::optional<ActivityMask> guide;
  if (guided) guide = ReadMaskFile(a.masks, spec.num_frames(), cfg.frame_rate()).WithNoiseRow();

  const fs::path dir(a.out);
  fs::create_directories(dir);
  ArrayArchive archive;
  archive.metadata["kind"] = "params";
  archive.metadata["method"] = a.method;
  archive.metadata["seed"] = a.seed;
  archive.metadata["stft"] = StftJson(cfg);
  archive.metadata["wpe"] = a.no_wpe ? ojson(nullptr)
                                     : ojson{{"taps", a.wpe.taps},
                                             {"delay", a.wpe.delay},
                                             {"iterations", a.wpe.iterations}};

  std::vector<Spectrogram> images;
  std::vector<double> objective_trace;
  RealMatrix activity;
  if (a.method == "fca-mask" || a.method == "fastmnmf2") {
    JdFitOptions opts;
    opts.seed = a.seed;
    opts.iterations = *a.iters_opt ? a.iters : 100;
    const JdFit fit = a.method == "fca-mask"
                          ? FitMaskedFca(spec, *guide, opts)
                          : FitFastMnmf2(spec, a.sources, a.nmf_basis, opts);
    images = WienerSeparate(spec, fit.params);
    objective_trace = fit.nll_trace;
    activity = EnergyShare(images);
    archive.metadata["iterations"] = opts.iterations;
    PutJdParams(archive, fit.params, fit.nmf);
  } else {
    CacgmmOptions opts;
    opts.seed = a.seed;
    opts.iterations = *a.iters_opt ? a.iters : 30;
    const CacgmmFit fit = FitCacgmm(spec, guide ? guide->num_sources() : a.sources, guide, opts);
    images = ApplyResponsibilities(spec, fit.params);
    // Negated so that the trace is non-increasing like the JD traces.
    for (double ll : fit.log_likelihood_trace) objective_trace.push_back(-ll);
    activity = fit.params.FrameMasks();
    archive.metadata["iterations"] = opts.iterations;
    archive.metadata["num_sources"] = fit.params.num_sources;
    PutCacgmmParams(archive, fit.params);
  }
  PutSpectrogram(archive, "spectrogram", spec);
  SaveArrays(archive, dir / "params.json");

  for (std::size_t n = 0; n < images.size(); ++n)
    WriteImage(dir / ("est_" + std::to_string(n) + ".wav"), images[n], cfg, length);
  std::string trace;
  for (double v : objective_trace) trace += FormatDouble(v) + "\n";
  WriteText(dir / "nll_trace.txt", trace);
  WriteMatrixCsv(dir / "activity.csv", activity);
  out << "separated " << images.size() << " sources with " << a.method << " into "
      << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::vector<std::string> estimates;
  std::vector<std::string> references;
  std::string ref_masks;
  std::string hyp_activity;
  double threshold = 0.5;
  std::size_t median_width = 11;
  std::size_t channel = 0;
  std::size_t sca_clip = 500;
  std::string out;
  StftFlags stft;
};

void AddEvaluate(CLI::App &app, EvaluateArgs &a) {
  auto *sub = app.add_subcommand("evaluate", "score separated sources and diarization");
  sub->add_option("--estimates", a.estimates, "estimated source WAVs")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--references", a.references, "reference source WAVs")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--ref-masks", a.ref_masks,
                  "reference activity (CSV or RTTM); default: reference energy")
      ->check(CLI::ExistingFile);
  sub->add_option("--hyp-activity", a.hyp_activity,
                  "estimated activity CSV, rows in estimate order; default: estimate energy")
      ->check(CLI::ExistingFile);
  sub->add_option("--threshold", a.threshold, "activity threshold")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--median-width", a.median_width, "median filter width (odd)")
      ->capture_default_str();
  sub->add_option("--channel", a.channel, "reference channel for SI-SDR")->capture_default_str();
  sub->add_option("--sca-clip", a.sca_clip, "clip length in frames for counting accuracy")
      ->capture_default_str()
      ->check(CLI::Range(1, 1 << 30));
  sub->add_option("--out", a.out, "JSON report path (default: stdout)");
  a.stft.Add(sub);
}

int RunEvaluate(const EvaluateArgs &a, std::ostream &out) {
  const StftConfig cfg = a.stft.Config();
  if (a.references.size() > a.estimates.size())
    throw Error(ErrorCode::kDimensionMismatch, "more references than estimates");
  auto load = [&](const std::vector<std::string> &paths) {
    std::vector<WavData> wavs;
    for (const auto &p : paths) {
      wavs.push_back(ReadWav(p));
      RequireRate(wavs.back(), cfg.sample_rate);
    }
    return wavs;
  };
  const auto refs = load(a.references), ests = load(a.estimates);
  const std::size_t length = refs[0].channels.at(0).size();
  for (const auto *set : {&refs, &ests})
    for (const auto &w : *set) {
      if (w.channels.empty() || w.channels[0].size() != length)
        throw Error(ErrorCode::kLengthMismatch, "estimates and references differ in length");
      if (a.channel >= w.channels.size())
        throw Error(ErrorCode::kInvalidArgument, "--channel exceeds the channel count");
    }

  const std::size_t S = refs.size(), E = ests.size();
  RealMatrix sdr(S, E), cost(S, E);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < E; ++j) {
      sdr(i, j) = SiSdr(ests[j].channels[a.channel], refs[i].channels[a.channel]);
      cost(i, j) = -sdr(i, j);
    }
  const PitResult pit = SolveAssignment(cost);

  auto spectra = [&](const std::vector<WavData> &wavs) {
    std::vector<Spectrogram> out_specs;
    for (const auto &w : wavs) out_specs.push_back(Stft(w.channels, cfg));
    return out_specs;
  };
  const std::size_t T = cfg.num_frames(length);
  const ActivityMask reference =
      a.ref_masks.empty() ? Threshold(EnergyActivity(spectra(refs)), 0.5)
                          : ReadMaskFile(a.ref_masks, T, cfg.frame_rate());
  if (reference.num_sources() != S)
    throw Error(ErrorCode::kDimensionMismatch, "reference masks need one row per reference");
  const RealMatrix hyp_scores =
      a.hyp_activity.empty() ? EnergyActivity(spectra(ests)) : ReadMatrixCsv(a.hyp_activity);
  if (hyp_scores.rows != E || hyp_scores.cols != T)
    throw Error(ErrorCode::kLengthMismatch, "hypothesis activity has the wrong shape");
  const ActivityMask hyp_all = Diarize(hyp_scores, a.threshold, a.median_width,
                                       cfg.frame_rate()).activity;
  ActivityMask hyp(S, T);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t t = 0; t < T; ++t) hyp.set(i, t, hyp_all.active(pit.permutation[i], t));

  ojson report;
  ojson per_source = ojson::array();
  double mean = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    per_source.push_back(sdr(i, pit.permutation[i]));
    mean += sdr(i, pit.permutation[i]);
  }
  report["si_sdr"] = {{"per_source", per_source}, {"mean", mean / static_cast<double>(S)}};
  report["der"] = DiarizationErrorRate(hyp, reference);
  report["sca"] = SourceCountingAccuracy(hyp, reference, a.sca_clip);
  report["permutation"] = pit.permutation;
  EmitJson(report, a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------- objective

struct ObjectiveArgs {
  std::string spectrogram;
  std::string spectrogram_name;
  std::string params;
  std::string posterior;
  std::string masks;
  double gamma = kDefaultGamma;
  std::uint64_t seed = 0;
  std::size_t samples = 1;
  std::string out;
};

void AddObjective(CLI::App &app, ObjectiveArgs &a) {
  auto *sub = app.add_subcommand("objective", "evaluate the multitask training objective");
  sub->add_option("--spectrogram", a.spectrogram, "manifest holding the mixture spectrogram")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--spectrogram-name", a.spectrogram_name,
                  "array name (default: the only spectrogram in the manifest)");
  sub->add_option("--params", a.params, "JD params manifest")->required()->check(CLI::ExistingFile);
  sub->add_option("--posterior", a.posterior, "posterior + decoder manifest")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--masks", a.masks, "speaker masks overriding those in --params")
      ->check(CLI::ExistingFile);
  sub->add_option("--gamma", a.gamma, "weight of the diarization term")->capture_default_str();
  sub->add_option("--seed", a.seed, "seed of the reparameterization noise")->capture_default_str();
  sub->add_option("--samples", a.samples, "Monte-Carlo samples")
      ->capture_default_str()
      ->check(CLI::Range(1, 1 << 20));
  sub->add_option("--out", a.out, "JSON report path (default: stdout)");
}

int RunObjective(const ObjectiveArgs &a, std::ostream &out) {
  const ArrayArchive spec_archive = LoadArrays(a.spectrogram);
  std::string name = a.spectrogram_name;
  if (name.empty()) {
    const auto &specs = spec_archive.metadata.value("spectrograms", ojson::object());
    if (specs.size() != 1)
      throw Error(ErrorCode::kManifestMismatch,
                  "manifest holds " + std::to_string(specs.size()) +
                      " spectrograms; pick one with --spectrogram-name");
    name = specs.begin().key();
  }
  const Spectrogram spec = GetSpectrogram(spec_archive, name);
  JdParams jd = GetJdParams(LoadArrays(a.params));
  if (!a.masks.empty()) {
    const double frame_rate = spec.sample_rate() / static_cast<double>(spec.hop());
    jd.masks = ReadMaskFile(a.masks, spec.num_frames(), frame_rate).WithNoiseRow();
    if (jd.masks.num_sources() != jd.num_sources)
      throw Error(ErrorCode::kManifestMismatch, "mask rows do not match the params sources");
  }
  jd.ValidateAgainst(spec);

  const ArrayArchive post_archive = LoadArrays(a.posterior);
  const std::size_t N = jd.num_sources, T = spec.num_frames(), F = spec.num_freqs();
  std::vector<std::size_t> dims;
  for (std::size_t n = 0; n < N; ++n) {
    const std::string key = "mean_" + std::to_string(n);
    if (!post_archive.Contains(key))
      throw Error(ErrorCode::kManifestMismatch, "posterior manifest lacks " + key);
    const auto &shape = post_archive.Get(key).shape;
    if (shape.size() != 2 || shape[0] != T)
      throw Error(ErrorCode::kManifestMismatch, key + " must have shape (T, D)");
    dims.push_back(shape[1]);
  }
  PosteriorParams post(N, T, dims);
  ExpAffineDecoder decoder;
  decoder.num_freqs = F;
  decoder.latent_dims = dims;
  decoder.bias = post_archive.GetReal("decoder_bias", {N, F});
  for (std::size_t n = 0; n < N; ++n) {
    const std::string suffix = "_" + std::to_string(n);
    post.mean[n] = post_archive.GetReal("mean" + suffix, {T, dims[n]});
    post.variance[n] = post_archive.GetReal("variance" + suffix, {T, dims[n]});
    decoder.weight.push_back(post_archive.GetReal("decoder_weight" + suffix, {F, dims[n]}));
  }
  post.activity.rows = N;
  post.activity.cols = T;
  post.activity.data = post_archive.GetReal("activity", {N, T});
  post.Validate();

  const ObjectiveReport r =
      EvaluateObjective(spec, jd, post, decoder.AsDecoder(), a.gamma, a.seed, a.samples);
  ojson report;
  report["l_sep"] = r.l_sep;
  report["l_diar"] = r.l_diar;
  report["l_total"] = r.l_total;
  report["gamma"] = r.gamma;
  report["permutation"] = r.permutation;
  EmitJson(report, a.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------- plotdata

struct PlotArgs {
  std::vector<std::string> inputs;
  std::vector<std::string> activities;
  double db_floor = -240.0;
  std::size_t channel = 0;
  std::string out;
  StftFlags stft;
};

void AddPlotdata(CLI::App &app, PlotArgs &a) {
  auto *sub = app.add_subcommand("plotdata", "export log-magnitude and activity CSVs");
  sub->add_option("--input", a.inputs, "WAV files or spectrogram manifests")
      ->check(CLI::ExistingFile);
  sub->add_option("--activity", a.activities, "activity CSVs (sources x frames)")
      ->check(CLI::ExistingFile);
  sub->add_option("--db-floor", a.db_floor, "lower clamp in dB")->capture_default_str();
  sub->add_option("--channel", a.channel, "channel to export")->capture_default_str();
  sub->add_option("--out", a.out, "output directory")->required();
  a.stft.Add(sub);
}

void WriteLogMagnitude(const fs::path &path, const Spectrogram &spec, std::size_t channel,
                       double db_floor) {
  if (channel >= spec.num_channels())
    throw Error(ErrorCode::kInvalidArgument, "--channel exceeds the channel count");
  RealMatrix m(spec.num_freqs(), spec.num_frames());
  for (std::size_t f = 0; f < m.rows; ++f)
    for (std::size_t t = 0; t < m.cols; ++t)
      m(f, t) = std::max(db_floor, 20.0 * std::log10(std::abs(spec(f, t, channel)) + 1e-12));
  WriteMatrixCsv(path, m);
}

int RunPlotdata(const PlotArgs &a, std::ostream &out) {
  if (a.inputs.empty() && a.activities.empty())
    throw Error(ErrorCode::kInvalidArgument, "nothing to export; pass --input or --activity");
  const StftConfig cfg = a.stft.Config();
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::size_t written = 0;
  for (const auto &input : a.inputs) {
    const fs::path p(input);
    if (p.extension() == ".json") {
      const ArrayArchive archive = LoadArrays(p);
      const ojson specs = archive.metadata.value("spectrograms", ojson::object());
      for (const auto &[name, _] : specs.items()) {
        WriteLogMagnitude(dir / (p.stem().string() + "_" + name + ".csv"),
                          GetSpectrogram(archive, name), a.channel, a.db_floor);
        ++written;
      }
    } else {
      WriteLogMagnitude(dir / (p.stem().string() + ".csv"), LoadSpectrogramWav(p, cfg),
                        a.channel, a.db_floor);
      ++written;
    }
  }
  for (const auto &input : a.activities) {
    const fs::path p(input);
    const RealMatrix act = ReadMatrixCsv(p);
    // Ribbon layout: one line per frame, time first.
    std::string text = "time";
    for (std::size_t n = 0; n < act.rows; ++n) text += ",src" + std::to_string(n);
    text += "\n";
    char buf[32];
    for (std::size_t t = 0; t < act.cols; ++t) {
      std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(t) / cfg.frame_rate());
      text += buf;
      for (std::size_t n = 0; n < act.rows; ++n) {
        std::snprintf(buf, sizeof(buf), ",%.10g", act(n, t));
        text += buf;
      }
      text += "\n";
    }
    WriteText(dir / (p.stem().string() + "_ribbon.csv"), text);
    ++written;
  }
  out << "wrote " << written << " CSV files to " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

std::vector<std::string> ExpandConfig(const std::vector<std::string> &args) {
  std::vector<std::string> result;
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      result.push_back(args[i]);
    }
  }
  if (config.empty()) return result;
  std::ifstream in(config);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read config file " + config);
  auto given = [&](const std::string &flag) {
    return std::any_of(result.begin(), result.end(), [&](const std::string &a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
  };
  std::string line;
  while (std::getline(in, line)) {
    line = Trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kInvalidArgument, "config line without '=': " + line);
    const std::string flag = "--" + Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (given(flag)) continue;
    if (value == "false") continue;
    result.push_back(flag);
    if (value == "true") continue;
    std::istringstream words(value);
    std::string w;
    while (words >> w) result.push_back(w);
  }
  return result;
}

int RunCli(const std::vector<std::string> &raw_args, std::ostream &out, std::ostream &err) {
  CLI::App app{"mcsep: multichannel separation and diarization scoring", "mcsep"};
  app.require_subcommand(1);
  SimulateArgs simulate;
  SeparateArgs separate;
  EvaluateArgs evaluate;
  ObjectiveArgs objective;
  PlotArgs plot;
  AddSimulate(app, simulate);
  AddSeparate(app, separate);
  AddEvaluate(app, evaluate);
  AddObjective(app, objective);
  AddPlotdata(app, plot);

  std::vector<std::string> args;
  try {
    args = ExpandConfig(raw_args);
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  // CLI11 consumes the vector form back to front.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success &e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError &e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("simulate")) return RunSimulate(simulate, out);
    if (app.got_subcommand("separate")) return RunSeparate(separate, out);
    if (app.got_subcommand("evaluate")) return RunEvaluate(evaluate, out);
    if (app.got_subcommand("objective")) return RunObjective(objective, out);
    if (app.got_subcommand("plotdata")) return RunPlotdata(plot, out);
  } catch (const Error &e) {
    err << "error [" << ErrorCodeName(e.code()) << "]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mcsep
