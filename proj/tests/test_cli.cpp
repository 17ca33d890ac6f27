// tests/test_cli.cpp

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
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "doctest.h"
#include "mcsep/arrays.hpp"
#include "mcsep/cli.hpp"
#include "mcsep/diarize.hpp"
#include "mcsep/jdsep.hpp"
#include "mcsep/objectives.hpp"
#include "mcsep/simulate.hpp"
#include "mcsep/wav.hpp"
#include "test_util.hpp"

using namespace mcsep;
using namespace mcsep::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

Outcome Run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = RunCli(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string Str(const fs::path &p) { return p.string(); }

std::vector<double> ReadTrace(const fs::path &p) {
  std::ifstream in(p);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  return v;
}

nlohmann::json ReadJson(const fs::path &p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

// Two speakers, four mics, two seconds.
void Simulate(const fs::path &dir, std::uint64_t seed = 3) {
  const Outcome o = Run({"simulate", "--speakers", "2", "--duration", "2", "--mics", "4",
                         "--seed", std::to_string(seed), "--out", Str(dir)});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
}

}  // namespace

TEST_CASE("simulate writes a consistent scene") {
  TempDir dir("cli_sim");
  Simulate(dir.path());
  for (const char *f : {"mixture.wav", "source_0.wav", "source_1.wav", "noise.wav", "masks.csv",
                        "masks.rttm", "scene.json", "scene.bin"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  const WavData mix = ReadWav(dir / "mixture.wav");
  const WavData s0 = ReadWav(dir / "source_0.wav");
  const WavData s1 = ReadWav(dir / "source_1.wav");
  const WavData noise = ReadWav(dir / "noise.wav");
  REQUIRE(mix.channels.size() == 4);
  CHECK(mix.channels[0].size() == 32000);
  double err = 0.0, ref = 0.0;
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < mix.channels[m].size(); ++i) {
      const double d =
          mix.channels[m][i] - s0.channels[m][i] - s1.channels[m][i] - noise.channels[m][i];
      err += d * d;
      ref += mix.channels[m][i] * mix.channels[m][i];
    }
  // float32 storage bounds the agreement.
  CHECK(std::sqrt(err / ref) < 1e-6);

  const ArrayArchive scene = LoadArrays(dir / "scene.json");
  CHECK(scene.metadata["num_speakers"] == 2);
  CHECK(scene.Contains("steering"));
  CHECK(scene.Contains("mixture"));
  const ActivityMask csv = ReadMaskFile(dir / "masks.csv", 201, 100.0);
  const ActivityMask rttm = ReadMaskFile(dir / "masks.rttm", 201, 100.0);
  const ActivityMask expected = MakeActivity(ActivityPattern::kPartialOverlap, 2, 201);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < 201; ++t) {
      CHECK(csv.active(n, t) == expected.active(n, t));
      CHECK(rttm.active(n, t) == expected.active(n, t));
    }
}

TEST_CASE("usage errors and runtime errors") {
  TempDir dir("cli_err");
  Outcome o = Run({"simulate", "--speakers", "9", "--duration", "2", "--out", Str(dir.path())});
  CHECK(o.code == kExitUsage);
  CHECK(o.err.find("at most 5 speakers") != std::string::npos);
  CHECK(Run({"simulate", "--speakers", "2"}).code == kExitUsage);
  CHECK(Run({"frobnicate"}).code == kExitUsage);
  CHECK(Run({}).code == kExitUsage);
  CHECK(Run({"simulate", "--speakers", "2", "--duration", "0.2", "--out", Str(dir.path())})
            .code == kExitUsage);
  CHECK(Run({"simulate", "--speakers", "2", "--pattern", "chaos", "--out", Str(dir.path())})
            .code == kExitUsage);
  CHECK(Run({"simulate", "--speakers", "2", "--config", Str(dir / "absent.cfg"), "--out",
             Str(dir.path())})
            .code == kExitUsage);
  CHECK(Run({"--help"}).code == kExitOk);

  Simulate(dir / "scene");
  o = Run({"separate", "--input", Str(dir / "scene" / "mixture.wav"), "--method", "gss",
           "--out", Str(dir / "sep")});
  CHECK(o.code == kExitRuntime);
  CHECK(o.err.find("MissingMasks") != std::string::npos);
  o = Run({"separate", "--input", Str(dir / "scene" / "mixture.wav"), "--method", "ica",
           "--out", Str(dir / "sep")});
  CHECK(o.code == kExitUsage);
  // A WAV of a different length makes evaluate fail with a length mismatch.
  WavData shorter = ReadWav(dir / "scene" / "source_0.wav");
  for (auto &c : shorter.channels) c.resize(16000);
  WriteWav(dir / "short.wav", shorter);
  o = Run({"evaluate", "--estimates", Str(dir / "short.wav"), "--references",
           Str(dir / "scene" / "source_0.wav")});
  CHECK(o.code == kExitRuntime);
  CHECK(o.err.find("LengthMismatch") != std::string::npos);
}

TEST_CASE("every separation method runs with monotone traces and consistent outputs") {
  TempDir dir("cli_sep");
  Simulate(dir / "scene");
  const std::string mixture = Str(dir / "scene" / "mixture.wav");
  const std::string masks = Str(dir / "scene" / "masks.csv");
  struct Case {
    std::string method;
    std::size_t expected_sources;
    std::vector<std::string> extra;
    // The JD traces start with the objective at initialization.
    std::size_t trace_length;
  };
  const std::vector<Case> cases{
      {"fca-mask", 3, {"--masks", masks}, 16},
      {"gss", 3, {"--masks", Str(dir / "scene" / "masks.rttm")}, 15},
      {"fastmnmf2", 3, {"--sources", "3"}, 16},
      {"cacgmm", 2, {"--sources", "2"}, 15},
  };
  for (const Case &c : cases) {
    CAPTURE(c.method);
    const fs::path out = dir / c.method;
    std::vector<std::string> args{"separate", "--input", mixture, "--method", c.method,
                                  "--iters", "15", "--no-wpe", "--out", Str(out)};
    args.insert(args.end(), c.extra.begin(), c.extra.end());
    const Outcome o = Run(args);
    REQUIRE_MESSAGE(o.code == kExitOk, o.err);
    const std::vector<double> trace = ReadTrace(out / "nll_trace.txt");
    CHECK(trace.size() == c.trace_length);
    std::size_t bad = 0;
    CHECK_MESSAGE(NonIncreasing(trace, 1e-6, &bad), "iteration ", bad);
    // Estimates add back up to the mixture.
    const WavData mix = ReadWav(mixture);
    std::vector<std::vector<double>> sum(4, std::vector<double>(mix.channels[0].size()));
    std::size_t count = 0;
    while (fs::exists(out / ("est_" + std::to_string(count) + ".wav"))) {
      const WavData e = ReadWav(out / ("est_" + std::to_string(count) + ".wav"));
      for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t i = 0; i < sum[m].size(); ++i) sum[m][i] += e.channels[m][i];
      ++count;
    }
    CHECK(count == c.expected_sources);
    double err = 0.0, ref = 0.0;
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t i = 0; i < sum[m].size(); ++i) {
        err += (sum[m][i] - mix.channels[m][i]) * (sum[m][i] - mix.channels[m][i]);
        ref += mix.channels[m][i] * mix.channels[m][i];
      }
    CHECK(std::sqrt(err / ref) < 1e-5);
    const RealMatrix act = ReadMatrixCsv(out / "activity.csv");
    CHECK(act.rows == c.expected_sources);
    CHECK(act.cols == 201);
    const ArrayArchive params = LoadArrays(out / "params.json");
    CHECK(params.metadata["method"] == c.method);
    CHECK(params.Contains("spectrogram"));
  }
}

TEST_CASE("evaluate scores references against themselves perfectly") {
  TempDir dir("cli_eval");
  Simulate(dir / "scene");
  const std::string s0 = Str(dir / "scene" / "source_0.wav");
  const std::string s1 = Str(dir / "scene" / "source_1.wav");
  Outcome o = Run({"evaluate", "--estimates", s1, s0, "--references", s0, s1, "--out",
                   Str(dir / "report.json")});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  const nlohmann::json r = ReadJson(dir / "report.json");
  CHECK(r["permutation"] == nlohmann::json::array({1, 0}));
  CHECK(r["si_sdr"]["mean"].get<double>() > 100.0);
  CHECK(r["der"].get<double>() == 0.0);
  CHECK(r["sca"].get<double>() == 1.0);
  // Against the frame masks only the energy leaking across turn edges counts.
  o = Run({"evaluate", "--estimates", s1, s0, "--references", s0, s1, "--ref-masks",
           Str(dir / "scene" / "masks.csv")});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  CHECK(nlohmann::json::parse(o.out)["der"].get<double>() < 0.03);
  // Hypothesis rows follow the estimates, so with estimates in reference
  // order a hypothesis file equal to the masks is perfect.
  o = Run({"evaluate", "--estimates", s0, s1, "--references", s0, s1, "--ref-masks",
           Str(dir / "scene" / "masks.csv"), "--hyp-activity", Str(dir / "scene" / "masks.csv")});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  CHECK(nlohmann::json::parse(o.out)["der"].get<double>() == 0.0);

  // The mixture as the only estimate scores like the library on decoded signals.
  o = Run({"evaluate", "--estimates", Str(dir / "scene" / "mixture.wav"), "--references", s0});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  const nlohmann::json m = nlohmann::json::parse(o.out);
  const double expected =
      SiSdr(ReadWav(dir / "scene" / "mixture.wav").channels[0], ReadWav(s0).channels[0]);
  CHECK(m["si_sdr"]["per_source"][0].get<double>() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("objective matches the library on the same inputs") {
  TempDir dir("cli_obj");
  Simulate(dir / "scene");
  REQUIRE(Run({"separate", "--input", Str(dir / "scene" / "mixture.wav"), "--method",
               "fca-mask", "--masks", Str(dir / "scene" / "masks.csv"), "--iters", "3",
               "--no-wpe", "--out", Str(dir / "sep")})
              .code == kExitOk);
  const ArrayArchive params = LoadArrays(dir / "sep" / "params.json");
  const JdParams jd = GetJdParams(params);
  const Spectrogram spec = GetSpectrogram(params, "spectrogram");
  const std::size_t N = jd.num_sources, T = spec.num_frames(), F = spec.num_freqs();
  Rng rng(11);
  const std::vector<std::size_t> dims{4, 4, 2};
  PosteriorParams post(N, T, dims);
  ExpAffineDecoder dec;
  dec.num_freqs = F;
  dec.latent_dims = dims;
  dec.bias.resize(N * F);
  for (auto &b : dec.bias) b = rng.Uniform(-3.0, -1.0);
  ArrayArchive pa;
  for (std::size_t n = 0; n < N; ++n) {
    for (auto &v : post.mean[n]) v = rng.Uniform(-1.0, 1.0);
    for (auto &v : post.variance[n]) v = rng.Uniform(0.1, 1.0);
    dec.weight.emplace_back(F * dims[n]);
    for (auto &w : dec.weight[n]) w = rng.Uniform(-0.2, 0.2);
    pa.PutReal("mean_" + std::to_string(n), post.mean[n], {T, dims[n]});
    pa.PutReal("variance_" + std::to_string(n), post.variance[n], {T, dims[n]});
    pa.PutReal("decoder_weight_" + std::to_string(n), dec.weight[n], {F, dims[n]});
  }
  for (auto &a : post.activity.data) a = rng.Uniform();
  pa.PutReal("activity", post.activity.data, {N, T});
  pa.PutReal("decoder_bias", dec.bias, {N, F});
  SaveArrays(pa, dir / "posterior.json");

  const Outcome o = Run({"objective", "--spectrogram", Str(dir / "sep" / "params.json"),
                         "--params", Str(dir / "sep" / "params.json"), "--posterior",
                         Str(dir / "posterior.json"), "--gamma", "0.5", "--seed", "4"});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  const nlohmann::json r = nlohmann::json::parse(o.out);
  const ObjectiveReport lib = EvaluateObjective(spec, jd, post, dec.AsDecoder(), 0.5, 4);
  CHECK(r["l_sep"].get<double>() == doctest::Approx(lib.l_sep).epsilon(1e-12));
  CHECK(r["l_diar"].get<double>() == doctest::Approx(lib.l_diar).epsilon(1e-12));
  CHECK(r["l_total"].get<double>() ==
        doctest::Approx(lib.l_sep / (T * F) + 0.5 * lib.l_diar / (T * N)).epsilon(1e-12));
  CHECK(r["gamma"].get<double>() == 0.5);

  const Outcome missing = Run({"objective", "--spectrogram", Str(dir / "scene" / "scene.json"),
                               "--params", Str(dir / "sep" / "params.json"), "--posterior",
                               Str(dir / "scene" / "scene.json")});
  CHECK(missing.code == kExitRuntime);
  CHECK(missing.err.find("ManifestMismatch") != std::string::npos);
}

TEST_CASE("plotdata exports log magnitudes and activity ribbons") {
  TempDir dir("cli_plot");
  Simulate(dir / "scene");
  RealMatrix act(2, 5);
  act(1, 3) = 0.75;
  WriteMatrixCsv(dir / "act.csv", act);
  const Outcome o = Run({"plotdata", "--input", Str(dir / "scene" / "mixture.wav"),
                         Str(dir / "scene" / "scene.json"), "--activity", Str(dir / "act.csv"),
                         "--out", Str(dir / "plots")});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  const RealMatrix db = ReadMatrixCsv(dir / "plots" / "mixture.csv");
  const Spectrogram spec = Stft(ReadWav(dir / "scene" / "mixture.wav").channels, StftConfig{});
  REQUIRE(db.rows == spec.num_freqs());
  REQUIRE(db.cols == spec.num_frames());
  for (std::size_t f = 0; f < db.rows; f += 17)
    for (std::size_t t = 0; t < db.cols; t += 13) {
      const double expected = std::max(-240.0, 20.0 * std::log10(std::abs(spec(f, t, 0)) + 1e-12));
      CHECK(db(f, t) == doctest::Approx(expected).epsilon(1e-8));
    }
  CHECK(fs::exists(dir / "plots" / "scene_mixture.csv"));

  WavData silence;
  silence.channels.assign(2, std::vector<double>(8000, 0.0));
  WriteWav(dir / "zero.wav", silence);
  REQUIRE(Run({"plotdata", "--input", Str(dir / "zero.wav"), "--db-floor", "-120", "--out",
               Str(dir / "plots")})
              .code == kExitOk);
  const RealMatrix floor = ReadMatrixCsv(dir / "plots" / "zero.csv");
  CHECK(floor.rows == 257);
  CHECK(std::all_of(floor.data.begin(), floor.data.end(), [](double v) { return v == -120.0; }));
  std::ifstream ribbon(dir / "plots" / "act_ribbon.csv");
  std::string header, line;
  std::getline(ribbon, header);
  CHECK(header == "time,src0,src1");
  int lines = 0;
  while (std::getline(ribbon, line)) ++lines;
  CHECK(lines == 5);
}

TEST_CASE("config files fill in flags the command line leaves out") {
  TempDir dir("cli_cfg");
  {
    std::ofstream cfg(dir / "sim.cfg");
    cfg << "# scene settings\n"
        << "speakers = 3\n"
        << "duration = 1.5   # seconds\n"
        << "mics = 2\n"
        << "seed = 99\n";
  }
  CHECK(ExpandConfig({"simulate", "--config", Str(dir / "sim.cfg"), "--seed", "5"}) ==
        std::vector<std::string>{"simulate", "--seed", "5", "--speakers", "3", "--duration",
                                 "1.5", "--mics", "2"});
  const Outcome o = Run({"simulate", "--config", Str(dir / "sim.cfg"), "--seed", "5", "--out",
                         Str(dir / "scene")});
  REQUIRE_MESSAGE(o.code == kExitOk, o.err);
  const ArrayArchive scene = LoadArrays(dir / "scene" / "scene.json");
  CHECK(scene.metadata["num_speakers"] == 3);
  CHECK(scene.metadata["seed"] == 5);
  CHECK(scene.metadata["num_samples"] == 24000);
  {
    std::ofstream cfg(dir / "flags.cfg");
    cfg << "no-wpe = true\nmasks = false\n";
  }
  CHECK(ExpandConfig({"separate", "--config=" + Str(dir / "flags.cfg")}) ==
        std::vector<std::string>{"separate", "--no-wpe"});
}

TEST_CASE("re-running with the same seed reproduces every artifact byte for byte") {
  TempDir dir("cli_det");
  for (const char *run : {"a", "b"}) {
    const fs::path root = dir / run;
    Simulate(root / "scene", 21);
    REQUIRE(Run({"separate", "--input", Str(root / "scene" / "mixture.wav"), "--method",
                 "fastmnmf2", "--sources", "3", "--iters", "5", "--seed", "8", "--out",
                 Str(root / "sep")})
                .code == kExitOk);
  }
  std::size_t compared = 0;
  for (const auto &entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir / "a");
    CAPTURE(rel.string());
    CHECK(ReadFileBytes(entry.path()) == ReadFileBytes(dir / "b" / rel));
    ++compared;
  }
  CHECK(compared >= 15);
}

TEST_CASE("the installed binary reports exit codes") {
  const std::string bin = MCSEP_CLI_PATH;
  REQUIRE(fs::exists(bin));
  auto status = [&](const std::string &args) {
    const int rc = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  CHECK(status("--help") == 0);
  CHECK(status("simulate --speakers 9 --out /tmp/never") == 2);
  CHECK(status("separate --input /dev/null --method gss --out /tmp/never") == 1);
}
