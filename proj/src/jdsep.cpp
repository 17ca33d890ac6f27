// src/jdsep.cpp

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

#include "mcsep/jdsep.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mcsep {

namespace {

// Per-call cache of the diagonalized observation and of the model power.
struct Workspace {
  std::vector<double> power;  // |(Q_f x_ft)_m|^2, (f, t, m)
  std::vector<double> model;  // floored y_ftm, (f, t, m)
  std::vector<double> inv;    // 1 / model
  std::size_t floored = 0;
};

std::size_t Idx(const JdParams &p, std::size_t f, std::size_t t, std::size_t m) {
  return (f * p.num_frames + t) * p.num_channels + m;
}

// The (t, m) block of one frequency is an M x T column-major matrix.
Eigen::Map<const Eigen::MatrixXcd> Observations(const Spectrogram &spec, std::size_t f) {
  const auto M = static_cast<Eigen::Index>(spec.num_channels());
  const auto T = static_cast<Eigen::Index>(spec.num_frames());
  return {spec.data().data() + spec.index(f, 0, 0), M, T};
}

// Y = Q X for a small Q; plain loops beat the blocked product at M <= 8.
void Diagonalize(const Eigen::MatrixXcd &Q, const Spectrogram &spec, std::size_t f,
                 Eigen::MatrixXcd &Y) {
  const Eigen::Index M = Q.rows();
  const auto T = static_cast<Eigen::Index>(spec.num_frames());
  Y.resize(M, T);
  const cdouble *x = spec.data().data() + spec.index(f, 0, 0);
  for (Eigen::Index t = 0; t < T; ++t) {
    const cdouble *xt = x + t * M;
    cdouble *yt = Y.data() + t * M;
    for (Eigen::Index m = 0; m < M; ++m) {
      double re = 0.0, im = 0.0;
      for (Eigen::Index j = 0; j < M; ++j) {
        const cdouble q = Q(m, j);
        re += q.real() * xt[j].real() - q.imag() * xt[j].imag();
        im += q.real() * xt[j].imag() + q.imag() * xt[j].real();
      }
      yt[m] = cdouble(re, im);
    }
  }
}

void ComputePower(const Spectrogram &spec, const JdParams &p, Workspace &ws) {
  ws.power.resize(p.num_freqs * p.num_frames * p.num_channels);
  Eigen::MatrixXcd Y;
  for (std::size_t f = 0; f < p.num_freqs; ++f) {
    Diagonalize(p.diagonalizers[f], spec, f, Y);
    for (std::size_t t = 0; t < p.num_frames; ++t)
      for (std::size_t m = 0; m < p.num_channels; ++m)
        ws.power[Idx(p, f, t, m)] = std::norm(Y(m, t));
  }
}

void ComputeModel(const JdParams &p, Workspace &ws) {
  const std::size_t N = p.num_sources, F = p.num_freqs, T = p.num_frames,
                    M = p.num_channels;
  ws.model.resize(F * T * M);
  ws.inv.resize(F * T * M);
  ws.floored = 0;
  const std::uint8_t *mask = p.masks.data().data();
  std::vector<double> lambda(N);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < N; ++n)
        lambda[n] = mask[n * T + t] ? p.psd[(n * F + f) * T + t] : 0.0;
      const std::size_t base = (f * T + t) * M;
      for (std::size_t m = 0; m < M; ++m) {
        double y = 0.0;
        for (std::size_t n = 0; n < N; ++n) y += lambda[n] * p.gains[(n * F + f) * M + m];
        if (!(y >= p.psd_floor)) {
          y = p.psd_floor;
          ++ws.floored;
        }
        ws.model[base + m] = y;
        ws.inv[base + m] = 1.0 / y;
      }
    }
}

// log |det Q|^2 via LU; throws when Q is singular.
double LogDetGram(const Eigen::MatrixXcd &Q, std::size_t f) {
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Q);
  const auto &U = lu.matrixLU();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    const double a = std::abs(U(i, i));
    if (!(a > 0.0) || !std::isfinite(a))
      throw Error(ErrorCode::kNonInvertibleDiagonalizer,
                  "Q at frequency " + std::to_string(f) + " is singular");
    sum += 2.0 * std::log(a);
  }
  return sum;
}

double Nll(const JdParams &p, const Workspace &ws) {
  double total = 0.0;
  for (std::size_t i = 0; i < ws.model.size(); ++i)
    total += std::log(ws.model[i]) + ws.power[i] * ws.inv[i];
  double log_det = 0.0;
  for (std::size_t f = 0; f < p.num_freqs; ++f) log_det += LogDetGram(p.diagonalizers[f], f);
  const double bins = static_cast<double>(p.num_channels * p.num_frames * p.num_freqs);
  return total - static_cast<double>(p.num_frames) * log_det + bins * std::log(std::numbers::pi);
}

// Rank-1 steering of row k of Q (and of Y = Q X) with weights 1 / y_ftm.
// Columns of Y are contiguous, so the sums run frame by frame.
void IssRow(Eigen::MatrixXcd &Q, Eigen::MatrixXcd &Y, const double *inv_model,
            std::size_t k) {
  const Eigen::Index M = Q.rows(), T = Y.cols();
  const Eigen::Index row = static_cast<Eigen::Index>(k);
  std::vector<double> num_re(M, 0.0), num_im(M, 0.0), den(M, 0.0);
  for (Eigen::Index t = 0; t < T; ++t) {
    const cdouble *y = Y.data() + t * M;
    const double *w = inv_model + t * M;
    const double kr = y[row].real(), ki = y[row].imag();
    const double pk = kr * kr + ki * ki;
    for (Eigen::Index m = 0; m < M; ++m) {
      // w * y_m * conj(y_k)
      num_re[m] += w[m] * (y[m].real() * kr + y[m].imag() * ki);
      num_im[m] += w[m] * (y[m].imag() * kr - y[m].real() * ki);
      den[m] += w[m] * pk;
    }
  }
  const double d_k = den[row];
  if (!(d_k > 0.0) || !std::isfinite(d_k)) return;  // would zero the row

  Eigen::VectorXcd v(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    if (m == row)
      v(m) = 1.0 - std::sqrt(static_cast<double>(T) / d_k);
    else
      v(m) = den[m] > 0.0 ? cdouble(num_re[m], num_im[m]) / den[m] : cdouble(0.0);
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    cdouble *y = Y.data() + t * M;
    const double kr = y[row].real(), ki = y[row].imag();
    for (Eigen::Index m = 0; m < M; ++m) {
      const double vr = v(m).real(), vi = v(m).imag();
      y[m] = cdouble(y[m].real() - (vr * kr - vi * ki), y[m].imag() - (vr * ki + vi * kr));
    }
  }
  const Eigen::RowVectorXcd q_k = Q.row(row);
  Q.noalias() -= v * q_k;
}

// Also leaves |Y|^2 of the updated Q in ws.power. The model does not
// depend on Q, so ws.model and ws.inv stay current.
void IssRowsInPlace(const Spectrogram &spec, JdParams &p, Workspace &ws,
                    std::size_t first_row, std::size_t last_row) {
  ws.power.resize(p.num_freqs * p.num_frames * p.num_channels);
  Eigen::MatrixXcd Y;
  for (std::size_t f = 0; f < p.num_freqs; ++f) {
    Diagonalize(p.diagonalizers[f], spec, f, Y);
    for (std::size_t k = first_row; k < last_row; ++k) IssRow(p.diagonalizers[f], Y, ws.inv.data() + Idx(p, f, 0, 0), k);
    Eigen::Map<Eigen::MatrixXd>(ws.power.data() + Idx(p, f, 0, 0),
                                static_cast<Eigen::Index>(p.num_channels),
                                static_cast<Eigen::Index>(p.num_frames)) = Y.cwiseAbs2();
  }
}

// Per (n, f, t): numerator and denominator sums over m of the PSD update,
// masked by activity.
void PsdStatistics(const JdParams &p, const Workspace &ws, std::vector<double> &num,
                   std::vector<double> &den) {
  const std::size_t F = p.num_freqs, T = p.num_frames, M = p.num_channels;
  const std::size_t size = p.num_sources * F * T;
  num.assign(size, 0.0);
  den.assign(size, 0.0);
  const std::uint8_t *mask = p.masks.data().data();
  for (std::size_t n = 0; n < p.num_sources; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      const double *g = p.gains.data() + (n * F + f) * M;
      const double *inv = ws.inv.data() + f * T * M;
      const double *power = ws.power.data() + f * T * M;
      double *a = num.data() + (n * F + f) * T;
      double *b = den.data() + (n * F + f) * T;
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask[n * T + t]) continue;
        double sa = 0.0, sb = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
          const double i = inv[t * M + m];
          sa += g[m] * power[t * M + m] * i * i;
          sb += g[m] * i;
        }
        a[t] = sa;
        b[t] = sb;
      }
    }
}

double MuFactor(double num, double den) {
  if (!(den > 0.0) || !std::isfinite(den) || !std::isfinite(num)) return 1.0;
  return std::sqrt(num / den);
}

void UpdatePsdInPlace(JdParams &p, const Workspace &ws) {
  std::vector<double> num, den;
  PsdStatistics(p, ws, num, den);
  for (std::size_t j = 0; j < p.psd.size(); ++j) p.psd[j] *= MuFactor(num[j], den[j]);
}

void UpdateGainInPlace(JdParams &p, const Workspace &ws, bool tied) {
  const std::size_t N = p.num_sources, F = p.num_freqs, T = p.num_frames,
                    M = p.num_channels;
  std::vector<double> num(N * F * M, 0.0), den(N * F * M, 0.0);
  const std::uint8_t *mask = p.masks.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      const double *lambda = p.psd.data() + (n * F + f) * T;
      const double *inv = ws.inv.data() + f * T * M;
      const double *power = ws.power.data() + f * T * M;
      double *a = num.data() + (n * F + f) * M;
      double *b = den.data() + (n * F + f) * M;
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask[n * T + t]) continue;
        for (std::size_t m = 0; m < M; ++m) {
          const double i = inv[t * M + m];
          a[m] += lambda[t] * power[t * M + m] * i * i;
          b[m] += lambda[t] * i;
        }
      }
    }
  if (tied) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t m = 0; m < M; ++m) {
        double a = 0.0, b = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
          a += num[(n * F + f) * M + m];
          b += den[(n * F + f) * M + m];
        }
        const double factor = MuFactor(a, b);
        for (std::size_t f = 0; f < F; ++f) p.gain(n, f, m) *= factor;
      }
    return;
  }
  for (std::size_t j = 0; j < p.gains.size(); ++j) p.gains[j] *= MuFactor(num[j], den[j]);
}

void UpdateNmfInPlace(const Spectrogram &spec, JdParams &p, NmfPsd &nmf, Workspace &ws) {
  const std::size_t N = p.num_sources, F = p.num_freqs, T = p.num_frames,
                    K = nmf.num_basis;
  std::vector<double> num, den;

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowMap = Eigen::Map<RowMatrix>;
  const auto eF = static_cast<Eigen::Index>(F), eT = static_cast<Eigen::Index>(T),
             eK = static_cast<Eigen::Index>(K);
  RowMatrix a, b;

  PsdStatistics(p, ws, num, den);
  for (std::size_t n = 0; n < N; ++n) {
    RowMap W(nmf.basis.data() + n * F * K, eF, eK);
    const RowMap H(nmf.activation.data() + n * K * T, eK, eT);
    a.noalias() = RowMap(num.data() + n * F * T, eF, eT) * H.transpose();
    b.noalias() = RowMap(den.data() + n * F * T, eF, eT) * H.transpose();
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] *= MuFactor(a.data()[i], b.data()[i]);
  }
  nmf.ComposeInto(p);
  ComputeModel(p, ws);

  PsdStatistics(p, ws, num, den);
  for (std::size_t n = 0; n < N; ++n) {
    const RowMap W(nmf.basis.data() + n * F * K, eF, eK);
    RowMap H(nmf.activation.data() + n * K * T, eK, eT);
    a.noalias() = W.transpose() * RowMap(num.data() + n * F * T, eF, eT);
    b.noalias() = W.transpose() * RowMap(den.data() + n * F * T, eF, eT);
    for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] *= MuFactor(a.data()[i], b.data()[i]);
  }
  nmf.ComposeInto(p);
  (void)spec;
}

// Returns the per-frequency factor by which |Q_f x|^2 shrank.
std::vector<double> NormalizeInPlace(JdParams &p, NmfPsd *nmf) {
  const std::size_t N = p.num_sources, F = p.num_freqs, T = p.num_frames,
                    M = p.num_channels;
  const double dM = static_cast<double>(M);
  std::vector<double> scale(N * F, 1.0);  // multiplies psd_nf.
  std::vector<double> shrink(F, 1.0);
  for (std::size_t f = 0; f < F; ++f) {
    const double mu = p.diagonalizers[f].squaredNorm() / dM;
    if (!(mu > 0.0) || !std::isfinite(mu)) continue;
    shrink[f] = mu;
    p.diagonalizers[f] /= std::sqrt(mu);
    for (std::size_t n = 0; n < N; ++n) scale[n * F + f] /= mu;
  }
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      double phi = 0.0;
      for (std::size_t m = 0; m < M; ++m) phi += p.gain(n, f, m);
      phi /= dM;
      if (!(phi > 0.0) || !std::isfinite(phi)) continue;
      for (std::size_t m = 0; m < M; ++m) p.gain(n, f, m) /= phi;
      scale[n * F + f] *= phi;
    }
  if (nmf) {
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t k = 0; k < nmf->num_basis; ++k) nmf->w(n, f, k) *= scale[n * F + f];
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t k = 0; k < nmf->num_basis; ++k) {
        double psi = 0.0;
        for (std::size_t f = 0; f < F; ++f) psi += nmf->w(n, f, k);
        if (!(psi > 0.0) || !std::isfinite(psi)) continue;
        for (std::size_t f = 0; f < F; ++f) nmf->w(n, f, k) /= psi;
        for (std::size_t t = 0; t < T; ++t) nmf->h(n, k, t) *= psi;
      }
    nmf->ComposeInto(p);
    return shrink;
  }
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t t = 0; t < T; ++t) p.psd_at(n, f, t) *= scale[n * F + f];
  return shrink;
}

// NLL after normalization, reusing the pre-normalization power.
double EvaluateNormalized(JdParams &p, NmfPsd *nmf, Workspace &ws) {
  const std::vector<double> shrink = NormalizeInPlace(p, nmf);
  const std::size_t block = p.num_frames * p.num_channels;
  for (std::size_t f = 0; f < p.num_freqs; ++f) {
    if (shrink[f] == 1.0) continue;
    const double s = 1.0 / shrink[f];
    for (std::size_t i = f * block; i < (f + 1) * block; ++i) ws.power[i] *= s;
  }
  ComputeModel(p, ws);
  return Nll(p, ws);
}

Eigen::MatrixXcd WhiteningMatrix(const Spectrogram &spec, std::size_t f) {
  const Eigen::MatrixXcd X = Observations(spec, f);
  const std::size_t M = spec.num_channels();
  Eigen::MatrixXcd R = X * X.adjoint() / static_cast<double>(spec.num_frames());
  const double reg = 1e-10 * std::max(R.trace().real() / static_cast<double>(M), 1e-30);
  R.diagonal().array() += reg;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(R);
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().adjoint();
}

// Records the NLL of the current parameters.
double Evaluate(const Spectrogram &spec, const JdParams &p, Workspace &ws) {
  ComputePower(spec, p, ws);
  ComputeModel(p, ws);
  return Nll(p, ws);
}

}  // namespace

JdParams::JdParams(std::size_t N, std::size_t F, std::size_t T, std::size_t M)
    : num_sources(N),
      num_freqs(F),
      num_frames(T),
      num_channels(M),
      diagonalizers(F, Eigen::MatrixXcd::Identity(M, M)),
      gains(N * F * M, 1.0),
      psd(N * F * T, 1.0),
      masks(N, T, 1) {}

void JdParams::Validate() const {
  const std::size_t N = num_sources, F = num_freqs, T = num_frames, M = num_channels;
  if (N == 0 || F == 0 || T == 0 || M == 0)
    throw Error(ErrorCode::kDimensionMismatch, "JdParams dimensions must be positive");
  if (diagonalizers.size() != F || gains.size() != N * F * M || psd.size() != N * F * T ||
      masks.num_sources() != N || masks.num_frames() != T)
    throw Error(ErrorCode::kDimensionMismatch, "JdParams arrays disagree with dimensions");
  for (std::size_t f = 0; f < F; ++f) {
    const auto &Q = diagonalizers[f];
    if (static_cast<std::size_t>(Q.rows()) != M || static_cast<std::size_t>(Q.cols()) != M)
      throw Error(ErrorCode::kDimensionMismatch, "diagonalizer is not M x M");
    LogDetGram(Q, f);
  }
  for (double g : gains)
    if (!(g >= 0.0) || !std::isfinite(g))
      throw Error(ErrorCode::kInvalidArgument, "gains must be finite and nonnegative");
  for (double l : psd)
    if (!(l >= 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::kInvalidArgument, "PSDs must be finite and nonnegative");
  if (!(psd_floor > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "psd_floor must be positive");
}

void JdParams::ValidateAgainst(const Spectrogram &spec) const {
  if (spec.num_freqs() != num_freqs || spec.num_frames() != num_frames ||
      spec.num_channels() != num_channels)
    throw Error(ErrorCode::kDimensionMismatch, "parameters do not match the spectrogram");
  Validate();
}

void NmfPsd::ComposeInto(JdParams &params) const {
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto eF = static_cast<Eigen::Index>(num_freqs), eT = static_cast<Eigen::Index>(num_frames),
             eK = static_cast<Eigen::Index>(num_basis);
  for (std::size_t n = 0; n < num_sources; ++n) {
    Eigen::Map<RowMatrix>(params.psd.data() + n * num_freqs * num_frames, eF, eT).noalias() =
        Eigen::Map<const RowMatrix>(basis.data() + n * num_freqs * num_basis, eF, eK) *
        Eigen::Map<const RowMatrix>(activation.data() + n * num_basis * num_frames, eK, eT);
  }
}

NllResult NegLogLikelihoodDetail(const Spectrogram &spec, const JdParams &params) {
  params.ValidateAgainst(spec);
  Workspace ws;
  NllResult r;
  r.value = Evaluate(spec, params, ws);
  r.floored = ws.floored;
  return r;
}

double NegLogLikelihood(const Spectrogram &spec, const JdParams &params) {
  return NegLogLikelihoodDetail(spec, params).value;
}

JdParams IssUpdate(const Spectrogram &spec, JdParams params, std::size_t row) {
  params.ValidateAgainst(spec);
  if (row >= params.num_channels)
    throw Error(ErrorCode::kInvalidArgument, "ISS row out of range");
  Workspace ws;
  ComputeModel(params, ws);
  IssRowsInPlace(spec, params, ws, row, row + 1);
  return params;
}

JdParams UpdatePsd(const Spectrogram &spec, JdParams params) {
  params.ValidateAgainst(spec);
  Workspace ws;
  ComputePower(spec, params, ws);
  ComputeModel(params, ws);
  UpdatePsdInPlace(params, ws);
  return params;
}

JdParams UpdateGain(const Spectrogram &spec, JdParams params) {
  params.ValidateAgainst(spec);
  Workspace ws;
  ComputePower(spec, params, ws);
  ComputeModel(params, ws);
  UpdateGainInPlace(params, ws, /*tied=*/false);
  return params;
}

JdParams Normalize(JdParams params) {
  params.Validate();
  NormalizeInPlace(params, nullptr);
  return params;
}

JdParams InitMaskedFca(const Spectrogram &spec, const ActivityMask &masks,
                       const JdFitOptions &options) {
  ValidateSpectrogram(spec);
  const std::size_t N = masks.num_sources(), F = spec.num_freqs(),
                    T = spec.num_frames(), M = spec.num_channels();
  if (N == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one source");
  if (masks.num_frames() != T)
    throw Error(ErrorCode::kDimensionMismatch,
                "masks have " + std::to_string(masks.num_frames()) + " frames, spectrogram " +
                    std::to_string(T));
  for (std::size_t t = 0; t < T; ++t)
    if (!masks.active(N - 1, t))
      throw Error(ErrorCode::kInvalidArgument,
                  "the last source is the noise source and must be active at every frame");

  JdParams p(N, F, T, M);
  p.masks = masks;
  p.psd_floor = options.psd_floor;
  if (options.whitening_init)
    for (std::size_t f = 0; f < F; ++f) p.diagonalizers[f] = WhiteningMatrix(spec, f);

  Workspace ws;
  ComputePower(spec, p, ws);
  Rng rng(options.seed);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      double active_power = 0.0, all_power = 0.0;
      std::size_t active_frames = 0;
      for (std::size_t t = 0; t < T; ++t) {
        double frame = 0.0;
        for (std::size_t m = 0; m < M; ++m) frame += ws.power[Idx(p, f, t, m)];
        frame /= static_cast<double>(M);
        all_power += frame;
        if (masks.active(n, t)) {
          active_power += frame;
          ++active_frames;
        }
      }
      const double base = active_frames ? active_power / static_cast<double>(active_frames)
                                        : all_power / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t)
        p.psd_at(n, f, t) = std::max(base, options.psd_floor) * (1.0 + 0.1 * rng.Uniform(-1.0, 1.0));
    }
  return p;
}

JdFit FitMaskedFca(const Spectrogram &spec, const ActivityMask &masks,
                   const JdFitOptions &options) {
  JdFit fit;
  fit.params = InitMaskedFca(spec, masks, options);
  JdParams &p = fit.params;
  Workspace ws;
  fit.nll_trace.push_back(Evaluate(spec, p, ws));
  for (std::size_t it = 0; it < options.iterations; ++it) {
    // ws.model is current for p here.
    IssRowsInPlace(spec, p, ws, 0, p.num_channels);
    UpdatePsdInPlace(p, ws);
    ComputeModel(p, ws);
    UpdateGainInPlace(p, ws, /*tied=*/false);
    fit.nll_trace.push_back(EvaluateNormalized(p, nullptr, ws));
  }
  return fit;
}

JdFit FitFastMnmf2(const Spectrogram &spec, std::size_t num_sources,
                   std::size_t num_basis, const JdFitOptions &options) {
  ValidateSpectrogram(spec);
  const std::size_t N = num_sources, F = spec.num_freqs(), T = spec.num_frames(),
                    M = spec.num_channels(), K = num_basis;
  if (N < 1 || K < 1)
    throw Error(ErrorCode::kInvalidArgument, "FastMNMF2 needs N >= 1 and K >= 1");

  JdFit fit;
  JdParams &p = fit.params;
  p = JdParams(N, F, T, M);
  p.psd_floor = options.psd_floor;
  if (options.whitening_init)
    for (std::size_t f = 0; f < F; ++f) p.diagonalizers[f] = WhiteningMatrix(spec, f);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t m = 0; m < M; ++m) p.gain(n, f, m) = (m == n % M) ? 1.0 : 1e-2;

  Workspace ws;
  ComputePower(spec, p, ws);
  double mean_power = 0.0;
  for (double v : ws.power) mean_power += v;
  mean_power = std::max(mean_power / static_cast<double>(ws.power.size()), options.psd_floor);

  NmfPsd nmf;
  nmf.num_sources = N;
  nmf.num_freqs = F;
  nmf.num_basis = K;
  nmf.num_frames = T;
  nmf.basis.resize(N * F * K);
  nmf.activation.resize(N * K * T);
  Rng rng(options.seed);
  for (double &w : nmf.basis) w = rng.Uniform(0.1, 1.0);
  // E[W H] ~ K * 0.55^2; scale H so that each source starts near mean/N.
  const double h_scale = mean_power / (static_cast<double>(N * K) * 0.3025);
  for (double &h : nmf.activation) h = h_scale * rng.Uniform(0.1, 1.0);
  nmf.ComposeInto(p);
  NormalizeInPlace(p, &nmf);

  fit.nll_trace.push_back(Evaluate(spec, p, ws));
  for (std::size_t it = 0; it < options.iterations; ++it) {
    IssRowsInPlace(spec, p, ws, 0, M);
    UpdateNmfInPlace(spec, p, nmf, ws);
    ComputeModel(p, ws);
    UpdateGainInPlace(p, ws, options.tie_gains);
    fit.nll_trace.push_back(EvaluateNormalized(p, &nmf, ws));
  }
  fit.nmf = std::move(nmf);
  return fit;
}

std::vector<Spectrogram> WienerSeparate(const Spectrogram &spec, const JdParams &params) {
  params.ValidateAgainst(spec);
  const std::size_t N = params.num_sources, F = params.num_freqs, T = params.num_frames,
                    M = params.num_channels;
  std::vector<Spectrogram> out(
      N, Spectrogram(F, T, M, spec.sample_rate(), spec.hop()));
  std::vector<double> share(N * M);
  std::vector<Eigen::MatrixXcd> S(N, Eigen::MatrixXcd(M, T));
  for (std::size_t f = 0; f < F; ++f) {
    const Eigen::MatrixXcd &Q = params.diagonalizers[f];
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(Q);
    const Eigen::MatrixXcd Qinv = lu.inverse();
    const Eigen::MatrixXcd Y = Q * Observations(spec, f);
    for (std::size_t t = 0; t < T; ++t) {
      std::size_t active = 0;
      for (std::size_t n = 0; n < N; ++n) active += params.masks.active(n, t);
      for (std::size_t m = 0; m < M; ++m) {
        double total = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const double v = params.masks.active(n, t)
                               ? params.psd_at(n, f, t) * params.gain(n, f, m)
                               : 0.0;
          share[n * M + m] = v;
          total += v;
        }
        for (std::size_t n = 0; n < N; ++n) {
          if (total > 0.0)
            share[n * M + m] /= total;
          else
            share[n * M + m] = params.masks.active(n, t) ? 1.0 / static_cast<double>(active) : 0.0;
        }
      }
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m) S[n](m, t) = share[n * M + m] * Y(m, t);
    }
    for (std::size_t n = 0; n < N; ++n) {
      Eigen::Map<Eigen::MatrixXcd> image(out[n].data().data() + out[n].index(f, 0, 0),
                                         static_cast<Eigen::Index>(M),
                                         static_cast<Eigen::Index>(T));
      image.noalias() = Qinv * S[n];
    }
  }
  return out;
}

void PutJdParams(ArrayArchive &archive, const JdParams &params,
                 const std::optional<NmfPsd> &nmf) {
  const std::size_t N = params.num_sources, F = params.num_freqs, T = params.num_frames,
                    M = params.num_channels;
  std::vector<cdouble> q(F * M * M);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t r = 0; r < M; ++r)
      for (std::size_t c = 0; c < M; ++c) q[(f * M + r) * M + c] = params.diagonalizers[f](r, c);
  archive.PutComplex("diagonalizers", q, {F, M, M});
  archive.PutReal("gains", params.gains, {N, F, M});
  archive.PutReal("psd", params.psd, {N, F, T});
  PutMask(archive, "masks", params.masks);
  archive.metadata["N"] = N;
  archive.metadata["floor"] = params.psd_floor;
  if (nmf) {
    archive.PutReal("nmf_basis", nmf->basis, {N, F, nmf->num_basis});
    archive.PutReal("nmf_activation", nmf->activation, {N, nmf->num_basis, T});
    archive.metadata["K"] = nmf->num_basis;
  }
}

JdParams GetJdParams(const ArrayArchive &archive) {
  const NamedArray &qa = archive.Get("diagonalizers");
  const NamedArray &ga = archive.Get("gains");
  const NamedArray &pa = archive.Get("psd");
  if (qa.shape.size() != 3 || ga.shape.size() != 3 || pa.shape.size() != 3)
    throw Error(ErrorCode::kManifestMismatch, "JD parameter arrays must be 3-D");
  const std::size_t F = qa.shape[0], M = qa.shape[1], N = ga.shape[0], T = pa.shape[2];
  JdParams p(N, F, T, M);
  const auto q = archive.GetComplex("diagonalizers", {F, M, M});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t r = 0; r < M; ++r)
      for (std::size_t c = 0; c < M; ++c) p.diagonalizers[f](r, c) = q[(f * M + r) * M + c];
  p.gains = archive.GetReal("gains", {N, F, M});
  p.psd = archive.GetReal("psd", {N, F, T});
  p.masks = GetMask(archive, "masks");
  p.psd_floor = archive.metadata.value("floor", 1e-10);
  p.Validate();
  return p;
}

}  // namespace mcsep
