// Copyright 2026 The pavits-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pavits/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "fft.hpp"
#include "pavits/error.hpp"

namespace pavits::signal {

void FrameConfig::validate() const {
  if (fft_size <= 0 || win_size <= 0 || hop <= 0) throw InputError("frame config: sizes must be positive");
  if (hop > win_size || win_size > fft_size) throw InputError("frame config: need hop <= win_size <= fft_size");
  if (fft_size % 2 != 0) throw InputError("frame config: fft_size must be even");
}

Index FrameConfig::frame_count(std::size_t length) const {
  const auto len = static_cast<Index>(length);
  if (center_pad) return len / hop + 1;
  if (len < fft_size) return 0;
  return (len - fft_size) / hop + 1;
}

std::size_t F0Track::voiced_count() const {
  return static_cast<std::size_t>(std::count(voiced.begin(), voiced.end(), std::uint8_t{1}));
}

double F0Track::mean_voiced() const {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f0.size(); ++i) {
    if (voiced[i]) {
      acc += f0[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

Index reflect_index(Index position, Index length) {
  if (length <= 1) return 0;
  const Index period = 2 * (length - 1);
  Index m = position % period;
  if (m < 0) m += period;
  return m < length ? m : period - m;
}

std::vector<double> analysis_window(const FrameConfig& cfg) {
  std::vector<double> w(static_cast<std::size_t>(cfg.fft_size), 0.0);
  const int offset = (cfg.fft_size - cfg.win_size) / 2;
  for (int n = 0; n < cfg.win_size; ++n) {
    w[static_cast<std::size_t>(offset + n)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(cfg.win_size));
  }
  return w;
}

std::vector<double> framed_source(std::span<const double> samples, const FrameConfig& cfg) {
  const auto len = static_cast<Index>(samples.size());
  if (!cfg.center_pad) return {samples.begin(), samples.end()};
  const Index pad = cfg.fft_size / 2;
  std::vector<double> out(static_cast<std::size_t>(len + 2 * pad));
  for (Index i = 0; i < len + 2 * pad; ++i) {
    out[static_cast<std::size_t>(i)] = samples[static_cast<std::size_t>(reflect_index(i - pad, len))];
  }
  return out;
}

Matrix stft_magnitude(std::span<const double> samples, const FrameConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw InputError("stft: empty signal");
  const Index frames = cfg.frame_count(samples.size());
  if (frames <= 0) throw InputError("stft: signal shorter than one frame");
  const std::vector<double> src = framed_source(samples, cfg);
  const std::vector<double> window = analysis_window(cfg);
  const detail::RealFft fft(cfg.fft_size);
  const int bins = cfg.bins();

  Matrix mag(bins, frames);
  std::vector<double> buf(static_cast<std::size_t>(cfg.fft_size));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins));
  for (Index t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t * cfg.hop);
    for (int n = 0; n < cfg.fft_size; ++n) buf[n] = src[start + n] * window[n];
    fft.forward(buf.data(), spec.data());
    for (int k = 0; k < bins; ++k) mag(k, t) = std::abs(spec[k]);
  }
  return mag;
}

LinearSpectrogram linear_spectrogram(const Waveform& w, const FrameConfig& cfg) {
  return {stft_magnitude(w.samples, cfg)};
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Matrix mel_filterbank(int sample_rate, int fft_size, int n_mels) {
  const int bins = fft_size / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));

  Matrix fb = Matrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double rise = (f - lo) / (center - lo);
      const double fall = (hi - f) / (hi - center);
      fb(m, k) = std::max(0.0, std::min(rise, fall));
    }
    const double area = fb.row(m).sum();
    if (area > 0.0) fb.row(m) /= area;
  }
  return fb;
}

MelSpectrogram mel_from_linear(const LinearSpectrogram& s, int sample_rate) {
  const int fft_size = static_cast<int>(s.mag.rows() - 1) * 2;
  const Matrix fb = mel_filterbank(sample_rate, fft_size);
  Matrix mel = fb * s.mag;
  mel = mel.unaryExpr([](double v) { return std::log(std::max(v, kLogFloor)); });
  return {std::move(mel)};
}

MelSpectrogram log_mel(const Waveform& w, const FrameConfig& cfg) {
  return mel_from_linear(linear_spectrogram(w, cfg), w.sample_rate);
}

// ---------------------------------------------------------------------------

F0Track AutocorrelationF0Tracker::track(const Waveform& w, const FrameConfig& cfg) const {
  cfg.validate();
  if (w.empty()) throw InputError("extract_f0: empty waveform");
  const Index frames = cfg.frame_count(w.size());
  const std::vector<double> src = framed_source(w.samples, cfg);
  const int n = cfg.fft_size;
  const double sr = static_cast<double>(w.sample_rate);
  const int lag_min = std::max(2, static_cast<int>(std::floor(sr / kF0Max)));
  const int lag_max = std::min(n - 2, static_cast<int>(std::ceil(sr / kF0Min)));

  // Raw autocorrelation through a 2n-point FFT (no circular wrap).
  const detail::RealFft fft(2 * n);
  std::vector<double> buf(static_cast<std::size_t>(2 * n));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n + 1));
  std::vector<double> acf(static_cast<std::size_t>(2 * n));
  std::vector<double> energy(static_cast<std::size_t>(n + 1));  // prefix sums of x^2
  std::vector<double> r(static_cast<std::size_t>(lag_max + 2));

  F0Track out;
  out.f0.assign(static_cast<std::size_t>(frames), 0.0);
  out.voiced.assign(static_cast<std::size_t>(frames), 0);

  for (Index t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t * cfg.hop);
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += src[start + i];
    mean /= n;
    std::fill(buf.begin(), buf.end(), 0.0);
    energy[0] = 0.0;
    for (int i = 0; i < n; ++i) {
      buf[i] = src[start + i] - mean;
      energy[i + 1] = energy[i] + buf[i] * buf[i];
    }
    if (energy[n] < 1e-10 * n) continue;

    fft.forward(buf.data(), spec.data());
    for (auto& c : spec) c = std::norm(c);
    fft.inverse(spec.data(), acf.data());
    const double inv = 1.0 / (2.0 * n);

    for (int lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      const double head = energy[n - lag];               // x[0 .. n-lag)
      const double tail = energy[n] - energy[lag];       // x[lag .. n)
      const double denom = std::sqrt(head * tail);
      r[lag] = denom > 0.0 ? acf[lag] * inv / denom : 0.0;
    }

    double peak = -1.0;
    for (int lag = lag_min; lag <= lag_max; ++lag) peak = std::max(peak, r[lag]);
    if (peak < kVoicingThreshold) continue;

    // Smallest-lag local maximum close to the global peak avoids octave-down picks.
    int best = -1;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] >= 0.9 * peak && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
        best = lag;
        break;
      }
    }
    if (best < 0 || r[best] < kVoicingThreshold) continue;

    double shift = 0.0;
    const double denom = r[best - 1] - 2.0 * r[best] + r[best + 1];
    if (denom < 0.0) shift = 0.5 * (r[best - 1] - r[best + 1]) / denom;
    const double f0 = std::clamp(sr / (best + shift), kF0Min, kF0Max);
    out.f0[static_cast<std::size_t>(t)] = f0;
    out.voiced[static_cast<std::size_t>(t)] = 1;
  }
  return out;
}

F0Track extract_f0(const Waveform& w, const FrameConfig& cfg) {
  return AutocorrelationF0Tracker{}.track(w, cfg);
}

F0Track extract_f0(const Waveform& w, const FrameConfig& cfg, const F0Tracker& tracker) {
  return tracker.track(w, cfg);
}

// ---------------------------------------------------------------------------

namespace {

Matrix dct_basis(int n_in, int first, int count) {
  Matrix basis(count, n_in);
  const double scale = std::sqrt(2.0 / n_in);
  for (int k = 0; k < count; ++k) {
    for (int i = 0; i < n_in; ++i) {
      basis(k, i) = scale * std::cos(std::numbers::pi * (first + k) * (2.0 * i + 1.0) / (2.0 * n_in));
    }
  }
  return basis;
}

}  // namespace

CepstraSequence cepstra_from_log_mel(const MelSpectrogram& mel) {
  const Matrix basis = dct_basis(static_cast<int>(mel.logmel.rows()), 1, kCepstralOrder);
  return {basis * mel.logmel};
}

CepstraSequence mel_cepstra(const Waveform& w, const FrameConfig& cfg) {
  return cepstra_from_log_mel(log_mel(w, cfg));
}

DtwResult dtw(const Matrix& a, const Matrix& b) {
  const Index ta = a.cols(), tb = b.cols();
  if (ta == 0 || tb == 0) throw InputError("dtw: empty sequence");
  if (a.rows() != b.rows()) throw InputError("dtw: feature dimension mismatch");

  Matrix dist(ta, tb);
  for (Index i = 0; i < ta; ++i) {
    for (Index j = 0; j < tb; ++j) dist(i, j) = (a.col(i) - b.col(j)).norm();
  }
  const double inf = std::numeric_limits<double>::infinity();
  Matrix acc = Matrix::Constant(ta, tb, inf);
  for (Index i = 0; i < ta; ++i) {
    for (Index j = 0; j < tb; ++j) {
      double best = (i == 0 && j == 0) ? 0.0 : inf;
      if (i > 0 && j > 0) best = std::min(best, acc(i - 1, j - 1));
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      acc(i, j) = best + dist(i, j);
    }
  }

  DtwResult result;
  result.cost = acc(ta - 1, tb - 1);
  Index i = ta - 1, j = tb - 1;
  result.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    // Diagonal first on ties, then the step that consumes the longer remainder.
    if (i > 0 && j > 0) {
      const double d = acc(i - 1, j - 1), up = acc(i - 1, j), left = acc(i, j - 1);
      if (d <= up && d <= left) {
        --i;
        --j;
      } else if (up < left || (up == left && i >= j)) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    result.path.emplace_back(i, j);
  }
  std::reverse(result.path.begin(), result.path.end());
  return result;
}

double mcd_from_cepstra(const CepstraSequence& ref, const CepstraSequence& conv) {
  const DtwResult aligned = dtw(ref.coeffs, conv.coeffs);
  double total = 0.0;
  for (const auto& [i, j] : aligned.path) total += (ref.coeffs.col(i) - conv.coeffs.col(j)).norm();
  return kMcdScale * total / static_cast<double>(aligned.path.size());
}

double mcd(const Waveform& ref, const Waveform& conv, const FrameConfig& cfg) {
  if (ref.empty() || conv.empty()) throw InputError("mcd: empty waveform");
  if (ref.sample_rate != conv.sample_rate) {
    throw InputError("mcd: sample-rate mismatch (" + std::to_string(ref.sample_rate) + " vs " +
                     std::to_string(conv.sample_rate) + ")");
  }
  return mcd_from_cepstra(mel_cepstra(ref, cfg), mel_cepstra(conv, cfg));
}

}  // namespace pavits::signal
