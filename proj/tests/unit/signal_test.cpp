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


#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

#include "pavits/error.hpp"
#include "pavits/signal.hpp"

namespace pavits::signal {
namespace {

namespace fs = std::filesystem;

Waveform sine(double hz, double seconds, double amp = 0.5, int sr = kDefaultSampleRate) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2.0 * std::numbers::pi * hz * i / sr));
  return w;
}

Waveform white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(d(rng));
  return w;
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "pavits_signal_test";
  fs::create_directories(dir);
  return dir / name;
}

// ---- oracles ----------------------------------------------------------------

// Direct O(N^2) DFT magnitude of one analysis frame.
std::vector<double> naive_frame_magnitude(const Waveform& w, const FrameConfig& cfg, Index t) {
  const auto src = framed_source(w.samples, cfg);
  const auto win = analysis_window(cfg);
  std::vector<double> mag(static_cast<std::size_t>(cfg.bins()));
  for (int k = 0; k < cfg.bins(); ++k) {
    std::complex<double> acc = 0.0;
    for (int n = 0; n < cfg.fft_size; ++n) {
      const double v = src[static_cast<std::size_t>(t * cfg.hop + n)] * win[static_cast<std::size_t>(n)];
      acc += v * std::polar(1.0, -2.0 * std::numbers::pi * k * n / cfg.fft_size);
    }
    mag[static_cast<std::size_t>(k)] = std::abs(acc);
  }
  return mag;
}

// Peak normalized autocorrelation over the 50-600 Hz lag band, computed the slow way.
double naive_peak_periodicity(const std::vector<double>& frame, int sr) {
  std::vector<double> x = frame;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double& v : x) v -= mean;
  const int n = static_cast<int>(x.size());
  double peak = -1.0;
  for (int lag = static_cast<int>(std::floor(sr / kF0Max)); lag <= static_cast<int>(std::ceil(sr / kF0Min)); ++lag) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (int i = 0; i + lag < n; ++i) {
      xy += x[i] * x[i + lag];
      xx += x[i] * x[i];
      yy += x[i + lag] * x[i + lag];
    }
    if (xx > 0.0 && yy > 0.0) peak = std::max(peak, xy / std::sqrt(xx * yy));
  }
  return peak;
}

double brute_force_dtw(const Matrix& a, const Matrix& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(Index, Index, double)> walk = [&](Index i, Index j, double acc) {
    acc += (a.col(i) - b.col(j)).norm();
    if (i == a.cols() - 1 && j == b.cols() - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < a.cols()) walk(i + 1, j, acc);
    if (j + 1 < b.cols()) walk(i, j + 1, acc);
    if (i + 1 < a.cols() && j + 1 < b.cols()) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

Matrix random_frames(Index dims, Index frames, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(dims, frames);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// ---- audio I/O --------------------------------------------------------------

TEST(AudioIo, SineRoundTripWithinQuantization) {
  const Waveform w = sine(440.0, 1.0, 0.9);
  const auto path = temp_path("sine.wav");
  save_wav(path, w);
  const Waveform r = load_wav(path);
  ASSERT_EQ(r.size(), w.size());
  EXPECT_EQ(r.sample_rate, w.sample_rate);
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) worst = std::max(worst, std::abs(r.samples[i] - w.samples[i]));
  EXPECT_LE(worst, 2.0 / 32768.0);
}

TEST(AudioIo, ZeroRoundTripAndLoadNormalization) {
  Waveform w;
  w.samples.assign(1000, 0.0);
  const auto path = temp_path("zero.wav");
  save_wav(path, w);
  for (double s : load_wav(path).samples) EXPECT_EQ(s, 0.0);

  Waveform loud;
  loud.samples = {1.0, -1.0, 2.0, -3.0};
  save_wav(path, loud);
  for (double s : load_wav(path).samples) EXPECT_LE(std::abs(s), 1.0);
}

TEST(AudioIo, RejectsStereoMissingAndEmpty) {
  // Hand-written 2-channel header.
  const auto stereo = temp_path("stereo.wav");
  {
    std::ofstream f(stereo, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    f.write("RIFF", 4); u32(36 + 8); f.write("WAVE", 4);
    f.write("fmt ", 4); u32(16); u16(1); u16(2); u32(22050); u32(22050 * 4); u16(4); u16(16);
    f.write("data", 4); u32(8); u32(0); u32(0);
  }
  try {
    load_wav(stereo);
    FAIL() << "stereo accepted";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("mono required"), std::string::npos);
  }
  EXPECT_THROW(load_wav(temp_path("does_not_exist.wav")), InputError);

  const auto empty = temp_path("empty.wav");
  {
    std::ofstream f(empty, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    f.write("RIFF", 4); u32(36); f.write("WAVE", 4);
    f.write("fmt ", 4); u32(16); u16(1); u16(1); u32(22050); u32(22050 * 2); u16(2); u16(16);
    f.write("data", 4); u32(0);
  }
  EXPECT_THROW(load_wav(empty), InputError);

  const auto floaty = temp_path("float.wav");
  {
    std::ofstream f(floaty, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    f.write("RIFF", 4); u32(36 + 4); f.write("WAVE", 4);
    f.write("fmt ", 4); u32(16); u16(3); u16(1); u32(22050); u32(22050 * 4); u16(4); u16(32);
    f.write("data", 4); u32(4); u32(0);
  }
  EXPECT_THROW(load_wav(floaty), InputError);
}

// ---- spectra ----------------------------------------------------------------

TEST(LinearSpectrogram, ZeroSignalIsZero) {
  Waveform w;
  w.samples.assign(3000, 0.0);
  for (const FrameConfig& cfg : {FrameConfig{}, FrameConfig{512, 400, 128, true}}) {
    const auto s = linear_spectrogram(w, cfg);
    EXPECT_EQ(s.mag.rows(), cfg.bins());
    EXPECT_EQ(s.mag.maxCoeff(), 0.0);
  }
}

TEST(LinearSpectrogram, FrameCountLaw) {
  Waveform w;
  w.samples.assign(2560, 0.1);
  EXPECT_EQ(linear_spectrogram(w, FrameConfig{}).frames(), 11);
  for (std::size_t len : {1u, 7u, 255u, 256u, 257u, 511u, 513u, 5000u}) {
    Waveform v = white_noise(len, len);
    const FrameConfig cfg;
    const Index expected = static_cast<Index>(len) / cfg.hop + 1;
    EXPECT_EQ(linear_spectrogram(v, cfg).frames(), expected);
    EXPECT_EQ(log_mel(v, cfg).frames(), expected);
    EXPECT_EQ(static_cast<Index>(extract_f0(v, cfg).size()), expected);
    EXPECT_EQ(mel_cepstra(v, cfg).frames(), expected);
  }
}

TEST(LinearSpectrogram, BinCenteredSineMatchesDftOracle) {
  const FrameConfig cfg;
  const int k = 37;
  const double hz = static_cast<double>(k) * kDefaultSampleRate / cfg.fft_size;
  const Waveform w = sine(hz, 0.25);
  const auto s = linear_spectrogram(w, cfg);
  for (Index t = 0; t < s.frames(); ++t) {
    const auto oracle = naive_frame_magnitude(w, cfg, t);
    for (int b = 0; b < cfg.bins(); ++b) EXPECT_NEAR(s.mag(b, t), oracle[static_cast<std::size_t>(b)], 1e-8);
    // Frames overlapping the reflected edges are not pure tones.
    const Index start = t * cfg.hop - cfg.fft_size / 2;
    if (start < 0 || start + cfg.fft_size > static_cast<Index>(w.size())) continue;
    Index argmax = 0;
    s.mag.col(t).maxCoeff(&argmax);
    EXPECT_EQ(argmax, k);
    const auto oracle_arg = std::max_element(oracle.begin(), oracle.end()) - oracle.begin();
    EXPECT_EQ(oracle_arg, k);
  }
}

TEST(LinearSpectrogram, Linearity) {
  const Waveform w = white_noise(4000, 3);
  Waveform scaled = w;
  for (double& v : scaled.samples) v *= 2.5;
  const auto a = linear_spectrogram(w, {});
  const auto b = linear_spectrogram(scaled, {});
  EXPECT_LT((b.mag - 2.5 * a.mag).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(MelFromLinear, ZeroSpectrogramHitsFloor) {
  LinearSpectrogram s{Matrix::Zero(513, 4)};
  const auto m = mel_from_linear(s);
  EXPECT_EQ(m.logmel.rows(), kMelBands);
  for (Index i = 0; i < m.logmel.size(); ++i) EXPECT_DOUBLE_EQ(m.logmel.data()[i], std::log(kLogFloor));
}

TEST(MelFromLinear, ScalingAddsLogTwoAboveFloor) {
  const auto s = linear_spectrogram(white_noise(3000, 5), {});
  LinearSpectrogram doubled{s.mag * 2.0};
  const auto a = mel_from_linear(s);
  const auto b = mel_from_linear(doubled);
  for (Index i = 0; i < a.logmel.size(); ++i) {
    if (a.logmel.data()[i] > std::log(kLogFloor)) EXPECT_NEAR(b.logmel.data()[i] - a.logmel.data()[i], std::log(2.0), 1e-12);
  }
}

TEST(MelFromLinear, SingleBinImpulseOnlyLightsCoveringBands) {
  // Independent filterbank support: band m covers frequency f iff lo < f < hi.
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const int sr = kDefaultSampleRate, n_fft = 1024;
  for (int bin : {1, 5, 40, 200, 480}) {
    LinearSpectrogram s{Matrix::Zero(513, 1)};
    s.mag(bin, 0) = 1.0;
    const auto out = mel_from_linear(s, sr);
    const double f = static_cast<double>(bin) * sr / n_fft;
    int lit = 0;
    for (int m = 0; m < kMelBands; ++m) {
      const double lo = hz(mel(sr / 2.0) * m / (kMelBands + 1));
      const double hi = hz(mel(sr / 2.0) * (m + 2) / (kMelBands + 1));
      const bool covers = f > lo && f < hi;
      const bool above = out.logmel(m, 0) > std::log(kLogFloor);
      EXPECT_EQ(covers, above) << "bin " << bin << " band " << m;
      lit += above;
    }
    EXPECT_GE(lit, 1);
  }
}

// ---- pitch ------------------------------------------------------------------

TEST(ExtractF0, Sine220) {
  const auto track = extract_f0(sine(220.0, 1.0), {});
  ASSERT_GT(track.voiced_count(), track.size() * 9 / 10);
  for (std::size_t t = 0; t < track.size(); ++t) {
    if (track.voiced[t]) EXPECT_NEAR(track.f0[t], 220.0, 5.0);
  }
}

TEST(ExtractF0, SilenceIsUnvoiced) {
  Waveform w;
  w.samples.assign(22050, 0.0);
  const auto track = extract_f0(w, {});
  EXPECT_EQ(track.voiced_count(), 0u);
  for (double f : track.f0) EXPECT_EQ(f, 0.0);
}

TEST(ExtractF0, WhiteNoiseMostlyUnvoiced) {
  const FrameConfig cfg;
  const Waveform w = white_noise(22050, 42);
  const auto track = extract_f0(w, cfg);
  const auto src = framed_source(w.samples, cfg);
  std::size_t oracle_unvoiced = 0;
  for (std::size_t t = 0; t < track.size(); ++t) {
    std::vector<double> frame(src.begin() + t * cfg.hop, src.begin() + t * cfg.hop + cfg.fft_size);
    if (naive_peak_periodicity(frame, w.sample_rate) < kVoicingThreshold) {
      ++oracle_unvoiced;
      EXPECT_FALSE(track.voiced[t]) << "frame " << t;
    }
  }
  EXPECT_GE(oracle_unvoiced * 10, track.size() * 9);
  EXPECT_GE((track.size() - track.voiced_count()) * 10, track.size() * 9);
}

TEST(ExtractF0, PureTonesAcrossRange) {
  for (double hz = 100.0; hz <= 400.0; hz += 25.0) {
    const auto track = extract_f0(sine(hz, 0.5, 0.3), {});
    std::size_t good = 0;
    for (std::size_t t = 0; t < track.size(); ++t) {
      if (track.voiced[t] && std::abs(track.f0[t] - hz) <= 5.0) ++good;
    }
    ASSERT_GT(track.voiced_count(), 0u);
    EXPECT_GE(good * 100, track.voiced_count() * 95) << hz << " Hz";
  }
}

TEST(ExtractF0, VoicedFramesRespectBand) {
  Waveform mix = sine(130.0, 0.5, 0.3);
  const Waveform noise = white_noise(mix.size(), 7);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += 0.2 * noise.samples[i];
  const auto track = extract_f0(mix, {});
  for (std::size_t t = 0; t < track.size(); ++t) {
    if (track.voiced[t]) {
      EXPECT_GE(track.f0[t], kF0Min);
      EXPECT_LE(track.f0[t], kF0Max);
    } else {
      EXPECT_EQ(track.f0[t], 0.0);
    }
  }
}

// ---- cepstra --------------------------------------------------------------

TEST(MelCepstra, DeterministicAndZeroForSilence) {
  const Waveform w = white_noise(5000, 9);
  EXPECT_EQ(mel_cepstra(w, {}).coeffs, mel_cepstra(w, {}).coeffs);
  Waveform z;
  z.samples.assign(3000, 0.0);
  const auto c = mel_cepstra(z, {});
  EXPECT_EQ(c.coeffs.rows(), kCepstralOrder);
  EXPECT_LT(c.coeffs.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(MelCepstra, MatchesNaiveDct) {
  MelSpectrogram mel{Matrix(kMelBands, 2)};
  for (int i = 0; i < kMelBands; ++i) {
    mel.logmel(i, 0) = std::sin(0.3 * i) - 2.0;
    mel.logmel(i, 1) = 0.01 * i * i - 5.0;
  }
  const auto c = cepstra_from_log_mel(mel);
  const int n = kMelBands;
  for (Index t = 0; t < 2; ++t) {
    for (int k = 1; k <= kCepstralOrder; ++k) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += mel.logmel(i, t) * std::cos(std::numbers::pi / n * (i + 0.5) * k);
      EXPECT_NEAR(c.coeffs(k - 1, t), std::sqrt(2.0 / n) * acc, 1e-10);
    }
  }
}

// ---- DTW and MCD -------------------------------------------------------------

TEST(Dtw, IdenticalSequencesGiveDiagonal) {
  std::mt19937_64 rng(1);
  const Matrix a = random_frames(13, 6, rng);
  const auto r = dtw(a, a);
  EXPECT_EQ(r.cost, 0.0);
  ASSERT_EQ(r.path.size(), 6u);
  for (std::size_t i = 0; i < r.path.size(); ++i) {
    EXPECT_EQ(r.path[i].first, static_cast<Index>(i));
    EXPECT_EQ(r.path[i].second, static_cast<Index>(i));
  }
}

TEST(Dtw, MatchesBruteForce3x5) {
  std::mt19937_64 rng(77);
  const Matrix a = random_frames(4, 3, rng);
  const Matrix b = random_frames(4, 5, rng);
  EXPECT_NEAR(dtw(a, b).cost, brute_force_dtw(a, b), 1e-12);
}

TEST(Dtw, PropertyBruteForceSymmetryAndPathShape) {
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    std::mt19937_64 rng(seed);
    const Index ta = 1 + static_cast<Index>(rng() % 5);
    const Index tb = 1 + static_cast<Index>(rng() % 6);
    const Matrix a = random_frames(3, ta, rng);
    const Matrix b = random_frames(3, tb, rng);
    const auto r = dtw(a, b);
    EXPECT_NEAR(r.cost, brute_force_dtw(a, b), 1e-10) << "seed " << seed;
    EXPECT_NEAR(r.cost, dtw(b, a).cost, 1e-12);
    ASSERT_EQ(r.path.front(), std::make_pair(Index{0}, Index{0}));
    ASSERT_EQ(r.path.back(), std::make_pair(ta - 1, tb - 1));
    double along = 0.0;
    for (std::size_t i = 0; i < r.path.size(); ++i) {
      along += (a.col(r.path[i].first) - b.col(r.path[i].second)).norm();
      if (i == 0) continue;
      const Index di = r.path[i].first - r.path[i - 1].first;
      const Index dj = r.path[i].second - r.path[i - 1].second;
      EXPECT_TRUE((di == 1 && dj == 0) || (di == 0 && dj == 1) || (di == 1 && dj == 1));
    }
    EXPECT_NEAR(along, r.cost, 1e-10);
  }
}

TEST(Dtw, EmptySequenceRejected) {
  EXPECT_THROW(dtw(Matrix(3, 0), Matrix::Zero(3, 2)), InputError);
}

TEST(Mcd, UnitVectorSingleFrame) {
  CepstraSequence a{Matrix::Zero(kCepstralOrder, 1)};
  CepstraSequence b{Matrix::Zero(kCepstralOrder, 1)};
  b.coeffs(4, 0) = 1.0;
  EXPECT_NEAR(mcd_from_cepstra(a, b), 10.0 * std::sqrt(2.0) / std::log(10.0), 1e-12);
  EXPECT_NEAR(mcd_from_cepstra(a, b), 6.1418, 1e-3);
}

TEST(Mcd, IdentitySymmetryNonNegativity) {
  const Waveform x = sine(180.0, 0.4);
  Waveform y = white_noise(8000, 11);
  EXPECT_EQ(mcd(x, x), 0.0);
  EXPECT_EQ(mcd(y, y), 0.0);
  const double xy = mcd(x, y), yx = mcd(y, x);
  EXPECT_GT(xy, 0.0);
  EXPECT_NEAR(xy, yx, 1e-9);
}

TEST(Mcd, SampleRateMismatch) {
  Waveform a = sine(200.0, 0.1);
  Waveform b = a;
  b.sample_rate = 16000;
  EXPECT_THROW(mcd(a, b), InputError);
}

// ---- feature cache -------------------------------------------------------------

TEST(FeatureCache, BitExactRoundTripAndCorruption) {
  const Waveform w = sine(150.0, 0.3);
  const auto rec = compute_features("utt_001", w, {});
  const auto path = temp_path("utt_001.feat");
  write_feature_record(path, rec);
  const auto back = read_feature_record(path);
  EXPECT_EQ(back.id, rec.id);
  EXPECT_EQ(back.linear.mag, rec.linear.mag);
  EXPECT_EQ(back.mel.logmel, rec.mel.logmel);
  EXPECT_EQ(back.f0.f0, rec.f0.f0);
  EXPECT_EQ(back.f0.voiced, rec.f0.voiced);
  EXPECT_EQ(back.cepstra.coeffs, rec.cepstra.coeffs);

  const auto size = fs::file_size(path);
  fs::resize_file(path, size / 2);
  EXPECT_THROW(read_feature_record(path), InputError);
}

}  // namespace
}  // namespace pavits::signal
